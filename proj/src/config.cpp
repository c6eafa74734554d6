#include "mmasr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mmasr {

namespace {

template <typename T>
T parse_value(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ParameterError("key '" + std::string(key) + "': invalid value '" + std::string(value) + "'");
  return out;
}

template <>
bool parse_value<bool>(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParameterError("key '" + std::string(key) + "': expected true or false, got '" + std::string(value) + "'");
}

template <>
std::string parse_value<std::string>(std::string_view, std::string_view value) {
  return std::string(value);
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  } else {
    return std::to_string(v);
  }
}

std::array<double, 3> parse_triple(std::string_view key, std::string_view value) {
  std::array<double, 3> out{};
  std::vector<std::string> parts;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() == 1) parts.assign(3, parts[0]);
  if (parts.size() != 3) throw ParameterError("key '" + std::string(key) + "': expected 1 or 3 comma-separated values");
  for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = parse_value<double>(key, parts[static_cast<std::size_t>(i)]);
  return out;
}

std::string format_triple(const std::array<double, 3>& v) {
  return format_value(v[0]) + "," + format_value(v[1]) + "," + format_value(v[2]);
}

struct Field {
  std::function<void(ExperimentConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T, typename Ref>
Field scalar(Ref ref) {
  return {[ref](ExperimentConfig& c, std::string_view k, std::string_view v) { ref(c) = parse_value<T>(k, v); },
          [ref](const ExperimentConfig& c) { return format_value<T>(ref(const_cast<ExperimentConfig&>(c))); }};
}

#define MMASR_FIELD(type, key, member) \
  {key, scalar<type>([](ExperimentConfig& c) -> type& { return c.member; })}

ComponentSpec& component(ExperimentConfig& c, Component which) { return c.components[which]; }

std::string component_get(const ExperimentConfig& c, Component which, const std::string& what) {
  auto it = c.components.find(which);
  const ComponentSpec spec = it == c.components.end() ? ComponentSpec{} : it->second;
  if (what == "init") return std::string(to_string(spec.init));
  if (what == "train") return std::string(to_string(spec.train));
  return spec.path.string();
}

void component_set(ExperimentConfig& c, Component which, const std::string& what, std::string_view key,
                   std::string_view value) {
  ComponentSpec& spec = component(c, which);
  if (what == "init") {
    if (value == "random") spec.init = ComponentInit::random;
    else if (value == "load") spec.init = ComponentInit::load;
    else throw ParameterError("key '" + std::string(key) + "': expected random or load");
  } else if (what == "train") {
    if (value == "frozen") spec.train = ComponentTrain::frozen;
    else if (value == "finetune") spec.train = ComponentTrain::finetune;
    else throw ParameterError("key '" + std::string(key) + "': expected frozen or finetune");
  } else {
    spec.path = std::string(value);
  }
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    for (const auto& [key, value] : ModelConfig{}.to_kv()) {
      (void)value;
      t.push_back({key, Field{[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                c.model.set(k, v);
                                c.features.n_mels = c.model.n_mels;
                                c.image.size = c.model.visual.image_size;
                              },
                              [key](const ExperimentConfig& c) { return c.model.to_kv().at(key); }}});
    }
    const std::vector<std::pair<std::string, Field>> rest = {
        MMASR_FIELD(std::uint64_t, "model.seed", model_seed),
        MMASR_FIELD(double, "features.frame_length_ms", features.frame.frame_length_ms),
        MMASR_FIELD(double, "features.frame_shift_ms", features.frame.frame_shift_ms),
        MMASR_FIELD(std::size_t, "features.fft_size", features.frame.fft_size),
        MMASR_FIELD(double, "features.f_min", features.f_min),
        MMASR_FIELD(double, "features.f_max", features.f_max),
        MMASR_FIELD(bool, "augment.enabled", augment_enabled),
        MMASR_FIELD(int, "augment.warp_window", augment.warp_window),
        MMASR_FIELD(int, "augment.freq_mask_width", augment.freq_mask_width),
        MMASR_FIELD(int, "augment.freq_masks", augment.n_freq_masks),
        MMASR_FIELD(int, "augment.time_mask_width", augment.time_mask_width),
        MMASR_FIELD(int, "augment.time_masks", augment.n_time_masks),
        MMASR_FIELD(double, "augment.time_mask_ratio", augment.time_mask_ratio),
        MMASR_FIELD(double, "schedule.lr_start", train.schedule.lr_start),
        MMASR_FIELD(double, "schedule.lr_peak", train.schedule.lr_peak),
        MMASR_FIELD(long, "schedule.warmup_steps", train.schedule.warmup_steps),
        MMASR_FIELD(double, "schedule.decay_exponent", train.schedule.decay_exponent),
        MMASR_FIELD(double, "adam.beta1", train.adam.beta1),
        MMASR_FIELD(double, "adam.beta2", train.adam.beta2),
        MMASR_FIELD(double, "adam.eps", train.adam.eps),
        MMASR_FIELD(int, "train.epochs", train.epochs),
        MMASR_FIELD(int, "train.batch_size", train.batch_size),
        MMASR_FIELD(std::uint64_t, "train.seed", train.seed),
        MMASR_FIELD(long, "train.max_steps", train.max_steps),
        MMASR_FIELD(double, "train.label_smoothing", train.label_smoothing),
        MMASR_FIELD(bool, "train.flip_images", train.flip_images),
        MMASR_FIELD(std::size_t, "train.keep_checkpoints", train.keep_checkpoints),
        MMASR_FIELD(std::string, "tokenizer.path", tokenizer_path),
        MMASR_FIELD(std::size_t, "tokenizer.vocab_size", tokenizer.target_size),
        MMASR_FIELD(std::size_t, "tokenizer.seed_max_len", tokenizer.seed_max_len),
        MMASR_FIELD(int, "tokenizer.em_iters", tokenizer.em_iters),
        MMASR_FIELD(double, "tokenizer.prune_fraction", tokenizer.prune_fraction),
        MMASR_FIELD(int, "decode.beam_size", decode.beam_size),
        MMASR_FIELD(int, "decode.max_len", decode.max_len),
        MMASR_FIELD(double, "decode.length_penalty", decode.length_penalty),
        MMASR_FIELD(std::size_t, "average.n", average_n),
        MMASR_FIELD(int, "visual_pretrain.epochs", visual_pretrain.epochs),
        MMASR_FIELD(int, "visual_pretrain.batch_size", visual_pretrain.batch_size),
        MMASR_FIELD(double, "visual_pretrain.lr", visual_pretrain.lr),
        MMASR_FIELD(std::uint64_t, "visual_pretrain.seed", visual_pretrain.seed),
        MMASR_FIELD(int, "visual_pretrain.per_class", visual_per_class),
        MMASR_FIELD(int, "synthetic.n_words", synthetic.n_words),
        MMASR_FIELD(int, "synthetic.n_homophone_pairs", synthetic.n_homophone_pairs),
        MMASR_FIELD(int, "synthetic.min_words", synthetic.min_words),
        MMASR_FIELD(int, "synthetic.max_words", synthetic.max_words),
        MMASR_FIELD(int, "synthetic.min_homophones", synthetic.min_homophones),
        MMASR_FIELD(int, "synthetic.max_homophones", synthetic.max_homophones),
        MMASR_FIELD(int, "synthetic.n_train", synthetic.n_train),
        MMASR_FIELD(int, "synthetic.n_val", synthetic.n_val),
        MMASR_FIELD(int, "synthetic.n_test", synthetic.n_test),
        MMASR_FIELD(int, "synthetic.sample_rate", synthetic.sample_rate),
        MMASR_FIELD(int, "synthetic.tones_per_word", synthetic.tones_per_word),
        MMASR_FIELD(double, "synthetic.tone_ms", synthetic.tone_ms),
        MMASR_FIELD(double, "synthetic.snr_db", synthetic.snr_db),
        MMASR_FIELD(int, "synthetic.image_size", synthetic.image_size),
        MMASR_FIELD(std::uint64_t, "synthetic.lexicon_seed", synthetic.lexicon_seed),
        MMASR_FIELD(std::uint64_t, "synthetic.seed", synthetic.seed),
    };
    t.insert(t.end(), rest.begin(), rest.end());
    t.push_back({"image.mean", Field{[](ExperimentConfig& c, std::string_view k,
                                        std::string_view v) { c.image.mean = parse_triple(k, v); },
                                     [](const ExperimentConfig& c) { return format_triple(c.image.mean); }}});
    t.push_back({"image.std", Field{[](ExperimentConfig& c, std::string_view k,
                                       std::string_view v) { c.image.stddev = parse_triple(k, v); },
                                    [](const ExperimentConfig& c) { return format_triple(c.image.stddev); }}});
    for (Component which : kAllComponents)
      for (std::string what : {"init", "path", "train"}) {
        const std::string key = "components." + std::string(to_string(which)) + "." + what;
        t.push_back({key, Field{[which, what](ExperimentConfig& c, std::string_view k,
                                              std::string_view v) { component_set(c, which, what, k, v); },
                                [which, what](const ExperimentConfig& c) { return component_get(c, which, what); }}});
      }
    return t;
  }();
  return table;
}

#undef MMASR_FIELD

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  for (const auto& [k, f] : fields())
    if (k == key) {
      f.set(*this, key, value);
      return;
    }
  throw ParameterError("unknown key '" + std::string(key) + "'");
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [key, f] : fields()) k.push_back(key);
    return k;
  }();
  return out;
}

std::string ExperimentConfig::dump() const {
  std::ostringstream out;
  for (const auto& [key, f] : fields()) out << key << " = " << f.get(*this) << '\n';
  return out.str();
}

void ExperimentConfig::validate() const {
  model.validate();
  augment.validate();
  train.schedule.validate();
  synthetic.validate();
  if (train.epochs < 1 || train.batch_size < 1) throw ParameterError("train: epochs and batch_size must be >= 1");
  if (train.label_smoothing < 0.0 || train.label_smoothing >= 1.0)
    throw ParameterError("train: label_smoothing must lie in [0, 1)");
  if (train.adam.beta1 < 0.0 || train.adam.beta1 >= 1.0 || train.adam.beta2 < 0.0 || train.adam.beta2 >= 1.0 ||
      train.adam.eps <= 0.0)
    throw ParameterError("adam: betas must lie in [0, 1) and eps must be positive");
  if (decode.beam_size < 1 || decode.max_len < 1) throw ParameterError("decode: beam_size and max_len must be >= 1");
  if (average_n < 1) throw ParameterError("average: n must be >= 1");
  if (tokenizer.target_size <= static_cast<std::size_t>(Vocabulary::kNumSpecials))
    throw ParameterError("tokenizer: vocab_size must exceed the special tokens");
  if (features.frame.frame_length_ms <= 0.0 || features.frame.frame_shift_ms <= 0.0)
    throw ParameterError("features: frame length and shift must be positive");
  for (const auto& [which, spec] : components)
    if (spec.init == ComponentInit::load && spec.path.empty())
      throw ParameterError("components." + std::string(to_string(which)) + ": init = load needs a path");
  if (visual_per_class < 1) throw ParameterError("visual_pretrain: per_class must be >= 1");
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = train;
  if (augment_enabled && !augment.is_identity()) t.augment = augment;
  else t.augment.reset();
  return t;
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ParameterError(where + ": expected 'key = value'");
    try {
      cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ParameterError& e) {
      throw ParameterError(where + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ParameterError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open config");
  return parse_config(in, path.string());
}

}  // namespace mmasr
