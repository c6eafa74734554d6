#include "mmasr/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmasr {

int subsampled_length(int frames) {
  const int half = (frames - 1) / 2 + 1;
  return (half - 1) / 2 + 1;
}

// --- config -----------------------------------------------------------------

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ParameterError("model config: " + what);
  };
  require(n_mels >= 4, "n_mels must be >= 4");
  require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(n_encoder_blocks >= 0 && n_decoder_blocks >= 1, "block counts out of range");
  require(ff_dim > 0, "ff_dim must be positive");
  require(vocab_size > Vocabulary::kNumSpecials, "vocab_size must exceed the special tokens");
  require(subsample_channels > 0, "subsample_channels must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(max_target_len >= 1, "max_target_len must be >= 1");
  require(fusion.audio_proj_dim > 0 && fusion.visual_proj_dim > 0, "fusion projection sizes must be positive");
  if (fusion.mode != FusionMode::none) visual.validate();
  require(fusion.mode == FusionMode::seq || visual.n_gmlp == 0, "gMLP layers are only used with seq fusion");
  require(fusion.mode != FusionMode::seq || visual.n_gmlp == 0 || visual.grid_size() > 1,
          "gMLP layers need a visual grid larger than 1x1");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ParameterError("config key '" + std::string(key) + "': invalid value '" + std::string(value) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParameterError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(value) +
                       "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"model.n_mels", std::to_string(n_mels)},
      {"model.d_model", std::to_string(d_model)},
      {"model.n_heads", std::to_string(n_heads)},
      {"model.n_encoder_blocks", std::to_string(n_encoder_blocks)},
      {"model.n_decoder_blocks", std::to_string(n_decoder_blocks)},
      {"model.ff_dim", std::to_string(ff_dim)},
      {"model.vocab_size", std::to_string(vocab_size)},
      {"model.subsample_channels", std::to_string(subsample_channels)},
      {"model.dropout", format_double(dropout)},
      {"model.max_target_len", std::to_string(max_target_len)},
      {"model.positional_encoding", positional_encoding ? "true" : "false"},
      {"model.fusion", std::string(to_string(fusion.mode))},
      {"model.fusion_audio_dim", std::to_string(fusion.audio_proj_dim)},
      {"model.fusion_visual_dim", std::to_string(fusion.visual_proj_dim)},
      {"model.visual_image_size", std::to_string(visual.image_size)},
      {"model.visual_stem_channels", std::to_string(visual.stem_channels)},
      {"model.visual_blocks", std::to_string(visual.n_blocks)},
      {"model.visual_dim", std::to_string(visual.embedding_dim)},
      {"model.gmlp_layers", std::to_string(visual.n_gmlp)},
  };
}

bool ModelConfig::set(std::string_view key, std::string_view value) {
  auto as_int = [&] { return parse_number<int>(key, value); };
  if (key == "model.n_mels") n_mels = as_int();
  else if (key == "model.d_model") d_model = as_int();
  else if (key == "model.n_heads") n_heads = as_int();
  else if (key == "model.n_encoder_blocks") n_encoder_blocks = as_int();
  else if (key == "model.n_decoder_blocks") n_decoder_blocks = as_int();
  else if (key == "model.ff_dim") ff_dim = as_int();
  else if (key == "model.vocab_size") vocab_size = as_int();
  else if (key == "model.subsample_channels") subsample_channels = as_int();
  else if (key == "model.dropout") dropout = parse_number<double>(key, value);
  else if (key == "model.max_target_len") max_target_len = as_int();
  else if (key == "model.positional_encoding") positional_encoding = parse_bool(key, value);
  else if (key == "model.fusion") fusion.mode = parse_fusion_mode(value);
  else if (key == "model.fusion_audio_dim") fusion.audio_proj_dim = as_int();
  else if (key == "model.fusion_visual_dim") fusion.visual_proj_dim = as_int();
  else if (key == "model.visual_image_size") visual.image_size = as_int();
  else if (key == "model.visual_stem_channels") visual.stem_channels = as_int();
  else if (key == "model.visual_blocks") visual.n_blocks = as_int();
  else if (key == "model.visual_dim") visual.embedding_dim = as_int();
  else if (key == "model.gmlp_layers") visual.n_gmlp = as_int();
  else return false;
  return true;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig cfg;
  for (const auto& [k, v] : kv)
    if (k.starts_with("model.") && !cfg.set(k, v)) throw ParameterError("unknown model key '" + k + "'");
  cfg.validate();
  return cfg;
}

std::string_view to_string(ComponentInit v) { return v == ComponentInit::random ? "random" : "load"; }
std::string_view to_string(ComponentTrain v) { return v == ComponentTrain::frozen ? "frozen" : "finetune"; }

// --- search -----------------------------------------------------------------

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void mask_unemittable(Eigen::VectorXd& lp) {
  if (lp.size() <= Vocabulary::kEos) throw DimensionError("search: vocabulary smaller than the special tokens");
  lp(Vocabulary::kPad) = kNegInf;
  lp(Vocabulary::kSos) = kNegInf;
}

}  // namespace

double normalized_score(const Hypothesis& h, double length_penalty) {
  if (length_penalty == 0.0 || h.ids.empty()) return h.score;
  return h.score / std::pow(static_cast<double>(h.ids.size()), length_penalty);
}

TokenSequence strip_eos(const Hypothesis& h) {
  TokenSequence out = h.ids;
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  return out;
}

Hypothesis greedy_search(const StepScorer& scorer, int max_len) {
  if (max_len < 1) throw PreconditionError("greedy search: max_len must be >= 1");
  TokenSequence prefix{Vocabulary::kSos};
  Hypothesis h;
  for (int step = 0; step < max_len; ++step) {
    Eigen::VectorXd lp = scorer(prefix);
    mask_unemittable(lp);
    Eigen::Index best = 0;
    lp.maxCoeff(&best);
    h.score += lp(best);
    h.ids.push_back(static_cast<int>(best));
    if (best == Vocabulary::kEos) {
      h.finished = true;
      break;
    }
    prefix.push_back(static_cast<int>(best));
  }
  return h;
}

Hypothesis beam_search(const StepScorer& scorer, int beam_size, int max_len, double length_penalty) {
  if (beam_size < 1) throw PreconditionError("beam search: beam_size must be >= 1");
  if (max_len < 1) throw PreconditionError("beam search: max_len must be >= 1");

  struct Candidate {
    double score;
    std::size_t parent;
    int token;
  };
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      TokenSequence prefix{Vocabulary::kSos};
      prefix.insert(prefix.end(), live[i].ids.begin(), live[i].ids.end());
      Eigen::VectorXd lp = scorer(prefix);
      mask_unemittable(lp);
      for (Eigen::Index v = 0; v < lp.size(); ++v)
        if (std::isfinite(lp(v))) cands.push_back({live[i].score + lp(v), i, static_cast<int>(v)});
    }
    const std::size_t keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis h = live[cands[c].parent];
      h.ids.push_back(cands[c].token);
      h.score = cands[c].score;
      if (cands[c].token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= static_cast<std::size_t>(beam_size)) break;
    // Without a length penalty scores only decrease, so once the best
    // finished hypothesis beats every live one nothing can overtake it.
    if (length_penalty == 0.0 && !finished.empty() && !live.empty()) {
      double best_finished = kNegInf;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      double best_live = kNegInf;
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      if (best_finished >= best_live) break;
    }
  }

  const auto& pool = finished.empty() ? live : finished;
  if (pool.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i)
    if (normalized_score(pool[i], length_penalty) > normalized_score(pool[best], length_penalty)) best = i;
  return pool[best];
}

// --- model ------------------------------------------------------------------

namespace {

Rng component_rng(std::uint64_t seed, Component c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(c) + 1u};
  return Rng(seq);
}

void check_tokens(std::span<const int> ids, int vocab, const char* what) {
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw IndexError(std::string(what) + ": token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
}

constexpr const char* kStatMean = "feature_mean";
constexpr const char* kStatStd = "feature_std";

}  // namespace

template <typename Scalar>
AsrModel<Scalar>::AsrModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d_model;
  const int ch = cfg_.subsample_channels;

  {
    Rng rng = component_rng(seed, Component::audio_encoder);
    const Component c = Component::audio_encoder;
    sub1_ = Conv2d<Scalar>::create(params_, "audio_encoder.subsample0", c, 1, ch, 3, 2, 1, rng);
    sub2_ = Conv2d<Scalar>::create(params_, "audio_encoder.subsample1", c, ch, ch, 3, 2, 1, rng);
    const int freq = subsampled_length(cfg_.n_mels);
    in_proj_ = Linear<Scalar>::create(params_, "audio_encoder.input", c, ch * freq, d, rng);
    // Undo the sqrt(d) input scaling at init so positions are not drowned out.
    in_proj_.weight->value /= static_cast<Scalar>(std::sqrt(static_cast<double>(d)));
    for (int b = 0; b < cfg_.n_encoder_blocks; ++b) {
      const std::string name = "audio_encoder.block" + std::to_string(b);
      enc_blocks_.push_back({LayerNorm<Scalar>::create(params_, name + ".attn_norm", c, d),
                             LayerNorm<Scalar>::create(params_, name + ".ff_norm", c, d),
                             MultiHeadAttention<Scalar>::create(params_, name + ".attn", c, d, cfg_.n_heads, rng),
                             FeedForward<Scalar>::create(params_, name + ".ff", c, d, cfg_.ff_dim, rng)});
    }
    enc_norm_ = LayerNorm<Scalar>::create(params_, "audio_encoder.norm", c, d);
  }
  if (multimodal()) {
    Rng rng = component_rng(seed, Component::visual_encoder);
    visual_.emplace(cfg_.visual, params_, rng);
  }
  {
    Rng rng = component_rng(seed, Component::fusion);
    fusion_ = Fusion<Scalar>(cfg_.fusion, d, cfg_.visual.embedding_dim, params_, rng);
  }
  {
    Rng rng = component_rng(seed, Component::decoder);
    const Component c = Component::decoder;
    embedding_ = &params_.add("decoder.embedding", c, 
                            normal_init<Scalar>(d, cfg_.vocab_size, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    for (int b = 0; b < cfg_.n_decoder_blocks; ++b) {
      const std::string name = "decoder.block" + std::to_string(b);
      dec_blocks_.push_back({LayerNorm<Scalar>::create(params_, name + ".self_norm", c, d),
                             LayerNorm<Scalar>::create(params_, name + ".cross_norm", c, d),
                             LayerNorm<Scalar>::create(params_, name + ".ff_norm", c, d),
                             MultiHeadAttention<Scalar>::create(params_, name + ".self_attn", c, d, cfg_.n_heads, rng),
                             MultiHeadAttention<Scalar>::create(params_, name + ".cross_attn", c, d, cfg_.n_heads, rng),
                             FeedForward<Scalar>::create(params_, name + ".ff", c, d, cfg_.ff_dim, rng)});
    }
    dec_norm_ = LayerNorm<Scalar>::create(params_, "decoder.norm", c, d);
    out_proj_ = Linear<Scalar>::create(params_, "decoder.output", c, d, cfg_.vocab_size, rng);
  }
}

template <typename Scalar>
AsrModel<Scalar> AsrModel<Scalar>::from_checkpoint(const Checkpoint& ckpt) {
  AsrModel model(ModelConfig::from_kv(ckpt.metadata), 0);
  import_parameters(model.params_, ckpt);
  for (const auto& rec : ckpt.params)
    if (auto* p = model.params_.find(rec.name)) p->trainable = rec.trainable;
  auto mean = ckpt.stats.find(kStatMean);
  auto sd = ckpt.stats.find(kStatStd);
  if (mean != ckpt.stats.end() && sd != ckpt.stats.end()) {
    FeatureStats st;
    auto to_vector = [](const Tensor& t) {
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(t.values().data(), static_cast<Eigen::Index>(t.size())));
    };
    st.mean = to_vector(mean->second);
    st.stddev = to_vector(sd->second);
    if (st.mean.size() != model.cfg_.n_mels || st.stddev.size() != model.cfg_.n_mels)
      throw CheckpointError("checkpoint: feature statistics do not match n_mels");
    model.stats_ = std::move(st);
  }
  return model;
}

template <typename Scalar>
Checkpoint AsrModel<Scalar>::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.metadata = cfg_.to_kv();
  export_parameters(params_, ckpt);
  if (!stats_.empty()) {
    auto vec_tensor = [](const Eigen::VectorXd& v) {
      return Tensor({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()),
                    DType::f64);
    };
    ckpt.stats[kStatMean] = vec_tensor(stats_.mean);
    ckpt.stats[kStatStd] = vec_tensor(stats_.stddev);
  }
  return ckpt;
}

template <typename Scalar>
VisualKind AsrModel<Scalar>::visual_kind() const {
  return cfg_.fusion.mode == FusionMode::seq ? VisualKind::grid : VisualKind::global;
}

template <typename Scalar>
Matrix<double> AsrModel<Scalar>::normalize(const Matrix<double>& features) const {
  return stats_.empty() ? features : stats_.apply(features);
}

template <typename Scalar>
Var<Scalar> AsrModel<Scalar>::audio_encode(Tape<Scalar>& tape, const Matrix<double>& features,
                                           Rng* dropout_rng) const {
  if (features.cols() != cfg_.n_mels)
    throw DimensionError("audio encoder: features have " + std::to_string(features.cols()) + " bins, expected " +
                         std::to_string(cfg_.n_mels));
  const int frames = static_cast<int>(features.rows());
  if (frames < kSubsampleFactor)
    throw LengthError("audio encoder: " + std::to_string(frames) + " frames is shorter than the subsampling factor " +
                      std::to_string(kSubsampleFactor));

  // One input channel laid out as a (mel x frame) plane.
  Matrix<Scalar> plane = features.transpose().cast<Scalar>();
  auto x = tape.constant(Eigen::Map<const Matrix<Scalar>>(plane.data(), 1, plane.size()));
  auto c1 = sub1_(tape, x, cfg_.n_mels, frames);
  auto h1 = relu(c1.values);
  auto c2 = sub2_(tape, h1, c1.height, c1.width);
  auto h2 = relu(c2.values);
  // channels x (freq * time) -> (channels * freq) x time
  auto seq = reshape(h2, static_cast<Eigen::Index>(cfg_.subsample_channels) * c2.height, c2.width);
  auto h = scale(in_proj_(tape, seq), std::sqrt(static_cast<double>(cfg_.d_model)));
  if (cfg_.positional_encoding)
    h = add(h, tape.constant(sinusoidal_positions<Scalar>(cfg_.d_model, c2.width)));
  if (dropout_rng && cfg_.dropout > 0.0) h = dropout(h, cfg_.dropout, *dropout_rng);
  return encoder_blocks(tape, h, dropout_rng);
}

template <typename Scalar>
Var<Scalar> AsrModel<Scalar>::encoder_blocks(Tape<Scalar>& tape, const Var<Scalar>& x, Rng* dropout_rng) const {
  const double p = dropout_rng ? cfg_.dropout : 0.0;
  Var<Scalar> h = x;
  for (const auto& blk : enc_blocks_) {
    auto n = blk.attn_norm(tape, h);
    h = add(h, blk.attn(tape, n, n, nullptr, p, dropout_rng));
    h = add(h, blk.ff(tape, blk.ff_norm(tape, h), p, dropout_rng));
  }
  return enc_norm_(tape, h);
}

template <typename Scalar>
std::optional<Var<Scalar>> AsrModel<Scalar>::visual_encode(Tape<Scalar>& tape,
                                                           const std::optional<VisualInput>& visual) const {
  if (!multimodal() || !visual) return std::nullopt;
  return visual_->encode(tape, *visual, visual_kind());
}

template <typename Scalar>
FusedSequence<Scalar> AsrModel<Scalar>::encode(Tape<Scalar>& tape, const Matrix<double>& features,
                                               const std::optional<VisualInput>& visual, Rng* dropout_rng) const {
  auto speech = audio_encode(tape, features, dropout_rng);
  if (multimodal() && !visual) throw std::invalid_argument("multimodal model: utterance has no visual input");
  return fusion_.fuse(tape, speech, visual_encode(tape, visual));
}

template <typename Scalar>
Var<Scalar> AsrModel<Scalar>::decoder_logits(Tape<Scalar>& tape, const Var<Scalar>& memory,
                                             std::span<const int> inputs, Rng* dropout_rng) const {
  if (inputs.empty()) throw PreconditionError("decoder: empty input prefix");
  if (inputs.size() > static_cast<std::size_t>(cfg_.max_target_len) + 1)
    throw LengthError("decoder: prefix of " + std::to_string(inputs.size()) + " tokens exceeds max_target_len " +
                      std::to_string(cfg_.max_target_len));
  check_tokens(inputs, cfg_.vocab_size, "decoder");
  if (memory.rows() != cfg_.d_model) throw DimensionError("decoder: memory rows differ from d_model");

  const auto len = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index d = cfg_.d_model;
  const Eigen::Index v = cfg_.vocab_size;
  auto index = std::make_shared<std::vector<std::ptrdiff_t>>(static_cast<std::size_t>(d * len));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index k = 0; k < len; ++k) (*index)[static_cast<std::size_t>(r * len + k)] = r * v + inputs[k];

  const double p = dropout_rng ? cfg_.dropout : 0.0;
  auto h = scale(gather(tape.parameter(*embedding_), d, len, index), std::sqrt(static_cast<double>(d)));
  if (cfg_.positional_encoding)
    h = add(h, tape.constant(sinusoidal_positions<Scalar>(cfg_.d_model, static_cast<int>(len))));
  if (dropout_rng && p > 0.0) h = dropout(h, p, *dropout_rng);

  const Matrix<Scalar> mask = causal_mask<Scalar>(static_cast<int>(len));
  for (const auto& blk : dec_blocks_) {
    auto n = blk.self_norm(tape, h);
    h = add(h, blk.self_attn(tape, n, n, &mask, p, dropout_rng));
    h = add(h, blk.cross_attn(tape, blk.cross_norm(tape, h), memory, nullptr, p, dropout_rng));
    h = add(h, blk.ff(tape, blk.ff_norm(tape, h), p, dropout_rng));
  }
  return out_proj_(tape, dec_norm_(tape, h));
}

template <typename Scalar>
Matrix<Scalar> AsrModel<Scalar>::encode_for_decoding(const Matrix<double>& features,
                                                     const std::optional<VisualInput>& visual) const {
  Tape<Scalar> tape(false);
  return encode(tape, normalize(features), visual).values.value();
}

template <typename Scalar>
Matrix<Scalar> AsrModel<Scalar>::parallel_log_probs(const Matrix<Scalar>& fused, std::span<const int> prefix) const {
  if (prefix.empty() || prefix.front() != Vocabulary::kSos)
    throw PreconditionError("decode: prefix must start with sos");
  Tape<Scalar> tape(false);
  return log_softmax(decoder_logits(tape, tape.constant(fused), prefix), 0).value();
}

template <typename Scalar>
Eigen::VectorXd AsrModel<Scalar>::decode_step(const Matrix<Scalar>& fused, std::span<const int> prefix) const {
  Matrix<Scalar> lp = parallel_log_probs(fused, prefix);
  return lp.col(lp.cols() - 1).template cast<double>();
}

template <typename Scalar>
Hypothesis AsrModel<Scalar>::greedy_decode(const Matrix<Scalar>& fused, int max_len) const {
  return greedy_search([&](std::span<const int> prefix) { return decode_step(fused, prefix); },
                       std::min(max_len, cfg_.max_target_len));
}

template <typename Scalar>
Hypothesis AsrModel<Scalar>::beam_search(const Matrix<Scalar>& fused, int beam_size, int max_len,
                                         double length_penalty) const {
  return mmasr::beam_search([&](std::span<const int> prefix) { return decode_step(fused, prefix); }, beam_size,
                            std::min(max_len, cfg_.max_target_len), length_penalty);
}

template <typename Scalar>
TokenSequence AsrModel<Scalar>::transcribe(const Matrix<double>& features, const std::optional<VisualInput>& visual,
                                           const DecodeOptions& opts) const {
  const Matrix<Scalar> fused = encode_for_decoding(features, visual);
  const Hypothesis h = opts.beam_size <= 1 ? greedy_decode(fused, opts.max_len)
                                           : beam_search(fused, opts.beam_size, opts.max_len, opts.length_penalty);
  return strip_eos(h);
}

template <typename Scalar>
LossResult<Scalar> AsrModel<Scalar>::forward_loss(Tape<Scalar>& tape, std::span<const Utterance> batch,
                                                  const LossOptions& opts, Rng& rng) const {
  if (batch.empty()) throw PreconditionError("forward_loss: empty batch");
  for (const auto& u : batch) check_tokens(u.tokens, cfg_.vocab_size, "forward_loss");

  Var<Scalar> total;
  std::size_t tokens = 0;
  for (const auto& u : batch) {
    // Independent streams per utterance keep dropout masks identical whether
    // or not augmentation or image flips consume randomness.
    Rng aug_rng(rng());
    Rng flip_rng(rng());
    Rng drop_rng(rng());
    Rng* drop = opts.train && cfg_.dropout > 0.0 ? &drop_rng : nullptr;

    Matrix<double> feats = normalize(u.features);
    if (opts.train && opts.augment && !opts.augment->is_identity()) feats = apply_augment(feats, *opts.augment, aug_rng);

    std::optional<VisualInput> visual = u.visual;
    if (opts.train && opts.flip_images && visual && visual->kind == VisualInput::Kind::image &&
        std::bernoulli_distribution(0.5)(flip_rng)) {
      Image flipped = flip_horizontal(Image{visual->values, visual->height, visual->width});
      visual = VisualInput::from_image(flipped);
    }

    auto fused = encode(tape, feats, visual, drop);
    std::vector<int> inputs{Vocabulary::kSos};
    inputs.insert(inputs.end(), u.tokens.begin(), u.tokens.end());
    std::vector<int> targets(u.tokens.begin(), u.tokens.end());
    targets.push_back(Vocabulary::kEos);
    if (inputs.size() < opts.pad_to) {
      inputs.resize(opts.pad_to, Vocabulary::kPad);
      targets.resize(opts.pad_to, Vocabulary::kPad);
    }
    auto logits = decoder_logits(tape, fused.values, inputs, drop);
    auto ce = cross_entropy(logits, targets, opts.label_smoothing, Vocabulary::kPad, Reduction::sum);
    tokens += u.tokens.size() + 1;
    total = total.valid() ? add(total, ce) : ce;
  }
  return {scale(total, 1.0 / static_cast<double>(tokens)), tokens};
}

template <typename Scalar>
void AsrModel<Scalar>::load_component(const Checkpoint& ckpt, Component component) {
  import_parameters(params_, ckpt, &component);
}

template <typename Scalar>
void AsrModel<Scalar>::configure_components(const ComponentPlan& plan) {
  for (const auto& [component, spec] : plan) {
    if (spec.init == ComponentInit::load) {
      if (spec.path.empty())
        throw ParameterError("component " + std::string(to_string(component)) + ": load requested without a path");
      load_component(load_checkpoint(spec.path), component);
    }
    params_.set_trainable(component, spec.train == ComponentTrain::finetune);
  }
}

template class AsrModel<float>;
template class AsrModel<double>;

}  // namespace mmasr
