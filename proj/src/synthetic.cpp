#include "mmasr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mmasr/errors.hpp"
#include "mmasr/manifest.hpp"

namespace mmasr {

namespace {

constexpr std::pair<const char*, const char*> kHomophones[] = {
    {"eight", "ate"}, {"sea", "see"}, {"pair", "pear"}, {"knight", "night"},
    {"flower", "flour"}, {"mail", "male"}, {"sun", "son"}, {"tail", "tale"},
};

constexpr const char* kPlainWords[] = {
    "red",  "blue",  "green", "gold",  "dog",  "cat",  "bird", "fish", "tree", "leaf",
    "rock", "sand",  "road",  "hill",  "lake", "boat", "car",  "bus",  "train", "plane",
    "house", "door", "wall",  "roof",  "lamp", "book", "pen",  "cup",  "box",  "bag",
    "hat",  "coat",  "shoe",  "sock",  "ball", "kite", "drum", "bell", "ring", "key",
};

constexpr double kPalette[][3] = {
    {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 0.0},
    {1.0, 0.0, 1.0}, {0.0, 1.0, 1.0}, {1.0, 1.0, 1.0}, {1.0, 0.5, 0.0},
};

constexpr int kToneGrid = 16;
constexpr double kToneAmplitude = 0.3;
constexpr double kRampMs = 5.0;

std::size_t tone_samples(const SyntheticSpec& spec) { return samples_for_ms(spec.tone_ms, spec.sample_rate); }

std::string utterance_id(const std::string& split, int index) {
  std::ostringstream s;
  s << split << '_' << std::setw(5) << std::setfill('0') << index;
  return s.str();
}

std::vector<SyntheticUtterance> make_split(const Lexicon& lex, const SyntheticSpec& spec, const std::string& split,
                                           int count, Rng& rng) {
  const int pairs = static_cast<int>(lex.homophones.size());
  std::vector<int> plain;
  for (int w = 0; w < static_cast<int>(lex.words.size()); ++w)
    if (!lex.is_homophone(w)) plain.push_back(w);

  std::vector<SyntheticUtterance> out;
  for (int i = 0; i < count; ++i) {
    SyntheticUtterance u;
    u.id = utterance_id(split, i);
    const int len = std::uniform_int_distribution<int>(spec.min_words, spec.max_words)(rng);
    const int max_h = std::min({spec.max_homophones, pairs, len});
    const int min_h = std::min(spec.min_homophones, max_h);
    const int n_h = std::uniform_int_distribution<int>(min_h, max_h)(rng);

    std::vector<int> pair_ids(static_cast<std::size_t>(pairs));
    std::iota(pair_ids.begin(), pair_ids.end(), 0);
    std::shuffle(pair_ids.begin(), pair_ids.end(), rng);
    std::vector<int> positions(static_cast<std::size_t>(len));
    std::iota(positions.begin(), positions.end(), 0);
    std::shuffle(positions.begin(), positions.end(), rng);

    u.words.assign(static_cast<std::size_t>(len), -1);
    for (int h = 0; h < n_h; ++h) {
      const auto& [a, b] = lex.homophones[static_cast<std::size_t>(pair_ids[static_cast<std::size_t>(h)])];
      u.words[static_cast<std::size_t>(positions[static_cast<std::size_t>(h)])] =
          std::bernoulli_distribution(0.5)(rng) ? a : b;
    }
    std::uniform_int_distribution<std::size_t> pick(0, plain.size() - 1);
    for (auto& w : u.words)
      if (w < 0) w = plain[pick(rng)];

    for (std::size_t k = 0; k < u.words.size(); ++k) {
      if (k) u.text += ' ';
      u.text += lex.words[static_cast<std::size_t>(u.words[k])];
    }
    u.noise_seed = rng();
    u.audio = render_audio(lex, spec, u.words, u.noise_seed);
    u.image = render_image(lex, u.words, spec.image_size);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ParameterError("synthetic spec: " + what);
  };
  const int max_pairs = static_cast<int>(std::size(kHomophones));
  const int max_plain = static_cast<int>(std::size(kPlainWords));
  require(n_homophone_pairs >= 0 && n_homophone_pairs <= max_pairs,
          "n_homophone_pairs must lie in [0, " + std::to_string(max_pairs) + "]");
  require(n_words - 2 * n_homophone_pairs >= 1 && n_words - 2 * n_homophone_pairs <= max_plain,
          "n_words leaves between 1 and " + std::to_string(max_plain) + " non-homophone words");
  require(min_words >= 1 && max_words >= min_words, "sentence length range is empty");
  require(min_homophones >= 0 && max_homophones >= min_homophones, "homophone count range is empty");
  require(n_train >= 0 && n_val >= 0 && n_test >= 0, "split sizes must be >= 0");
  require(sample_rate >= 8000, "sample_rate must be >= 8000");
  require(tones_per_word >= 1 && tone_ms >= 2 * kRampMs, "tones must be at least twice the ramp length");
  require(image_size >= 8 && image_size % 8 == 0, "image_size must be a positive multiple of 8");
}

int Lexicon::find(std::string_view word) const {
  auto it = std::find(words.begin(), words.end(), word);
  return it == words.end() ? -1 : static_cast<int>(it - words.begin());
}

std::set<std::string> Lexicon::homophone_words() const {
  std::set<std::string> out;
  for (const auto& [a, b] : homophones) {
    out.insert(words[static_cast<std::size_t>(a)]);
    out.insert(words[static_cast<std::size_t>(b)]);
  }
  return out;
}

std::vector<double> tone_frequencies() {
  std::vector<double> f(kToneGrid);
  const double lo = hz_to_mel(300.0), hi = hz_to_mel(3400.0);
  for (int i = 0; i < kToneGrid; ++i) f[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (kToneGrid - 1));
  return f;
}

Lexicon make_lexicon(const SyntheticSpec& spec) {
  spec.validate();
  Lexicon lex;
  Rng rng(spec.lexicon_seed);
  std::set<std::vector<int>> used;
  auto fresh_signature = [&] {
    for (;;) {
      std::vector<int> sig;
      for (int t = 0; t < spec.tones_per_word; ++t) {
        int f;
        do f = std::uniform_int_distribution<int>(0, kToneGrid - 1)(rng);
        while (!sig.empty() && f == sig.back());
        sig.push_back(f);
      }
      if (used.insert(sig).second) return sig;
    }
  };
  for (int p = 0; p < spec.n_homophone_pairs; ++p) {
    const auto sig = fresh_signature();
    const int a = static_cast<int>(lex.words.size());
    for (int m = 0; m < 2; ++m) {
      lex.words.emplace_back(m == 0 ? kHomophones[p].first : kHomophones[p].second);
      lex.signatures.push_back(sig);
      lex.visual_class.push_back(2 * p + m);
    }
    lex.homophones.emplace_back(a, a + 1);
  }
  for (int w = 0; w < spec.n_words - 2 * spec.n_homophone_pairs; ++w) {
    lex.words.emplace_back(kPlainWords[w]);
    lex.signatures.push_back(fresh_signature());
    lex.visual_class.push_back(-1);
  }
  return lex;
}

Waveform render_audio(const Lexicon& lex, const SyntheticSpec& spec, std::span<const int> words,
                      std::uint64_t noise_seed) {
  const auto freqs = tone_frequencies();
  const std::size_t n_tone = tone_samples(spec);
  const std::size_t ramp = samples_for_ms(kRampMs, spec.sample_rate);
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.reserve(words.size() * static_cast<std::size_t>(spec.tones_per_word) * n_tone);
  for (int word : words) {
    for (int tone : lex.signatures.at(static_cast<std::size_t>(word))) {
      const double omega = 2.0 * std::numbers::pi * freqs[static_cast<std::size_t>(tone)] / spec.sample_rate;
      for (std::size_t n = 0; n < n_tone; ++n) {
        double env = 1.0;
        const std::size_t edge = std::min(n, n_tone - 1 - n);
        if (edge < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / ramp);
        w.samples.push_back(kToneAmplitude * env * std::sin(omega * static_cast<double>(n)));
      }
    }
  }
  if (std::isfinite(spec.snr_db) && !w.samples.empty()) {
    double power = 0.0;
    for (double s : w.samples) power += s * s;
    power /= static_cast<double>(w.samples.size());
    const double sigma = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
    Rng rng(noise_seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& s : w.samples) s = std::clamp(s + noise(rng), -1.0, 1.0);
  }
  return w;
}

RawImage class_pattern(int visual_class, int size, int phase) {
  RawImage img;
  img.height = img.width = size;
  img.pixels.assign(static_cast<std::size_t>(size) * size * 3, 0.0);
  const double* color = kPalette[(visual_class / 2) % std::size(kPalette)];
  const bool vertical = visual_class % 2 == 1;
  const int period = size / 4;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int coord = (vertical ? x : y) + phase;
      if ((coord % period) < period / 2)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
    }
  return img;
}

RawImage render_image(const Lexicon& lex, std::span<const int> words, int size) {
  std::set<int> classes;
  for (int w : words)
    if (lex.is_homophone(w)) classes.insert(lex.visual_class[static_cast<std::size_t>(w)]);
  RawImage img;
  img.height = img.width = size;
  img.pixels.assign(static_cast<std::size_t>(size) * size * 3, 0.0);
  for (int c : classes) {
    const RawImage p = class_pattern(c, size);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] += p.pixels[i] / static_cast<double>(classes.size());
  }
  return img;
}

SyntheticCorpus generate(const SyntheticSpec& spec) {
  SyntheticCorpus corpus;
  corpus.lexicon = make_lexicon(spec);
  Rng rng(spec.seed);
  corpus.train = make_split(corpus.lexicon, spec, "train", spec.n_train, rng);
  corpus.val = make_split(corpus.lexicon, spec, "val", spec.n_val, rng);
  corpus.test = make_split(corpus.lexicon, spec, "test", spec.n_test, rng);
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path rel = root.empty() ? dir : fs::relative(fs::absolute(dir), fs::absolute(root));
  auto write_split = [&](const std::string& split, const std::vector<SyntheticUtterance>& utts) {
    std::vector<ManifestEntry> entries;
    fs::create_directories(dir / "wav" / split);
    fs::create_directories(dir / "img" / split);
    for (const auto& u : utts) {
      const fs::path wav = fs::path("wav") / split / (u.id + ".wav");
      const fs::path img = fs::path("img") / split / (u.id + ".ppm");
      write_wav(dir / wav, u.audio);
      write_ppm(dir / img, u.image);
      entries.push_back({u.id, (rel / wav).generic_string(), (rel / img).generic_string(), "", "", u.text});
    }
    write_manifest(dir / (split + ".jsonl"), entries);
  };
  write_split("train", corpus.train);
  write_split("val", corpus.val);
  write_split("test", corpus.test);

  std::ofstream lex(dir / "lexicon.tsv");
  if (!lex) throw DataError((dir / "lexicon.tsv").string() + ": cannot write lexicon");
  lex << "# word\tvisual_class\ttones\n";
  for (std::size_t w = 0; w < corpus.lexicon.words.size(); ++w) {
    lex << corpus.lexicon.words[w] << '\t' << corpus.lexicon.visual_class[w] << '\t';
    for (std::size_t t = 0; t < corpus.lexicon.signatures[w].size(); ++t)
      lex << (t ? "," : "") << corpus.lexicon.signatures[w][t];
    lex << '\n';
  }
}

VisualClassSet make_visual_class_set(int n_classes, int per_class, int size, std::uint64_t seed) {
  if (n_classes < 1 || per_class < 1) throw ParameterError("visual class set: counts must be positive");
  VisualClassSet set;
  Rng rng(seed);
  std::uniform_int_distribution<int> phase(0, size / 4 - 1);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < n_classes; ++c) {
      RawImage img = class_pattern(c, size, phase(rng));
      for (double& p : img.pixels) p = std::clamp(p + noise(rng), 0.0, 1.0);
      set.images.push_back(std::move(img));
      set.labels.push_back(c);
    }
  return set;
}

std::vector<int> matched_filter_decode(const Lexicon& lex, const SyntheticSpec& spec, const Waveform& audio) {
  const auto freqs = tone_frequencies();
  const std::size_t n_tone = tone_samples(spec);
  const std::size_t n_word = n_tone * static_cast<std::size_t>(spec.tones_per_word);
  if (n_word == 0 || audio.samples.size() % n_word != 0)
    throw DataError("matched filter: waveform length is not a whole number of words");

  std::map<std::vector<int>, int> by_signature;
  for (std::size_t w = 0; w < lex.words.size(); ++w) by_signature.emplace(lex.signatures[w], static_cast<int>(w));

  std::vector<int> out;
  for (std::size_t start = 0; start < audio.samples.size(); start += n_word) {
    std::vector<int> sig;
    for (int t = 0; t < spec.tones_per_word; ++t) {
      const std::size_t off = start + static_cast<std::size_t>(t) * n_tone;
      int best = 0;
      double best_mag = -1.0;
      for (int f = 0; f < kToneGrid; ++f) {
        const double omega = 2.0 * std::numbers::pi * freqs[static_cast<std::size_t>(f)] / audio.sample_rate;
        std::complex<double> acc = 0.0;
        for (std::size_t n = 0; n < n_tone; ++n)
          acc += audio.samples[off + n] * std::polar(1.0, -omega * static_cast<double>(n));
        if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best = f;
      }
      sig.push_back(best);
    }
    auto it = by_signature.find(sig);
    out.push_back(it == by_signature.end() ? -1 : it->second);
  }
  return out;
}

}  // namespace mmasr
