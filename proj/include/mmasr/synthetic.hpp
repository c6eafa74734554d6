#pragma once

// Procedural corpora: every word is a sequence of pure tones, homophone
// pairs share a tone sequence, and homophone words carry a visual pattern
// (a colour per pair, stripe orientation per member). An utterance's image
// averages the patterns of its grounded words.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mmasr/audio.hpp"
#include "mmasr/image.hpp"

namespace mmasr {

struct SyntheticSpec {
  int n_words = 40;
  int n_homophone_pairs = 4;
  int min_words = 5;
  int max_words = 9;
  int min_homophones = 1;  // homophone tokens per utterance, from distinct pairs
  int max_homophones = 1;
  int n_train = 400;
  int n_val = 50;
  int n_test = 50;
  int sample_rate = 16000;
  int tones_per_word = 3;
  double tone_ms = 40.0;
  double snr_db = 30.0;
  int image_size = 32;
  std::uint64_t lexicon_seed = 7;  // signatures
  std::uint64_t seed = 1;          // sentences and noise

  void validate() const;
};

struct Lexicon {
  std::vector<std::string> words;
  std::vector<std::vector<int>> signatures;  // tone indices into tone_frequencies()
  std::vector<int> visual_class;             // -1 for words without a pattern
  std::vector<std::pair<int, int>> homophones;

  int find(std::string_view word) const;  // -1 if absent
  bool is_homophone(int word) const { return visual_class[static_cast<std::size_t>(word)] >= 0; }
  std::set<std::string> homophone_words() const;
  int n_classes() const { return 2 * static_cast<int>(homophones.size()); }
};

// Mel-spaced tone grid shared by all signatures.
std::vector<double> tone_frequencies();

Lexicon make_lexicon(const SyntheticSpec& spec);

struct SyntheticUtterance {
  std::string id;
  std::vector<int> words;
  std::string text;
  std::uint64_t noise_seed = 0;
  Waveform audio;
  RawImage image;
};

struct SyntheticCorpus {
  Lexicon lexicon;
  std::vector<SyntheticUtterance> train, val, test;
};

Waveform render_audio(const Lexicon& lex, const SyntheticSpec& spec, std::span<const int> words,
                      std::uint64_t noise_seed);
// Pattern of one visual class at full intensity.
RawImage class_pattern(int visual_class, int size, int phase = 0);
// Mean of the patterns of the grounded words (black when there are none).
RawImage render_image(const Lexicon& lex, std::span<const int> words, int size);

SyntheticCorpus generate(const SyntheticSpec& spec);

// Writes wav/<split>/<id>.wav, img/<split>/<id>.ppm, <split>.jsonl and
// lexicon.tsv under `dir`. Manifest paths are relative to `root`.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir, const std::filesystem::path& root);

// Single-pattern images (random stripe phase, pixel noise) for visual-encoder pretraining.
struct VisualClassSet {
  std::vector<RawImage> images;
  std::vector<int> labels;
};
VisualClassSet make_visual_class_set(int n_classes, int per_class, int size, std::uint64_t seed);

// Recovers word ids from a clean rendering by correlating each word-length
// segment against the tone grid. Homophones resolve to the pair's first word.
std::vector<int> matched_filter_decode(const Lexicon& lex, const SyntheticSpec& spec, const Waveform& audio);

}  // namespace mmasr
