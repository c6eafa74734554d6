#pragma once

// Unigram language-model subword vocabulary: EM training with likelihood
// based pruning, Viterbi segmentation, and detokenization.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmasr {

using TokenSequence = std::vector<int>;

// Lowercase (ASCII), collapse runs of whitespace, trim.
std::string normalize_text(std::string_view text);

std::u32string utf8_to_u32(std::string_view s);
std::string u32_to_utf8(std::u32string_view s);

struct Piece {
  std::string text;  // UTF-8
  double log_prob = 0.0;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;
  static constexpr std::string_view kBoundary = "\xe2\x96\x81";  // U+2581
  static constexpr std::string_view kUnkSurface = "\xe2\x81\x87";  // U+2047

  Vocabulary() = default;
  // Non-special pieces; ids are assigned after the specials in the given order.
  explicit Vocabulary(std::vector<Piece> pieces);

  std::size_t size() const { return pieces_.size() + kNumSpecials; }
  std::size_t piece_count() const { return pieces_.size(); }
  const std::string& piece(int id) const;
  double log_prob(int id) const;
  int find(std::string_view piece) const;  // -1 if absent
  const std::vector<Piece>& pieces() const { return pieces_; }
  double unk_log_prob() const { return unk_log_prob_; }

  // Maximum log-probability segmentation of raw code points (no
  // normalization, no boundary markers). Unknown code points become unk.
  TokenSequence segment(std::u32string_view text, int excluded_id = -1) const;
  double score(std::span<const int> ids) const;

  // Normalizes, prefixes every word with the boundary marker and segments.
  TokenSequence encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  static const std::vector<std::string>& special_names();

 private:
  std::vector<Piece> pieces_;
  std::vector<std::u32string> pieces_u32_;
  std::unordered_map<std::u32string, int> index_;
  std::size_t max_piece_len_ = 1;
  double unk_log_prob_ = -20.0;
};

struct UnigramTrainerConfig {
  std::size_t target_size = 200;  // includes the special tokens
  std::size_t seed_max_len = 8;   // code points
  int em_iters = 2;               // EM iterations per pruning round
  double prune_fraction = 0.25;
};

Vocabulary train_unigram(std::span<const std::string> corpus, const UnigramTrainerConfig& cfg);

// Sum over sentences of the best-segmentation log probability.
double corpus_log_likelihood(const Vocabulary& vocab, std::span<const std::string> corpus);

}  // namespace mmasr
