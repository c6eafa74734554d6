#pragma once

// Word error rate via minimal edit alignment, and the matched / mismatched
// image probe for multimodal models.

#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmasr/model.hpp"
#include "mmasr/tokenizer.hpp"

namespace mmasr {

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Words = std::vector<std::string>;

Words split_words(std::string_view text);

enum class EditOp { match, substitute, insert, remove };

struct AlignStep {
  EditOp op = EditOp::match;
  int ref = -1;  // -1 for insertions
  int hyp = -1;  // -1 for deletions
};

struct Alignment {
  std::vector<AlignStep> steps;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;

  int cost() const { return substitutions + insertions + deletions; }
};

// Minimal-cost alignment. On equal cost the backtrace prefers the diagonal
// (match or substitution), then deletion, then insertion.
Alignment align(std::span<const std::string> ref, std::span<const std::string> hyp);

// Applies the alignment's edits to ref; reproduces hyp.
Words replay(const Alignment& a, std::span<const std::string> ref, std::span<const std::string> hyp);

struct UtteranceScore {
  std::string id;
  std::size_t n_ref = 0;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;

  int errors() const { return substitutions + insertions + deletions; }
  double wer() const;
};

struct WerResult {
  double wer = 0.0;
  std::size_t n_ref = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::vector<UtteranceScore> utterances;
};

// Corpus (micro-averaged) WER with a per-utterance breakdown.
WerResult wer(std::span<const Words> refs, std::span<const Words> hyps, std::span<const std::string> ids = {});

// utt_id \t wer \t n_ref \t S \t I \t D
std::string format_score_line(const UtteranceScore& s);
std::string format_summary(const WerResult& r);

// Fraction of reference occurrences of `targets` that the alignment does
// not mark as matches.
struct TargetErrorRate {
  std::size_t occurrences = 0;
  std::size_t errors = 0;
  double rate() const;
};
TargetErrorRate target_word_errors(std::span<const Words> refs, std::span<const Words> hyps,
                                   const std::set<std::string>& targets);

enum class Pairing { matched, mismatched, none };
std::string_view to_string(Pairing p);
Pairing parse_pairing(std::string_view name);

// Random permutation without fixed points (Sattolo's algorithm); n >= 2.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed);

struct ProbeItem {
  std::string id;
  Matrix<double> features;  // raw log-mel, frames x n_mels
  VisualInput visual;
  Words reference;
};

struct ProbeResult {
  Pairing pairing = Pairing::matched;
  WerResult score;
  std::vector<Words> hypotheses;
  std::vector<std::size_t> image_source;  // index of the item whose image was used
};

// Decodes every item with its own image, a deranged image, or a zero visual
// embedding. Throws std::invalid_argument for a unimodal model.
ProbeResult grounding_probe(const AsrModel<float>& model, const Vocabulary& vocab, std::span<const ProbeItem> items,
                            Pairing pairing, std::uint64_t seed, const DecodeOptions& decode);

}  // namespace mmasr
