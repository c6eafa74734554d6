#include "mmasr/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace mmasr {

Words split_words(std::string_view text) {
  Words out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

Alignment align(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }

  Alignment a;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        a.steps.push_back({same ? EditOp::match : EditOp::substitute, static_cast<int>(i - 1),
                           static_cast<int>(j - 1)});
        if (!same) ++a.substitutions;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      a.steps.push_back({EditOp::remove, static_cast<int>(i - 1), -1});
      ++a.deletions;
      --i;
    } else {
      a.steps.push_back({EditOp::insert, -1, static_cast<int>(j - 1)});
      ++a.insertions;
      --j;
    }
  }
  std::reverse(a.steps.begin(), a.steps.end());
  return a;
}

Words replay(const Alignment& a, std::span<const std::string> ref, std::span<const std::string> hyp) {
  Words out;
  for (const auto& s : a.steps) switch (s.op) {
      case EditOp::match: out.push_back(ref[static_cast<std::size_t>(s.ref)]); break;
      case EditOp::substitute:
      case EditOp::insert: out.push_back(hyp[static_cast<std::size_t>(s.hyp)]); break;
      case EditOp::remove: break;
    }
  return out;
}

double UtteranceScore::wer() const {
  if (n_ref == 0) return errors() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return static_cast<double>(errors()) / static_cast<double>(n_ref);
}

WerResult wer(std::span<const Words> refs, std::span<const Words> hyps, std::span<const std::string> ids) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument("wer: " + std::to_string(refs.size()) + " references but " +
                                std::to_string(hyps.size()) + " hypotheses");
  if (!ids.empty() && ids.size() != refs.size()) throw std::invalid_argument("wer: id count differs from references");
  WerResult r;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const Alignment a = align(refs[k], hyps[k]);
    UtteranceScore s;
    s.id = ids.empty() ? std::to_string(k) : ids[k];
    s.n_ref = refs[k].size();
    s.substitutions = a.substitutions;
    s.insertions = a.insertions;
    s.deletions = a.deletions;
    r.n_ref += s.n_ref;
    r.substitutions += static_cast<std::size_t>(a.substitutions);
    r.insertions += static_cast<std::size_t>(a.insertions);
    r.deletions += static_cast<std::size_t>(a.deletions);
    r.utterances.push_back(std::move(s));
  }
  if (r.n_ref == 0) throw UndefinedMetricError("wer: references contain no words");
  r.wer = static_cast<double>(r.substitutions + r.insertions + r.deletions) / static_cast<double>(r.n_ref);
  return r;
}

std::string format_score_line(const UtteranceScore& s) {
  std::ostringstream o;
  o << s.id << '\t' << std::setprecision(6) << s.wer() << '\t' << s.n_ref << '\t' << s.substitutions << '\t'
    << s.insertions << '\t' << s.deletions;
  return o.str();
}

std::string format_summary(const WerResult& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << "WER " << 100.0 * r.wer << "%  (ref words " << r.n_ref << ", S "
    << r.substitutions << ", I " << r.insertions << ", D " << r.deletions << ", utterances " << r.utterances.size()
    << ")";
  return o.str();
}

double TargetErrorRate::rate() const {
  if (occurrences == 0) throw UndefinedMetricError("target error rate: no target words in the references");
  return static_cast<double>(errors) / static_cast<double>(occurrences);
}

TargetErrorRate target_word_errors(std::span<const Words> refs, std::span<const Words> hyps,
                                   const std::set<std::string>& targets) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("target errors: reference/hypothesis count differs");
  TargetErrorRate r;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const Alignment a = align(refs[k], hyps[k]);
    for (const auto& s : a.steps) {
      if (s.ref < 0 || !targets.contains(refs[k][static_cast<std::size_t>(s.ref)])) continue;
      ++r.occurrences;
      if (s.op != EditOp::match) ++r.errors;
    }
  }
  return r;
}

std::string_view to_string(Pairing p) {
  switch (p) {
    case Pairing::matched: return "matched";
    case Pairing::mismatched: return "mismatched";
    case Pairing::none: return "none";
  }
  return "matched";
}

Pairing parse_pairing(std::string_view name) {
  if (name == "matched") return Pairing::matched;
  if (name == "mismatched") return Pairing::mismatched;
  if (name == "none") return Pairing::none;
  throw ParameterError("unknown pairing '" + std::string(name) + "' (expected matched, mismatched or none)");
}

std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw PreconditionError("derangement: needs at least two items");
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i], p[pick(rng)]);
  }
  return p;
}

ProbeResult grounding_probe(const AsrModel<float>& model, const Vocabulary& vocab, std::span<const ProbeItem> items,
                            Pairing pairing, std::uint64_t seed, const DecodeOptions& decode) {
  if (!model.multimodal()) throw std::invalid_argument("grounding probe: model has no visual channel");
  if (items.empty()) throw PreconditionError("grounding probe: no test items");

  ProbeResult result;
  result.pairing = pairing;
  result.image_source.resize(items.size());
  std::iota(result.image_source.begin(), result.image_source.end(), 0);
  if (pairing == Pairing::mismatched) result.image_source = derangement(items.size(), seed);

  const auto& vcfg = model.config().visual;
  const int k = model.visual_kind() == VisualKind::grid ? vcfg.grid_size() * vcfg.grid_size() : 1;
  const VisualInput zero = VisualInput::from_embedding(Matrix<double>::Zero(vcfg.embedding_dim, k));

  std::vector<Words> refs;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const VisualInput& v = pairing == Pairing::none ? zero : items[result.image_source[i]].visual;
    const TokenSequence tokens = model.transcribe(items[i].features, v, decode);
    result.hypotheses.push_back(split_words(vocab.decode(tokens)));
    refs.push_back(items[i].reference);
    ids.push_back(items[i].id);
  }
  result.score = wer(refs, result.hypotheses, ids);
  return result;
}

}  // namespace mmasr
