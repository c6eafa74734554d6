#include <gtest/gtest.h>

#include <cmath>

#include "mmasr/errors.hpp"
#include "mmasr/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace mmasr {
namespace {

using testing::all_sequences;
using testing::edit_distance;

TEST(Align, ExhaustivelyMatchesRecursiveEditDistance) {
  const auto seqs = all_sequences({"a", "b", "c"}, 6);
  ASSERT_EQ(seqs.size(), 1093u);
  for (const auto& ref : seqs) {
    for (const auto& hyp : seqs) {
      const Alignment a = align(ref, hyp);
      ASSERT_EQ(a.cost(), edit_distance(ref, hyp));
      int matches = 0;
      for (const auto& s : a.steps) matches += s.op == EditOp::match;
      ASSERT_EQ(static_cast<int>(ref.size()), matches + a.substitutions + a.deletions);
      ASSERT_EQ(static_cast<int>(hyp.size()), matches + a.substitutions + a.insertions);
      ASSERT_EQ(replay(a, ref, hyp), hyp);
    }
  }
}

TEST(Wer, SingleSubstitutionExample) {
  const std::vector<Words> refs{{"a", "b", "c"}};
  const std::vector<Words> hyps{{"a", "x", "c"}};
  const auto r = wer(refs, hyps);
  EXPECT_DOUBLE_EQ(r.wer, 1.0 / 3.0);
  EXPECT_EQ(r.substitutions, 1u);
  EXPECT_EQ(r.insertions + r.deletions, 0u);
  const auto a = align(refs[0], hyps[0]);
  ASSERT_EQ(a.steps.size(), 3u);
  EXPECT_EQ(a.steps[1].op, EditOp::substitute);
}

TEST(Wer, TiesPreferSubstitutionOverInsertPlusDelete) {
  const Words ref{"a", "b"};
  const Words hyp{"b", "a"};
  const auto a = align(ref, hyp);
  EXPECT_EQ(a.cost(), 2);
  EXPECT_EQ(a.substitutions, 2);
}

TEST(Wer, CorpusScoreIsMicroAveraged) {
  const std::vector<Words> refs{{"a"}, {"a", "b", "c", "d", "e", "f", "g", "h", "i"}};
  const std::vector<Words> hyps{{"x"}, {"a", "b", "c", "d", "e", "f", "g", "h", "i"}};
  const std::vector<std::string> ids{"u1", "u2"};
  const auto r = wer(refs, hyps, ids);
  EXPECT_DOUBLE_EQ(r.wer, 0.1);  // not the macro average 0.5
  ASSERT_EQ(r.utterances.size(), 2u);
  EXPECT_EQ(r.utterances[0].id, "u1");
  EXPECT_DOUBLE_EQ(r.utterances[0].wer(), 1.0);
  EXPECT_EQ(format_score_line(r.utterances[0]), "u1\t1\t1\t1\t0\t0");
}

TEST(Wer, EmptyHypothesesScoreOne) {
  const std::vector<Words> refs{{"a", "b"}, {"c", "d", "e"}};
  const std::vector<Words> hyps{{}, {}};
  const auto r = wer(refs, hyps);
  EXPECT_DOUBLE_EQ(r.wer, 1.0);
  EXPECT_EQ(r.deletions, 5u);
}

TEST(Wer, UndefinedAndMismatchedInputs) {
  const std::vector<Words> empty_refs{{}, {}};
  const std::vector<Words> hyps{{"a"}, {}};
  EXPECT_THROW(wer(empty_refs, hyps), UndefinedMetricError);
  const std::vector<Words> one{{"a"}};
  EXPECT_THROW(wer(one, hyps), std::invalid_argument);
  EXPECT_THROW(TargetErrorRate{}.rate(), UndefinedMetricError);
}

TEST(Wer, SplitWordsNormalizesWhitespace) {
  EXPECT_EQ(split_words("  a\tb  c \n"), (Words{"a", "b", "c"}));
  EXPECT_TRUE(split_words("   ").empty());
}

TEST(TargetErrors, CountsOnlyTargetOccurrences) {
  const std::vector<Words> refs{{"the", "knight", "rode"}, {"a", "night", "fell"}};
  const std::vector<Words> hyps{{"the", "night", "rode"}, {"a", "night"}};
  const auto t = target_word_errors(refs, hyps, {"knight", "night"});
  EXPECT_EQ(t.occurrences, 2u);
  EXPECT_EQ(t.errors, 1u);
  EXPECT_DOUBLE_EQ(t.rate(), 0.5);
}

TEST(Derangement, HasNoFixedPointsAndIsAPermutation) {
  for (std::size_t n = 2; n < 40; ++n) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto p = derangement(n, seed);
      std::vector<int> seen(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NE(p[i], i);
        ++seen[p[i]];
      }
      for (int s : seen) EXPECT_EQ(s, 1);
    }
  }
  EXPECT_THROW(derangement(1, 0), PreconditionError);
  EXPECT_EQ(derangement(10, 3), derangement(10, 3));
}

TEST(Probe, PairingsAndErrors) {
  const std::string b(Vocabulary::kBoundary);
  const Vocabulary vocab({{b + "a", std::log(0.2)}, {b + "b", std::log(0.2)}, {b + "c", std::log(0.2)},
                          {b + "d", std::log(0.2)}, {b + "e", std::log(0.2)}});
  const auto cfg = testing::tiny_config(FusionMode::emb);
  ASSERT_EQ(static_cast<int>(vocab.size()), cfg.vocab_size);
  AsrModel<float> model(cfg, 3);
  testing::randomize_zero_parameters(model.parameters());  // let the image matter

  std::vector<ProbeItem> items;
  for (const auto& u : testing::random_batch(cfg, 5, 4, true))
    items.push_back({u.id, u.features, *u.visual, split_words(vocab.decode(u.tokens))});

  const DecodeOptions decode{1, 6, 0.0};
  const auto matched = grounding_probe(model, vocab, items, Pairing::matched, 1, decode);
  const auto mismatched = grounding_probe(model, vocab, items, Pairing::mismatched, 1, decode);
  const auto none = grounding_probe(model, vocab, items, Pairing::none, 1, decode);
  ASSERT_EQ(matched.hypotheses.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(matched.image_source[i], i);
    EXPECT_NE(mismatched.image_source[i], i);
    const auto own = model.transcribe(items[i].features, items[i].visual, decode);
    EXPECT_EQ(matched.hypotheses[i], split_words(vocab.decode(own)));
  }
  EXPECT_EQ(none.score.n_ref, matched.score.n_ref);

  AsrModel<float> uni(testing::tiny_config(FusionMode::none), 3);
  EXPECT_THROW(grounding_probe(uni, vocab, items, Pairing::matched, 1, decode), std::invalid_argument);
  EXPECT_THROW(grounding_probe(model, vocab, {}, Pairing::matched, 1, decode), PreconditionError);
  EXPECT_EQ(parse_pairing("mismatched"), Pairing::mismatched);
  EXPECT_THROW(parse_pairing("random"), ParameterError);
}

}  // namespace
}  // namespace mmasr
