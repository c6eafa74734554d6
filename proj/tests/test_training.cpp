#include <gtest/gtest.h>

#include <cmath>

#include "mmasr/errors.hpp"
#include "mmasr/synthetic.hpp"
#include "mmasr/training.hpp"
#include "support/fixtures.hpp"
#include "support/tempdir.hpp"

namespace mmasr {
namespace {

using testing::random_batch;
using testing::random_matrix;
using testing::same_bits;
using testing::tiny_config;

Checkpoint single_param_checkpoint(std::vector<double> values, DType dtype = DType::f64) {
  Checkpoint c;
  c.metadata["k"] = "v";
  const std::size_t n = values.size();
  c.params.push_back({"w", Component::decoder, true, Tensor({1, n}, std::move(values), dtype)});
  return c;
}

TEST(Schedule, ExactValuesAtTheEnds) {
  const Schedule s{3.2e-8, 8e-4, 25000, 2.0};
  EXPECT_EQ(s.lr(0), 3.2e-8);
  EXPECT_EQ(s.lr(25000), 8e-4);
  EXPECT_DOUBLE_EQ(s.lr(50000), 2e-4);
  EXPECT_THROW(s.lr(-1), PreconditionError);
}

TEST(Schedule, ContinuousAtTheWarmupBoundary) {
  for (double exponent : {0.5, 1.0, 2.0}) {
    const Schedule s{3.2e-8, 8e-4, 500, exponent};
    const double w = static_cast<double>(s.warmup_steps);
    EXPECT_LT(std::abs(s.warmup_lr(w) - s.decay_lr(w)) / s.lr(500), 1e-12);
    EXPECT_LT(std::abs(s.lr(501) - s.lr(500)) / s.lr(500), 1e-2);
    for (long t = 1; t < 500; ++t) EXPECT_GT(s.lr(t), s.lr(t - 1));
    for (long t = 501; t < 1000; ++t) EXPECT_LT(s.lr(t), s.lr(t - 1));
  }
}

TEST(Schedule, Validation) {
  EXPECT_THROW((Schedule{0.0, 8e-4, 0, 2.0}).validate(), ParameterError);
  EXPECT_THROW((Schedule{0.0, 0.0, 10, 2.0}).validate(), ParameterError);
  EXPECT_THROW((Schedule{0.0, 1e-3, 10, -1.0}).validate(), ParameterError);
}

TEST(Adam, MinimizesAQuadratic) {
  ParameterSet<double> params;
  auto& w = params.add("w", Component::decoder, Matrix<double>::Constant(1, 1, 3.0));
  Adam<double> adam;
  for (int step = 1; step <= 500; ++step) {
    GradientMap<double> g;
    g["w"] = 2.0 * w.value;
    adam.step(params, g, 0.1 / std::sqrt(static_cast<double>(step)));
  }
  EXPECT_LT(std::abs(w.value(0, 0)), 1e-3);
  EXPECT_EQ(adam.steps(), 500);
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  ParameterSet<double> params;
  auto& w = params.add("w", Component::decoder, Matrix<double>::Constant(1, 2, 1.0));
  Adam<double> adam;
  GradientMap<double> g;
  g["w"] = (Matrix<double>(1, 2) << 5.0, -0.01).finished();
  adam.step(params, g, 0.1);
  EXPECT_NEAR(w.value(0, 0), 0.9, 1e-9);
  EXPECT_NEAR(w.value(0, 1), 1.1, 1e-6);
}

TEST(Adam, ZeroOrMissingGradientLeavesFreshParametersAlone) {
  ParameterSet<double> params;
  auto& a = params.add("a", Component::decoder, Matrix<double>::Constant(2, 2, 0.5));
  auto& b = params.add("b", Component::decoder, Matrix<double>::Constant(1, 3, -0.5));
  Adam<double> adam;
  GradientMap<double> g;
  g["a"] = Matrix<double>::Zero(2, 2);
  adam.step(params, g, 0.1);
  EXPECT_TRUE((a.value.array() == 0.5).all());
  EXPECT_TRUE((b.value.array() == -0.5).all());
}

TEST(Adam, NonFiniteGradientRaisesBeforeAnyUpdate) {
  ParameterSet<double> params;
  auto& a = params.add("a", Component::decoder, Matrix<double>::Constant(1, 1, 1.0));
  auto& z = params.add("z", Component::decoder, Matrix<double>::Constant(1, 1, 1.0));
  Adam<double> adam;
  GradientMap<double> g;
  g["a"] = Matrix<double>::Constant(1, 1, 1.0);
  g["z"] = Matrix<double>::Constant(1, 1, std::nan(""));
  try {
    adam.step(params, g, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'z'"), std::string::npos);
  }
  EXPECT_EQ(a.value(0, 0), 1.0);
  EXPECT_EQ(z.value(0, 0), 1.0);
  EXPECT_EQ(adam.steps(), 0);
}

TEST(Adam, IndependentOfParameterOrder) {
  ParameterSet<double> p1, p2;
  p1.add("a", Component::decoder, random_matrix(2, 3, 1));
  p1.add("b", Component::audio_encoder, random_matrix(3, 1, 2));
  p2.add("b", Component::audio_encoder, random_matrix(3, 1, 2));
  p2.add("a", Component::decoder, random_matrix(2, 3, 1));
  Adam<double> a1, a2;
  for (std::uint64_t s = 0; s < 5; ++s) {
    GradientMap<double> g;
    g["a"] = random_matrix(2, 3, 10 + s);
    g["b"] = random_matrix(3, 1, 20 + s);
    a1.step(p1, g, 0.01);
    a2.step(p2, g, 0.01);
  }
  EXPECT_EQ(p1.at("a").value, p2.at("a").value);
  EXPECT_EQ(p1.at("b").value, p2.at("b").value);
}

TEST(Adam, RejectsUnknownOrMisshapedGradients) {
  ParameterSet<double> params;
  params.add("a", Component::decoder, Matrix<double>::Zero(2, 2));
  Adam<double> adam;
  GradientMap<double> g;
  g["nope"] = Matrix<double>::Zero(2, 2);
  EXPECT_THROW(adam.step(params, g, 0.1), ParameterError);
  g.clear();
  g["a"] = Matrix<double>::Zero(1, 2);
  EXPECT_THROW(adam.step(params, g, 0.1), DimensionError);
}

// Every init x train choice over the four components of an emb model.
TEST(ComponentGrid, FreezingIsBitExactAndCountsAreMonotone) {
  testing::TempDir dir;
  const auto cfg = tiny_config(FusionMode::emb);
  AsrModel<float> donor(cfg, 77);
  save_checkpoint(dir / "donor.ckpt", donor.to_checkpoint());
  const auto batch = random_batch(cfg, 2, 5, true);
  LossOptions opts;
  opts.train = true;

  std::map<unsigned, std::size_t> counts;
  for (unsigned load_mask = 0; load_mask < 16; ++load_mask) {
    for (unsigned train_mask = 0; train_mask < 16; ++train_mask) {
      AsrModel<float> model(cfg, 1);
      ComponentPlan plan;
      for (unsigned c = 0; c < 4; ++c) {
        ComponentSpec spec;
        spec.init = load_mask >> c & 1u ? ComponentInit::load : ComponentInit::random;
        spec.train = train_mask >> c & 1u ? ComponentTrain::finetune : ComponentTrain::frozen;
        spec.path = dir / "donor.ckpt";
        plan[kAllComponents[c]] = spec;
      }
      model.configure_components(plan);

      std::map<std::string, Matrix<float>> before;
      for (const auto& p : model.parameters()) before[p->name] = p->value;
      Adam<float> adam;
      Rng rng(3);
      train_step(model, adam, batch, opts, 1e-3, rng);

      for (const auto& p : model.parameters()) {
        const bool trainable = train_mask >> static_cast<unsigned>(p->component) & 1u;
        ASSERT_EQ(p->trainable, trainable) << p->name;
        if (!trainable) ASSERT_TRUE(same_bits(p->value, before[p->name])) << p->name;
        const bool loaded = load_mask >> static_cast<unsigned>(p->component) & 1u;
        if (loaded && !trainable) ASSERT_TRUE(same_bits(p->value, donor.parameters().at(p->name).value));
      }
      if (load_mask == 0) counts[train_mask] = model.parameters().trainable_count();
    }
  }
  EXPECT_EQ(counts[0], 0u);
  for (unsigned a = 0; a < 16; ++a)
    for (unsigned b = 0; b < 16; ++b)
      if ((a & b) == a) EXPECT_LE(counts[a], counts[b]) << a << " subset of " << b;
  for (unsigned c = 0; c < 4; ++c) EXPECT_LT(counts[15 & ~(1u << c)], counts[15]) << c;
}

TEST(Average, CopiesAreAFixedPoint) {
  const auto cfg = tiny_config(FusionMode::seq);
  AsrModel<float> model(cfg, 3);
  const auto ckpt = model.to_checkpoint();
  for (std::size_t n : {1u, 2u, 5u, 10u}) {
    const std::vector<Checkpoint> copies(n, ckpt);
    const auto avg = average_parameters(copies);
    ASSERT_EQ(avg.params.size(), ckpt.params.size());
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      const auto a = avg.params[i].value.values();
      const auto b = ckpt.params[i].value.values();
      for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-7 * std::max(1.0, std::abs(b[k])));
    }
  }
}

TEST(Average, OppositeWeightsCancelExactly) {
  Rng rng(4);
  std::normal_distribution<double> g;
  std::vector<double> w(50), neg(50);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = g(rng);
    neg[i] = -w[i];
  }
  const std::vector<Checkpoint> pair{single_param_checkpoint(w), single_param_checkpoint(neg)};
  const auto avg = average_parameters(pair);
  for (double v : avg.params[0].value.values()) EXPECT_EQ(v, 0.0);
}

TEST(Average, MatchesPerElementOracle) {
  Rng rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<Checkpoint> ckpts;
  std::vector<std::vector<double>> raw;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v(40);
    for (auto& x : v) x = g(rng);
    raw.push_back(v);
    ckpts.push_back(single_param_checkpoint(v));
  }
  const auto avg = average_parameters(ckpts);
  const auto values = avg.params[0].value.values();
  for (std::size_t k = 0; k < 40; ++k) EXPECT_NEAR(values[k], (raw[0][k] + raw[1][k] + raw[2][k]) / 3.0, 1e-15);
}

TEST(Average, MismatchedCheckpointsAreRejected) {
  const std::vector<Checkpoint> bad{single_param_checkpoint({1.0, 2.0}), single_param_checkpoint({1.0})};
  EXPECT_THROW(average_parameters(bad), CheckpointError);
  EXPECT_THROW(average_parameters({}), CheckpointError);
}

TEST(CheckpointStore, BestRetentionAndCappedAveraging) {
  testing::TempDir dir;
  CheckpointStore store(dir.path(), 3);
  const double losses[] = {5.0, 3.0, 4.0, 1.0, 2.0};
  for (int e = 0; e < 5; ++e) store.add(single_param_checkpoint({static_cast<double>(e)}), 10L * (e + 1), e + 1, losses[e]);
  ASSERT_EQ(store.size(), 3u);
  const auto best = store.best(3);
  EXPECT_EQ(best[0].epoch, 4);
  EXPECT_EQ(best[1].epoch, 5);
  EXPECT_EQ(best[2].epoch, 2);
  EXPECT_FALSE(std::filesystem::exists(dir / "epoch0001.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch0004.ckpt"));

  const auto reopened = CheckpointStore::open(dir.path());
  ASSERT_EQ(reopened.size(), 3u);
  EXPECT_EQ(reopened.best(1)[0].epoch, 4);

  std::vector<std::string> warnings;
  const auto avg = average_checkpoints(reopened, 10, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_DOUBLE_EQ(avg.params[0].value.values()[0], (3.0 + 4.0 + 1.0) / 3.0);
  warnings.clear();
  const auto two = average_checkpoints(reopened, 2, &warnings);
  EXPECT_TRUE(warnings.empty());
  EXPECT_DOUBLE_EQ(two.params[0].value.values()[0], (3.0 + 4.0) / 2.0);
  EXPECT_THROW(CheckpointStore::open(dir / "missing"), DataError);
}

TEST(Batching, CoversEveryUtteranceOnceInLengthBuckets) {
  const auto cfg = tiny_config();
  const auto data = random_batch(cfg, 23, 6, false);
  Rng rng(7);
  const auto batches = make_batches(data, 4, rng);
  std::vector<int> seen(data.size(), 0);
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 4u);
    for (std::size_t i : b) ++seen[i];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_EQ(batches.size(), 6u);
}

TEST(Train, DeterministicAndOverfitsATinySet) {
  auto cfg = tiny_config();
  cfg.d_model = 16;
  cfg.ff_dim = 32;
  const auto data = random_batch(cfg, 2, 8, false);
  TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 2;
  tc.label_smoothing = 0.0;
  tc.schedule = Schedule{1e-5, 3e-3, 20, 0.0};

  AsrModel<float> a(cfg, 9);
  AsrModel<float> b(cfg, 9);
  const auto ra = train(a, data, data, tc, {});
  const auto rb = train(b, data, data, tc, {});
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) EXPECT_EQ(ra.log[i].val_loss, rb.log[i].val_loss);
  for (const auto& p : a.parameters()) EXPECT_TRUE(same_bits(p->value, b.parameters().at(p->name).value));

  EXPECT_LT(ra.log.back().val_loss, 0.1);
  for (const auto& u : data) EXPECT_EQ(a.transcribe(u.features, std::nullopt, {}), u.tokens);
}

TEST(Train, WritesOneCheckpointPerEpoch) {
  testing::TempDir dir;
  const auto cfg = tiny_config();
  const auto data = random_batch(cfg, 4, 10, false);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  AsrModel<float> model(cfg, 11);
  const auto r = train(model, data, data, tc, dir.path());
  EXPECT_EQ(r.steps, 6);
  EXPECT_EQ(r.store.size(), 3u);
  const auto last = load_checkpoint(dir / "epoch0003.ckpt");
  EXPECT_EQ(last.metadata.at("train.step"), "6");
  const auto restored = AsrModel<float>::from_checkpoint(last);
  for (const auto& p : model.parameters()) EXPECT_TRUE(same_bits(p->value, restored.parameters().at(p->name).value));
}

TEST(VisualPretrain, LearnsTheSyntheticClasses) {
  VisualConfig vc = tiny_config(FusionMode::emb).visual;
  vc.image_size = 16;
  vc.embedding_dim = 8;
  const auto set = make_visual_class_set(4, 12, 16, 3);
  PreprocessConfig pre;
  pre.size = 16;
  Rng rng(5);
  std::vector<Matrix<double>> images;
  for (const auto& img : set.images) images.push_back(preprocess(img, pre, false, rng).pixels);
  VisualClassifier<float> clf(vc, 4, 4);
  VisualPretrainConfig pc;
  pc.epochs = 15;
  pc.batch_size = 8;
  const double acc = pretrain_visual(clf, images, set.labels, pc);
  EXPECT_GE(acc, 0.9);
  const auto ckpt = visual_encoder_checkpoint(clf);
  for (const auto& rec : ckpt.params) EXPECT_EQ(rec.component, Component::visual_encoder) << rec.name;
}

}  // namespace
}  // namespace mmasr
