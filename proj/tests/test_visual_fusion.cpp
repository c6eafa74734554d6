#include <gtest/gtest.h>

#include "mmasr/errors.hpp"
#include "mmasr/fusion.hpp"
#include "mmasr/image.hpp"
#include "mmasr/visual_encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

namespace mmasr {
namespace {

using M = Matrix<double>;

M random(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return normal_init<double>(r, c, scale, rng);
}

RawImage random_raw(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RawImage img{h, w, 3, {}};
  img.pixels.resize(static_cast<std::size_t>(h * w * 3));
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

// --- image preprocessing ---------------------------------------------------

TEST(Preprocess, ResizeOfConstantImageIsConstant) {
  RawImage img{13, 21, 3, std::vector<double>(13 * 21 * 3, 0.37)};
  const auto r = resize_bilinear(img, 32, 32);
  for (double p : r.pixels) EXPECT_NEAR(p, 0.37, 1e-12);
}

TEST(Preprocess, FlipIsAnInvolutionAndDisabledFlipIsDeterministic) {
  const auto raw = random_raw(20, 30, 1);
  EXPECT_EQ(flip_horizontal(flip_horizontal(raw)).pixels, raw.pixels);
  Rng a(1), b(2);
  const auto x = preprocess(raw, PreprocessConfig{}, false, a);
  const auto y = preprocess(raw, PreprocessConfig{}, false, b);
  EXPECT_EQ(x.pixels, y.pixels);
  EXPECT_EQ(x.pixels.rows(), 3);
  EXPECT_EQ(x.pixels.cols(), 32 * 32);
  EXPECT_EQ(flip_horizontal(flip_horizontal(x)).pixels, x.pixels);
}

TEST(Preprocess, FlipHappensAboutHalfTheTime) {
  const auto raw = random_raw(32, 32, 2);
  Rng none(0);
  const auto plain = preprocess(raw, PreprocessConfig{}, false, none);
  Rng rng(3);
  int flipped = 0;
  for (int i = 0; i < 1000; ++i) flipped += preprocess(raw, PreprocessConfig{}, true, rng).pixels != plain.pixels;
  EXPECT_NEAR(flipped, 500, 60);
}

TEST(Preprocess, Standardization) {
  RawImage img{8, 8, 3, std::vector<double>(8 * 8 * 3, 0.75)};
  Rng rng(0);
  const auto x = preprocess(img, PreprocessConfig{8, {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}}, false, rng);
  EXPECT_TRUE((x.pixels.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST(Preprocess, NonRgbIsRejected) {
  RawImage grey{8, 8, 1, std::vector<double>(64, 0.5)};
  Rng rng(0);
  EXPECT_THROW(preprocess(grey, PreprocessConfig{}, false, rng), DataError);
}

TEST(Ppm, RoundTripAt8Bits) {
  testing::TempDir dir;
  const auto img = random_raw(5, 7, 4);
  write_ppm(dir / "x.ppm", img);
  const auto r = read_ppm(dir / "x.ppm");
  ASSERT_EQ(r.height, 5);
  ASSERT_EQ(r.width, 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(r.pixels[i], img.pixels[i], 0.5 / 255.0 + 1e-12);
}

// --- convolution layout ----------------------------------------------------

TEST(Conv2d, OutputIsRowMajorOverTheGrid) {
  ParameterSet<double> params;
  Rng rng(5);
  auto conv = Conv2d<double>::create(params, "c", Component::visual_encoder, 2, 2, 3, 2, 1, rng);
  // Kernel that copies the centre tap of each channel.
  conv.weight->value.setZero();
  for (int c = 0; c < 2; ++c) conv.weight->value(c, c * 9 + 4) = 1.0;
  conv.bias->value.setZero();
  const int h = 7, w = 9;
  const M x = random(2, h * w, 6);
  Tape<double> tape;
  auto out = conv(tape, tape.constant(x), h, w);
  ASSERT_EQ(out.height, 4);
  ASSERT_EQ(out.width, 5);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < out.height; ++i)
      for (int j = 0; j < out.width; ++j)
        EXPECT_EQ(out.values.value()(c, i * out.width + j), x(c, (2 * i) * w + 2 * j));
}

// --- visual encoder --------------------------------------------------------

VisualConfig small_visual(int size = 16, int dim = 8, int gmlp = 0) {
  VisualConfig c;
  c.image_size = size;
  c.stem_channels = 4;
  c.n_blocks = 3;
  c.embedding_dim = dim;
  c.n_gmlp = gmlp;
  return c;
}

TEST(VisualEncoder, ShapesAndPoolingIdentity) {
  Rng rng_cfg(7);
  for (int trial = 0; trial < 6; ++trial) {
    const int size = 8 * (1 + static_cast<int>(rng_cfg() % 4));
    const int dim = 4 * (1 + static_cast<int>(rng_cfg() % 4));
    const auto cfg = small_visual(size, dim);
    ParameterSet<double> params;
    Rng rng(8);
    VisualEncoder<double> enc(cfg, params, rng);
    const M img = random(3, size * size, 9);
    Tape<double> tape(false);
    auto grid = enc.encode_grid(tape, tape.constant(img));
    auto global = enc.encode_global(tape, tape.constant(img));
    const int g = cfg.grid_size();
    EXPECT_EQ(g, (size + 7) / 8);
    EXPECT_EQ(grid.rows(), dim);
    EXPECT_EQ(grid.cols(), g * g);
    EXPECT_EQ(global.rows(), dim);
    EXPECT_EQ(global.cols(), 1);
    EXPECT_LT((grid.value().rowwise().mean() - global.value()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(VisualEncoder, ToyGridHasSixteenCells) {
  VisualConfig cfg;
  EXPECT_EQ(cfg.grid_size(), 4);
}

TEST(VisualEncoder, ParametersCarryTheVisualTag) {
  ParameterSet<double> params;
  Rng rng(10);
  VisualEncoder<double> enc(small_visual(16, 8, 2), params, rng);
  ASSERT_GT(params.size(), 0u);
  for (const auto& p : params) EXPECT_EQ(p->component, Component::visual_encoder) << p->name;
}

TEST(VisualEncoder, GradientsOnAnEightPixelImage) {
  ParameterSet<double> params;
  Rng rng(11);
  auto cfg = small_visual(8, 4);
  cfg.stem_channels = 2;
  VisualEncoder<double> enc(cfg, params, rng);
  for (auto& p : params)
    if (p->value.isZero()) p->value = random(p->value.rows(), p->value.cols(), 12, 0.3);
  const M img = random(3, 64, 13);
  auto r = testing::check_parameter_gradients(params, [&](Tape<double>& tape) {
    return testing::contract(tape, enc.encode_grid(tape, tape.constant(img)));
  });
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Gmlp, ZeroLayersIsIdentityAndSingleEmbeddingIsRejected) {
  ParameterSet<double> params;
  Rng rng(14);
  VisualEncoder<double> plain(small_visual(16, 8, 0), params, rng);
  Tape<double> tape;
  auto grid = tape.constant(random(8, 4, 15));
  EXPECT_EQ(plain.refine(tape, grid).value(), grid.value());

  ParameterSet<double> params2;
  VisualEncoder<double> with(small_visual(16, 8, 2), params2, rng);
  EXPECT_THROW(with.refine(tape, tape.constant(random(8, 1, 16))), PreconditionError);
}

TEST(Gmlp, InitializationAndShape) {
  ParameterSet<double> params;
  Rng rng(17);
  auto layer = GmlpLayer<double>::create(params, "g", Component::visual_encoder, 6, 5, rng);
  EXPECT_EQ(layer.spatial_bias->value, M::Ones(5, 1));
  EXPECT_LT(layer.spatial_weight->value.cwiseAbs().maxCoeff(), 1e-2);
  Tape<double> tape;
  auto y = layer(tape, tape.constant(random(6, 5, 18)));
  EXPECT_EQ(y.rows(), 6);
  EXPECT_EQ(y.cols(), 5);
}

TEST(Gmlp, GradientsPerLayer) {
  ParameterSet<double> params;
  Rng rng(19);
  auto layer = GmlpLayer<double>::create(params, "g", Component::visual_encoder, 4, 3, rng);
  for (auto& p : params) p->value = random(p->value.rows(), p->value.cols(), 20 + p->value.size(), 0.5);
  const M x = random(4, 3, 21);
  auto r = testing::check_parameter_gradients(
      params, [&](Tape<double>& tape) { return testing::contract(tape, layer(tape, tape.constant(x))); });
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  auto ri = testing::check_input_gradients(
      [&](Tape<double>& tape, const std::vector<Var<double>>& in) { return layer(tape, in[0]); }, {x});
  EXPECT_LT(ri.max_rel_error, 1e-4) << ri.worst;
}

// --- fusion ----------------------------------------------------------------

struct FusionFixture {
  ParameterSet<double> params;
  Fusion<double> fusion;
  FusionFixture(FusionMode mode, int da, int dv, int pa = 2, int pv = 2, std::uint64_t seed = 1) {
    Rng rng(seed);
    fusion = Fusion<double>({mode, pa, pv}, da, dv, params, rng);
  }
};

TEST(Fusion, ShapeContractsOverRandomConfigurations) {
  Rng rng(22);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  for (int i = 0; i < 200; ++i) {
    const int da = pick(1, 24), t = pick(1, 30), dv = pick(1, 24), k = pick(1, 20);
    FusionFixture emb(FusionMode::emb, da, dv, pick(1, 8), pick(1, 8), i);
    FusionFixture seq(FusionMode::seq, da, dv, 2, 2, i);
    Tape<double> tape(false);
    auto speech = tape.constant(random(da, t, i));
    auto e = emb.fusion.fuse_emb(tape, speech, tape.constant(random(dv, 1, i + 1)));
    EXPECT_EQ(e.values.rows(), da);
    EXPECT_EQ(e.values.cols(), t);
    auto s = seq.fusion.fuse_seq(tape, speech, tape.constant(random(dv, k, i + 2)));
    EXPECT_EQ(s.values.rows(), da);
    EXPECT_EQ(s.values.cols(), t + k);
    EXPECT_EQ(s.boundary, t);
  }
}

TEST(Fusion, ZeroOutputProjectionReturnsSpeech) {
  FusionFixture f(FusionMode::emb, 6, 4);
  EXPECT_TRUE(f.params.at("fusion.out_proj.w").value.isZero());
  Tape<double> tape;
  auto speech = tape.constant(random(6, 5, 23));
  auto out = f.fusion.fuse(tape, speech, tape.constant(random(4, 1, 24)));
  EXPECT_EQ(out.values.value(), speech.value());
}

TEST(Fusion, EmbMatchesScalarLoopOracle) {
  const int da = 4, t = 3, dv = 2, pa = 2, pv = 2;
  FusionFixture f(FusionMode::emb, da, dv, pa, pv);
  for (auto& p : f.params) p->value = random(p->value.rows(), p->value.cols(), 25 + p->value.size());
  const M s = random(da, t, 26);
  const M v = random(dv, 1, 27);
  const M& wa = f.params.at("fusion.audio_proj.w").value;
  const M& ba = f.params.at("fusion.audio_proj.b").value;
  const M& wv = f.params.at("fusion.visual_proj.w").value;
  const M& bv = f.params.at("fusion.visual_proj.b").value;
  const M& wo = f.params.at("fusion.out_proj.w").value;
  const M& bo = f.params.at("fusion.out_proj.b").value;

  M expected(da, t);
  for (int col = 0; col < t; ++col) {
    std::vector<double> joint(pa + pv);
    for (int r = 0; r < pa; ++r) {
      double acc = ba(r, 0);
      for (int c = 0; c < da; ++c) acc += wa(r, c) * s(c, col);
      joint[static_cast<std::size_t>(r)] = acc;
    }
    for (int r = 0; r < pv; ++r) {
      double acc = bv(r, 0);
      for (int c = 0; c < dv; ++c) acc += wv(r, c) * v(c, 0);
      joint[static_cast<std::size_t>(pa + r)] = acc;
    }
    for (int r = 0; r < da; ++r) {
      double acc = bo(r, 0);
      for (int c = 0; c < pa + pv; ++c) acc += wo(r, c) * joint[static_cast<std::size_t>(c)];
      expected(r, col) = s(r, col) + acc;
    }
  }
  Tape<double> tape;
  auto out = f.fusion.fuse_emb(tape, tape.constant(s), tape.constant(v));
  EXPECT_LT((out.values.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fusion, SeqKeepsSpeechColumnsAndProjectsVisual) {
  const int da = 5, t = 4, dv = 3;
  FusionFixture f(FusionMode::seq, da, dv);
  const M s = random(da, t, 28);
  const M v = random(dv, 1, 29);
  Tape<double> tape;
  auto out = f.fusion.fuse_seq(tape, tape.constant(s), tape.constant(v)).values.value();
  EXPECT_EQ(out.leftCols(t), s);
  const M& w = f.params.at("fusion.visual_proj.w").value;
  const M& b = f.params.at("fusion.visual_proj.b").value;
  for (int r = 0; r < da; ++r) {
    double acc = b(r, 0);
    for (int c = 0; c < dv; ++c) acc += w(r, c) * v(c, 0);
    EXPECT_NEAR(out(r, t), acc, 1e-12);
  }
}

TEST(Fusion, DispatchAndErrors) {
  FusionFixture none(FusionMode::none, 4, 3);
  FusionFixture emb(FusionMode::emb, 4, 3);
  FusionFixture seq(FusionMode::seq, 4, 3);
  Tape<double> tape;
  auto speech = tape.constant(random(4, 6, 30));
  auto vis = tape.constant(random(3, 1, 31));
  EXPECT_EQ(none.fusion.fuse(tape, speech, std::nullopt).values.value(), speech.value());
  EXPECT_EQ(none.params.size(), 0u);
  EXPECT_EQ(emb.fusion.fuse(tape, speech, vis).values.value(), emb.fusion.fuse_emb(tape, speech, vis).values.value());
  EXPECT_EQ(seq.fusion.fuse(tape, speech, vis).values.value(), seq.fusion.fuse_seq(tape, speech, vis).values.value());
  EXPECT_THROW(emb.fusion.fuse(tape, speech, std::nullopt), std::invalid_argument);
  EXPECT_THROW(seq.fusion.fuse(tape, speech, std::nullopt), std::invalid_argument);
  EXPECT_THROW(emb.fusion.fuse_emb(tape, speech, tape.constant(random(3, 4, 32))), PreconditionError);
  EXPECT_THROW(emb.fusion.fuse_emb(tape, tape.constant(random(5, 6, 33)), vis), DimensionError);
  EXPECT_THROW(seq.fusion.fuse_seq(tape, speech, tape.constant(random(2, 4, 34))), DimensionError);
}

TEST(Fusion, ParametersAreTaggedFusion) {
  FusionFixture f(FusionMode::emb, 4, 3);
  for (const auto& p : f.params) EXPECT_EQ(p->component, Component::fusion);
}

TEST(Fusion, GradientsReachBothModalities) {
  for (auto mode : {FusionMode::emb, FusionMode::seq}) {
    FusionFixture f(mode, 4, 3);
    for (auto& p : f.params) p->value = random(p->value.rows(), p->value.cols(), 35 + p->value.size());
    Tape<double> tape;
    auto s = tape.variable(random(4, 5, 36));
    auto v = tape.variable(random(3, 1, 37));
    tape.backward(testing::contract(tape, f.fusion.fuse(tape, s, v).values));
    EXPECT_GT(tape.gradient(s).norm(), 0.0);
    EXPECT_GT(tape.gradient(v).norm(), 0.0);
    auto r = testing::check_input_gradients(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) { return f.fusion.fuse(t, in[0], in[1]).values; },
        {random(4, 5, 38), random(3, 1, 39)});
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

}  // namespace
}  // namespace mmasr
