#include <gtest/gtest.h>

#include <cmath>

#include "mmasr/errors.hpp"
#include "mmasr/specaugment.hpp"

namespace mmasr {
namespace {

using M = Matrix<double>;

M random_features(Eigen::Index frames, Eigen::Index bins, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(-3.0, 2.0);
  M m(frames, bins);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Rows (or columns) whose every value equals `fill`.
std::vector<int> filled_rows(const M& m, double fill) {
  std::vector<int> rows;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if ((m.row(r).array() == fill).all()) rows.push_back(static_cast<int>(r));
  return rows;
}
std::vector<int> filled_cols(const M& m, double fill) {
  M t = m.transpose();
  return filled_rows(t, fill);
}

// Upper alpha = 0.01 quantile of chi-square (Wilson-Hilferty).
double chi2_critical_01(int dof) {
  const double k = dof;
  const double z = 2.3263478740408408;
  return k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3);
}

TEST(Augment, ZeroPolicyIsExactIdentity) {
  const M x = random_features(50, 20, 1);
  Rng rng(2);
  EXPECT_TRUE(AugmentPolicy{}.is_identity());
  EXPECT_EQ(apply_augment(x, AugmentPolicy{}, rng), x);
  EXPECT_EQ(time_warp(x, 0, rng), x);
  EXPECT_EQ(freq_mask(x, 0, 3, rng), x);
  EXPECT_EQ(freq_mask(x, 5, 0, rng), x);
  EXPECT_EQ(time_mask(x, 5, 2, 0.0, rng), x);
}

TEST(Augment, InvalidPolicyRejected) {
  AugmentPolicy p;
  p.freq_mask_width = -1;
  EXPECT_THROW(p.validate(), ParameterError);
  p = {};
  p.time_mask_ratio = 1.5;
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(TimeWarp, ZeroDisplacementAndShortInputs) {
  const M x = random_features(30, 8, 3);
  EXPECT_EQ(time_warp_at(x, 12, 0), x);
  Rng rng(4);
  EXPECT_EQ(time_warp(x, 15, rng), x);  // T <= 2W
}

TEST(TimeWarp, ConstantInTimeInputIsPreserved) {
  M x(40, 6);
  for (Eigen::Index c = 0; c < 6; ++c) x.col(c).setConstant(0.3 * static_cast<double>(c) - 1.0);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const M y = time_warp(x, 5, rng);
    ASSERT_EQ(y.rows(), 40);
    ASSERT_EQ(y.cols(), 6);
    EXPECT_LT((y.colwise().mean() - x.colwise().mean()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(TimeWarp, EndpointsStayAndPivotMoves) {
  M x(21, 1);
  for (Eigen::Index t = 0; t < 21; ++t) x(t, 0) = static_cast<double>(t);
  const M y = time_warp_at(x, 10, 3);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(y(20, 0), 20.0);
  EXPECT_DOUBLE_EQ(y(13, 0), 10.0);  // source pivot lands at pivot + displacement
}

TEST(FreqMask, MaskedBinsHoldTheUtteranceMean) {
  const M x = random_features(30, 40, 6);
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const M y = freq_mask(x, 10, 2, rng);
    const auto masked = filled_cols(y, x.mean());
    EXPECT_LE(masked.size(), 20u);
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      if (std::find(masked.begin(), masked.end(), c) == masked.end()) EXPECT_EQ(y.col(c), x.col(c));
  }
}

TEST(FreqMask, MeanWidthIsHalfTheMaximum) {
  const M x = random_features(5, 80, 8);
  const int f = 10;
  Rng rng(9);
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) total += static_cast<double>(filled_cols(freq_mask(x, f, 1, rng), x.mean()).size());
  EXPECT_NEAR(total / draws, f / 2.0, 0.05 * f / 2.0);
}

TEST(TimeMask, NeverExceedsCap) {
  Rng rng(10);
  for (int i = 0; i < 2000; ++i) {
    const int frames = 10 + static_cast<int>(rng() % 90);
    const M x = random_features(frames, 4, 100 + i);
    const int width = 1 + static_cast<int>(rng() % 20);
    const int n = 1 + static_cast<int>(rng() % 3);
    const double p = 0.05 * static_cast<double>(rng() % 21);
    const M y = time_mask(x, width, n, p, rng);
    const auto masked = filled_rows(y, x.mean());
    const auto cap = std::min(n * width, static_cast<int>(std::floor(p * frames)));
    EXPECT_LE(static_cast<int>(masked.size()), cap) << frames << " " << width << " " << n << " " << p;
  }
}

TEST(TimeMask, StartsAreUniformGivenWidth) {
  const int frames = 40;
  const int max_width = 4;
  const M x = random_features(frames, 3, 11);
  Rng rng(12);
  std::map<int, std::vector<int>> starts_by_width;
  for (int i = 0; i < 10000; ++i) {
    const auto masked = filled_rows(time_mask(x, max_width, 1, 1.0, rng), x.mean());
    if (!masked.empty()) starts_by_width[static_cast<int>(masked.size())].push_back(masked.front());
  }
  ASSERT_EQ(starts_by_width.size(), static_cast<std::size_t>(max_width));
  for (const auto& [w, starts] : starts_by_width) {
    const int cells = frames - w + 1;
    std::vector<double> counts(static_cast<std::size_t>(cells), 0.0);
    for (int s : starts) counts[static_cast<std::size_t>(s)] += 1.0;
    const double expected = static_cast<double>(starts.size()) / cells;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, chi2_critical_01(cells - 1)) << "width " << w;
  }
}

TEST(Apply, EqualsStagesOnSplitStreams) {
  const M x = random_features(60, 20, 13);
  const AugmentPolicy policy{4, 5, 2, 8, 2, 0.3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const M y = apply_augment(x, policy, rng);

    Rng parent(seed);
    Rng warp_rng(parent());
    Rng freq_rng(parent());
    Rng time_rng(parent());
    const M warped = time_warp(x, policy.warp_window, warp_rng);
    const double fill = warped.mean();
    const M masked = freq_mask(warped, policy.freq_mask_width, policy.n_freq_masks, freq_rng, fill);
    const M expected =
        time_mask(masked, policy.time_mask_width, policy.n_time_masks, policy.time_mask_ratio, time_rng, fill);
    EXPECT_EQ(y, expected);
    EXPECT_EQ(y.rows(), x.rows());
    EXPECT_EQ(y.cols(), x.cols());
  }
}

TEST(Apply, DeterministicUnderSeed) {
  const M x = random_features(60, 20, 14);
  Rng a(99);
  Rng b(99);
  EXPECT_EQ(apply_augment(x, AugmentPolicy::toy_default(), a), apply_augment(x, AugmentPolicy::toy_default(), b));
}

}  // namespace
}  // namespace mmasr
