#include "mmasr/specaugment.hpp"

#include <algorithm>
#include <cmath>

#include "mmasr/errors.hpp"

namespace mmasr {

void AugmentPolicy::validate() const {
  if (warp_window < 0 || freq_mask_width < 0 || n_freq_masks < 0 || time_mask_width < 0 || n_time_masks < 0)
    throw ParameterError("augment policy: widths and counts must be nonnegative");
  if (!(time_mask_ratio >= 0.0 && time_mask_ratio <= 1.0))
    throw ParameterError("augment policy: time mask ratio must be in [0, 1]");
}

bool AugmentPolicy::is_identity() const {
  bool no_freq = freq_mask_width == 0 || n_freq_masks == 0;
  bool no_time = time_mask_width == 0 || n_time_masks == 0 || time_mask_ratio == 0.0;
  return warp_window == 0 && no_freq && no_time;
}

Band sample_band(int extent, int max_width, Rng& rng) {
  int cap = std::clamp(max_width, 0, std::max(extent, 0));
  int width = std::uniform_int_distribution<int>(0, cap)(rng);
  int start = std::uniform_int_distribution<int>(0, extent - width)(rng);
  return {start, width};
}

Matrix<double> time_warp_at(const Matrix<double>& x, int pivot, int displacement) {
  const Eigen::Index frames = x.rows();
  if (displacement == 0 || frames < 3) return x;
  const double src_pivot = pivot;
  const double dst_pivot = pivot + displacement;
  const double last = static_cast<double>(frames - 1);
  Matrix<double> out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < frames; ++t) {
    // Map output frame t back to a source position: [0, dst_pivot] -> [0, src_pivot],
    // [dst_pivot, last] -> [src_pivot, last].
    const double td = static_cast<double>(t);
    double src = td <= dst_pivot ? (dst_pivot > 0.0 ? td * src_pivot / dst_pivot : 0.0)
                                 : src_pivot + (td - dst_pivot) * (last - src_pivot) / (last - dst_pivot);
    src = std::clamp(src, 0.0, last);
    const auto lo = static_cast<Eigen::Index>(std::floor(src));
    const Eigen::Index hi = std::min(lo + 1, frames - 1);
    const double frac = src - static_cast<double>(lo);
    out.row(t) = (1.0 - frac) * x.row(lo) + frac * x.row(hi);
  }
  return out;
}

Matrix<double> time_warp(const Matrix<double>& x, int warp_window, Rng& rng) {
  const auto frames = static_cast<int>(x.rows());
  if (warp_window <= 0 || frames <= 2 * warp_window) return x;
  int pivot = std::uniform_int_distribution<int>(warp_window, frames - warp_window - 1)(rng);
  int displacement = std::uniform_int_distribution<int>(-warp_window, warp_window)(rng);
  return time_warp_at(x, pivot, displacement);
}

Matrix<double> freq_mask(const Matrix<double>& x, int max_width, int n_masks, Rng& rng, std::optional<double> fill) {
  if (max_width <= 0 || n_masks <= 0 || x.size() == 0) return x;
  const double value = fill.value_or(x.mean());
  Matrix<double> out = x;
  for (int i = 0; i < n_masks; ++i) {
    Band b = sample_band(static_cast<int>(x.cols()), max_width, rng);
    if (b.width > 0) out.middleCols(b.start, b.width).setConstant(value);
  }
  return out;
}

Matrix<double> time_mask(const Matrix<double>& x, int max_width, int n_masks, double ratio, Rng& rng,
                         std::optional<double> fill) {
  const auto frames = static_cast<int>(x.rows());
  int budget = static_cast<int>(std::floor(ratio * frames));
  if (max_width <= 0 || n_masks <= 0 || budget <= 0 || x.size() == 0) return x;
  const double value = fill.value_or(x.mean());
  Matrix<double> out = x;
  for (int i = 0; i < n_masks && budget > 0; ++i) {
    Band b = sample_band(frames, std::min(max_width, budget), rng);
    budget -= b.width;
    if (b.width > 0) out.middleRows(b.start, b.width).setConstant(value);
  }
  return out;
}

Matrix<double> apply_augment(const Matrix<double>& x, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  Rng warp_rng(rng());
  Rng freq_rng(rng());
  Rng time_rng(rng());
  Matrix<double> warped = time_warp(x, policy.warp_window, warp_rng);
  const double fill = warped.size() ? warped.mean() : 0.0;
  Matrix<double> masked = freq_mask(warped, policy.freq_mask_width, policy.n_freq_masks, freq_rng, fill);
  return time_mask(masked, policy.time_mask_width, policy.n_time_masks, policy.time_mask_ratio, time_rng, fill);
}

}  // namespace mmasr
