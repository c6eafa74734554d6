#pragma once

// Train-time spectrogram perturbation: time warp, frequency masks, time masks.
// All functions operate on a frames x bins feature matrix and leave its shape
// unchanged. Masked cells are filled with a single value, by default the
// mean of the matrix handed to the masking stage.

#include <optional>

#include "mmasr/audio.hpp"
#include "mmasr/parameters.hpp"

namespace mmasr {

struct AugmentPolicy {
  int warp_window = 0;       // W, frames
  int freq_mask_width = 0;   // F, bins
  int n_freq_masks = 0;      // mF
  int time_mask_width = 0;   // T_m, frames
  int n_time_masks = 0;      // mT
  double time_mask_ratio = 0.0;  // p, caps total masked frames at floor(p * T)

  void validate() const;
  bool is_identity() const;
  static AugmentPolicy toy_default() { return {5, 10, 2, 20, 2, 0.2}; }
};

struct Band {
  int start = 0;
  int width = 0;
};

// width ~ Uniform{0..max_width} (clamped to extent), start ~ Uniform{0..extent - width}.
Band sample_band(int extent, int max_width, Rng& rng);

Matrix<double> time_warp(const Matrix<double>& x, int warp_window, Rng& rng);
// Warp with an explicit pivot frame and displacement; identity when displacement is 0.
Matrix<double> time_warp_at(const Matrix<double>& x, int pivot, int displacement);

Matrix<double> freq_mask(const Matrix<double>& x, int max_width, int n_masks, Rng& rng,
                         std::optional<double> fill = std::nullopt);
Matrix<double> time_mask(const Matrix<double>& x, int max_width, int n_masks, double ratio, Rng& rng,
                         std::optional<double> fill = std::nullopt);

// Warp, then frequency masks, then time masks. Each stage draws from its own
// stream seeded from `rng`; both mask stages fill with the post-warp mean.
Matrix<double> apply_augment(const Matrix<double>& x, const AugmentPolicy& policy, Rng& rng);

}  // namespace mmasr
