#pragma once

// Waveform I/O and the log-mel feature pipeline:
// framing -> Hann window -> radix-2 FFT -> power -> mel triangles -> log.

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mmasr/parameters.hpp"

namespace mmasr {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;
};

// 16-bit signed little-endian PCM, mono.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::span<Complex> data);

enum class Window { hann, rectangular };

struct FrameConfig {
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  std::size_t fft_size = 512;
  Window window = Window::hann;
};

std::size_t samples_for_ms(double ms, int sample_rate);
// floor((n - length) / shift) + 1 for n >= length, else 0.
std::size_t frame_count(std::size_t n_samples, std::size_t frame_length, std::size_t frame_shift);
std::vector<double> make_window(Window window, std::size_t length);

// One-sided spectrum, frames x (fft_size / 2 + 1).
ComplexMatrix stft(const Waveform& w, const FrameConfig& cfg);
Matrix<double> power_spectrum(const ComplexMatrix& spectrum);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (fft_size / 2 + 1) triangular filters equally spaced on the mel scale.
Matrix<double> mel_filter_weights(int n_mels, std::size_t fft_size, double f_min, double f_max, int sample_rate);
// spec_power: frames x bins -> frames x n_mels.
Matrix<double> mel_filterbank(const Matrix<double>& spec_power, int n_mels, double f_min, double f_max,
                              int sample_rate);

struct FeatureConfig {
  FrameConfig frame;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects the Nyquist frequency
  double log_floor = 1e-10;
};

struct FeatureMatrix {
  Matrix<double> values;  // frames x n_mels
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

FeatureMatrix logmel(const Waveform& w, const FeatureConfig& cfg);

// Per-dimension mean / standard deviation over a training set.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  bool empty() const { return mean.size() == 0; }
  Matrix<double> apply(const Matrix<double>& values) const;
};

FeatureStats compute_feature_stats(std::span<const FeatureMatrix> features);

}  // namespace mmasr
