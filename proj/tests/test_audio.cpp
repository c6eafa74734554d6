#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "mmasr/audio.hpp"
#include "mmasr/errors.hpp"
#include "support/tempdir.hpp"

namespace mmasr {
namespace {

std::vector<Complex> naive_dft(const std::vector<Complex>& x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

Waveform noise(std::size_t n, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = u(rng);
  return w;
}

Waveform tone(double hz, double seconds, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  for (std::size_t i = 0; i < n; ++i)
    w.samples.push_back(0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  return w;
}

TEST(Framing, OneSecondGives98Frames) {
  EXPECT_EQ(frame_count(16000, samples_for_ms(25, 16000), samples_for_ms(10, 16000)), 98u);
  Waveform w;
  w.samples.assign(16000, 0.0);
  EXPECT_EQ(stft(w, FrameConfig{}).rows(), 98);
}

TEST(Framing, FormulaHoldsForRandomLengths) {
  Rng rng(1);
  std::uniform_int_distribution<std::size_t> len(400, 20000);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = len(rng);
    Waveform w;
    w.samples.assign(n, 0.1);
    EXPECT_EQ(static_cast<std::size_t>(stft(w, FrameConfig{}).rows()), (n - 400) / 160 + 1) << n;
  }
}

TEST(Framing, ShortWaveformIsADataError) {
  Waveform w;
  w.samples.assign(399, 0.0);
  EXPECT_THROW(stft(w, FrameConfig{}), DataError);
}

TEST(Fft, MatchesNaiveDft) {
  Rng rng(2);
  std::normal_distribution<double> g;
  std::vector<Complex> x(256);
  for (auto& v : x) v = Complex(g(rng), g(rng));
  const auto expected = naive_dft(x);
  auto y = x;
  fft(y);
  double max_ref = 0.0;
  for (const auto& v : expected) max_ref = std::max(max_ref, std::abs(v));
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_LT(std::abs(y[k] - expected[k]) / max_ref, 1e-9) << k;
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<Complex> x(12);
  EXPECT_THROW(fft(x), ParameterError);
}

TEST(Fft, Parseval) {
  Rng rng(3);
  std::normal_distribution<double> g;
  std::vector<Complex> x(512);
  double time_energy = 0.0;
  for (std::size_t i = 0; i < 400; ++i) {
    x[i] = g(rng);
    time_energy += std::norm(x[i]);
  }
  fft(x);
  double freq_energy = 0.0;
  for (const auto& v : x) freq_energy += std::norm(v);
  EXPECT_NEAR(freq_energy / (512.0 * time_energy), 1.0, 1e-9);
}

TEST(Stft, ConstantSignalOnlyInDcBinWithRectangularWindow) {
  Waveform w;
  w.samples.assign(4000, 0.3);
  FrameConfig cfg;
  cfg.frame_length_ms = 32.0;  // 512 samples: no zero padding
  cfg.window = Window::rectangular;
  const auto power = power_spectrum(stft(w, cfg));
  for (Eigen::Index f = 0; f < power.rows(); ++f) {
    const double dc = power(f, 0);
    for (Eigen::Index b = 1; b < power.cols(); ++b) EXPECT_LT(power(f, b), 1e-10 * dc);
  }
}

TEST(MelFilterbank, BinsInsideTheBandAreCovered) {
  for (int n_mels : {2, 10, 40, 80}) {
    const auto w = mel_filter_weights(n_mels, 512, 100.0, 7000.0, 16000);
    EXPECT_TRUE((w.array() >= 0.0).all());
    for (Eigen::Index b = 0; b < w.cols(); ++b) {
      const double hz = static_cast<double>(b) * 16000.0 / 512.0;
      if (hz > 100.0 && hz < 7000.0) EXPECT_GT(w.col(b).sum(), 0.0) << "n_mels " << n_mels << " bin " << b;
    }
  }
}

TEST(MelFilterbank, TwoFiltersAreValidTriangles) {
  const auto w = mel_filter_weights(2, 512, 0.0, 8000.0, 16000);
  ASSERT_EQ(w.rows(), 2);
  for (Eigen::Index m = 0; m < 2; ++m) {
    EXPECT_GT(w.row(m).maxCoeff(), 0.0);
    // rises then falls: no interior local minimum
    Eigen::Index peak;
    w.row(m).maxCoeff(&peak);
    for (Eigen::Index b = 1; b <= peak; ++b) EXPECT_GE(w(m, b), w(m, b - 1));
    for (Eigen::Index b = peak + 1; b < w.cols(); ++b) EXPECT_LE(w(m, b), w(m, b - 1));
  }
}

TEST(MelFilterbank, ToneAtCentreFrequencyPeaksInItsFilter) {
  const int n_mels = 24;
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(8000.0);
  FeatureConfig cfg;
  cfg.n_mels = n_mels;
  cfg.frame.frame_length_ms = 64.0;
  cfg.frame.fft_size = 1024;
  for (int m = 2; m < n_mels; m += 3) {
    const double centre = mel_to_hz(lo + (hi - lo) * (m + 1) / (n_mels + 1));
    const auto feats = logmel(tone(centre, 0.3), cfg);
    Eigen::Index best;
    feats.values.row(feats.frames() / 2).maxCoeff(&best);
    EXPECT_EQ(best, m) << centre << " Hz";
  }
}

TEST(MelFilterbank, InvalidBandEdges) {
  EXPECT_THROW(mel_filter_weights(10, 512, 5000.0, 4000.0, 16000), ParameterError);
  EXPECT_THROW(mel_filter_weights(10, 512, 0.0, 9000.0, 16000), ParameterError);
  EXPECT_THROW(mel_filter_weights(1, 512, 0.0, 8000.0, 16000), ParameterError);
}

TEST(MelScale, Definition) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(Logmel, SilenceIsLogFloor) {
  Waveform w;
  w.samples.assign(8000, 0.0);
  const auto f = logmel(w, FeatureConfig{});
  EXPECT_LT((f.values.array() - std::log(1e-10)).abs().maxCoeff(), 1e-12);
}

TEST(Logmel, DoublingAmplitudeAddsLogFour) {
  const auto w = noise(8000, 0.25, 4);
  auto w2 = w;
  for (auto& s : w2.samples) s *= 2.0;
  const auto a = logmel(w, FeatureConfig{});
  const auto b = logmel(w2, FeatureConfig{});
  EXPECT_LT(((b.values.array() - a.values.array()) - std::log(4.0)).abs().maxCoeff(), 1e-6);
}

TEST(Logmel, EqualsComposedStages) {
  const auto w = noise(6000, 0.5, 5);
  FeatureConfig cfg;
  cfg.n_mels = 40;
  cfg.f_min = 50.0;
  const auto f = logmel(w, cfg);
  const Matrix<double> mel = mel_filterbank(power_spectrum(stft(w, cfg.frame)), 40, 50.0, 8000.0, 16000);
  const Matrix<double> expected = (mel.array() + cfg.log_floor).log().matrix();
  EXPECT_EQ(f.values, expected);
  EXPECT_TRUE(f.values.allFinite());
}

TEST(FeatureStats, StandardizesTrainingData) {
  std::vector<FeatureMatrix> feats(3);
  for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = logmel(noise(4000 + 800 * i, 0.3, 6 + i), FeatureConfig{});
  const auto stats = compute_feature_stats(feats);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(80);
  Eigen::Index frames = 0;
  for (const auto& f : feats) {
    sum += stats.apply(f.values).colwise().sum().transpose();
    frames += f.frames();
  }
  EXPECT_LT((sum / static_cast<double>(frames)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Wav, RoundTripWithinQuantization) {
  testing::TempDir dir;
  const auto w = noise(1234, 0.9, 7);
  write_wav(dir / "a.wav", w);
  const auto r = read_wav(dir / "a.wav");
  ASSERT_EQ(r.samples.size(), w.samples.size());
  EXPECT_EQ(r.sample_rate, 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32767.0);
}

TEST(Wav, MalformedFilesAreDataErrors) {
  testing::TempDir dir;
  EXPECT_THROW(read_wav(dir / "missing.wav"), DataError);
  {
    std::ofstream out(dir / "bad.wav", std::ios::binary);
    out << "not a wave file at all";
  }
  EXPECT_THROW(read_wav(dir / "bad.wav"), DataError);
}

}  // namespace
}  // namespace mmasr
