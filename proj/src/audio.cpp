#include "mmasr/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "mmasr/errors.hpp"

namespace mmasr {

namespace {

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char riff[4], wave[4];
  in.read(riff, 4);
  read_le<std::uint32_t>(in);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw DataError(path.string() + ": not a RIFF/WAVE file");

  Waveform w;
  bool have_fmt = false;
  while (in) {
    char id[4];
    in.read(id, 4);
    auto size = read_le<std::uint32_t>(in);
    if (!in) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      auto format = read_le<std::uint16_t>(in);
      auto channels = read_le<std::uint16_t>(in);
      w.sample_rate = static_cast<int>(read_le<std::uint32_t>(in));
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      auto bits = read_le<std::uint16_t>(in);
      if (format != 1 || channels != 1 || bits != 16)
        throw DataError(path.string() + ": only 16-bit mono PCM is supported");
      in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw DataError(path.string() + ": data chunk before fmt chunk");
      std::vector<std::int16_t> pcm(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(pcm.size() * 2));
      if (!in) throw DataError(path.string() + ": truncated data chunk");
      w.samples.reserve(pcm.size());
      for (auto s : pcm) w.samples.push_back(static_cast<double>(s) / 32768.0);
      if (w.sample_rate <= 0) throw DataError(path.string() + ": invalid sample rate");
      return w;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
  }
  throw DataError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate * 2));
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) {
    double clipped = std::clamp(s, -1.0, 1.0);
    auto v = static_cast<std::int16_t>(std::lround(std::clamp(clipped * 32768.0, -32768.0, 32767.0)));
    write_le<std::int16_t>(out, v);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void fft(std::span<Complex> data) {
  const std::size_t n = data.size();
  if (n == 0 || !std::has_single_bit(n)) throw ParameterError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        Complex w = std::polar(1.0, angle * static_cast<double>(k));
        Complex u = data[start + k];
        Complex v = data[start + k + len / 2] * w;
        data[start + k] = u + v;
        data[start + k + len / 2] = u - v;
      }
    }
  }
}

std::size_t samples_for_ms(double ms, int sample_rate) {
  return static_cast<std::size_t>(std::lround(ms * sample_rate / 1000.0));
}

std::size_t frame_count(std::size_t n_samples, std::size_t frame_length, std::size_t frame_shift) {
  if (frame_shift == 0) throw ParameterError("frame shift must be positive");
  if (n_samples < frame_length) return 0;
  return (n_samples - frame_length) / frame_shift + 1;
}

std::vector<double> make_window(Window window, std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (window == Window::hann && length > 1) {
    for (std::size_t i = 0; i < length; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(length - 1));
  }
  return w;
}

ComplexMatrix stft(const Waveform& w, const FrameConfig& cfg) {
  if (w.sample_rate <= 0) throw ParameterError("stft: sample rate must be positive");
  const std::size_t length = samples_for_ms(cfg.frame_length_ms, w.sample_rate);
  const std::size_t shift = samples_for_ms(cfg.frame_shift_ms, w.sample_rate);
  if (length == 0 || shift == 0) throw ParameterError("stft: frame length and shift must be positive");
  if (!std::has_single_bit(cfg.fft_size) || cfg.fft_size < length)
    throw ParameterError("stft: fft size must be a power of two no smaller than the frame length (" +
                         std::to_string(length) + " samples)");
  const std::size_t frames = frame_count(w.samples.size(), length, shift);
  if (frames == 0)
    throw DataError("stft: waveform of " + std::to_string(w.samples.size()) + " samples is shorter than one frame");

  const auto window = make_window(cfg.window, length);
  const std::size_t bins = cfg.fft_size / 2 + 1;
  ComplexMatrix out(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
  std::vector<Complex> buf(cfg.fft_size);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), Complex{});
    for (std::size_t i = 0; i < length; ++i) buf[i] = w.samples[f * shift + i] * window[i];
    fft(buf);
    for (std::size_t b = 0; b < bins; ++b) out(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = buf[b];
  }
  return out;
}

Matrix<double> power_spectrum(const ComplexMatrix& spectrum) { return spectrum.cwiseAbs2(); }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix<double> mel_filter_weights(int n_mels, std::size_t fft_size, double f_min, double f_max, int sample_rate) {
  if (n_mels < 2) throw ParameterError("mel filterbank: n_mels must be at least 2");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw ParameterError("mel filterbank: need 0 <= f_min < f_max <= sample_rate / 2");
  const std::size_t bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));

  Matrix<double> weights = Matrix<double>::Zero(n_mels, static_cast<Eigen::Index>(bins));
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * bin_hz;
      double v = 0.0;
      if (f > left && f <= center)
        v = (f - left) / (center - left);
      else if (f > center && f < right)
        v = (right - f) / (right - center);
      weights(m, static_cast<Eigen::Index>(b)) = v;
    }
  }
  return weights;
}

Matrix<double> mel_filterbank(const Matrix<double>& spec_power, int n_mels, double f_min, double f_max,
                              int sample_rate) {
  const auto fft_size = static_cast<std::size_t>((spec_power.cols() - 1) * 2);
  Matrix<double> weights = mel_filter_weights(n_mels, fft_size, f_min, f_max, sample_rate);
  return spec_power * weights.transpose();
}

FeatureMatrix logmel(const Waveform& w, const FeatureConfig& cfg) {
  const double f_max = cfg.f_max > 0.0 ? cfg.f_max : w.sample_rate / 2.0;
  Matrix<double> power = power_spectrum(stft(w, cfg.frame));
  Matrix<double> mel = mel_filterbank(power, cfg.n_mels, cfg.f_min, f_max, w.sample_rate);
  FeatureMatrix out;
  out.values = (mel.array() + cfg.log_floor).log().matrix();
  out.frame_length_ms = cfg.frame.frame_length_ms;
  out.frame_shift_ms = cfg.frame.frame_shift_ms;
  return out;
}

Matrix<double> FeatureStats::apply(const Matrix<double>& values) const {
  if (empty()) return values;
  if (values.cols() != mean.size())
    throw DimensionError("feature stats for " + std::to_string(mean.size()) + " dims applied to " +
                         std::to_string(values.cols()) + "-dim features");
  Matrix<double> out = values.rowwise() - mean.transpose();
  return out.array().rowwise() / stddev.transpose().array();
}

FeatureStats compute_feature_stats(std::span<const FeatureMatrix> features) {
  if (features.empty()) throw DataError("feature stats: no utterances");
  const Eigen::Index d = features.front().dims();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(d);
  double n = 0;
  for (const auto& f : features) {
    if (f.dims() != d) throw DimensionError("feature stats: inconsistent feature dimensions");
    sum += f.values.colwise().sum().transpose();
    sq += f.values.array().square().matrix().colwise().sum().transpose();
    n += static_cast<double>(f.frames());
  }
  FeatureStats s;
  s.mean = sum / n;
  Eigen::VectorXd var = (sq / n).array() - s.mean.array().square();
  s.stddev = var.cwiseMax(1e-8).cwiseSqrt();
  return s;
}

}  // namespace mmasr
