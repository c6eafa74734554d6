#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "mmasr/parameters.hpp"
#include "mmasr/tensor.hpp"

namespace mmasr {

// Interleaved H x W x C pixels in [0, 1].
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> pixels;

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary 8-bit PPM (P6).
RawImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RawImage& img);
// H x W x 3 tensor file.
RawImage image_from_tensor(const Tensor& t);
RawImage load_image(const std::filesystem::path& path);  // .ppm or tensor file

RawImage resize_bilinear(const RawImage& img, int height, int width);
RawImage flip_horizontal(const RawImage& img);

struct PreprocessConfig {
  int size = 32;
  std::array<double, 3> mean = {0.5, 0.5, 0.5};
  std::array<double, 3> stddev = {0.25, 0.25, 0.25};
};

// Standardized image in network layout: 3 x (H * W), column index y * W + x.
struct Image {
  Matrix<double> pixels;
  int height = 0;
  int width = 0;
};

// Resize, standardize, and (when flip_enabled) mirror with probability 0.5.
Image preprocess(const RawImage& img, const PreprocessConfig& cfg, bool flip_enabled, Rng& rng);
Image flip_horizontal(const Image& img);

}  // namespace mmasr
