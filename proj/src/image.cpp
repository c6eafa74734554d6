#include "mmasr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "mmasr/errors.hpp"

namespace mmasr {

namespace {

void skip_ppm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

RawImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError(path.string() + ": only binary RGB PPM (P6) is supported");
  int w = 0, h = 0, maxval = 0;
  skip_ppm_space(in);
  in >> w;
  skip_ppm_space(in);
  in >> h;
  skip_ppm_space(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255) throw DataError(path.string() + ": malformed PPM header");
  RawImage img{h, w, 3, std::vector<double>(static_cast<std::size_t>(w) * h * 3)};
  std::vector<unsigned char> buf(img.pixels.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw DataError(path.string() + ": truncated PPM payload");
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const RawImage& img) {
  if (img.channels != 3) throw DataError("write_ppm: image must have 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

RawImage image_from_tensor(const Tensor& t) {
  if (t.rank() != 3) throw DataError("image tensor must be H x W x C, got " + shape_string(t.shape()));
  RawImage img{static_cast<int>(t.extent(0)), static_cast<int>(t.extent(1)), static_cast<int>(t.extent(2)),
               std::vector<double>(t.values().begin(), t.values().end())};
  return img;
}

RawImage load_image(const std::filesystem::path& path) {
  if (path.extension() == ".ppm") return read_ppm(path);
  return image_from_tensor(load_tensor(path));
}

RawImage resize_bilinear(const RawImage& img, int height, int width) {
  if (img.height <= 0 || img.width <= 0) throw DataError("resize: empty image");
  RawImage out{height, width, img.channels, std::vector<double>(static_cast<std::size_t>(height) * width * img.channels)};
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    int y0 = static_cast<int>(std::floor(fy));
    int y1 = std::min(y0 + 1, img.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      int x0 = static_cast<int>(std::floor(fx));
      int x1 = std::min(x0 + 1, img.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        double bottom = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = (1 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

RawImage flip_horizontal(const RawImage& img) {
  RawImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.pixels.col(y * img.width + x) = img.pixels.col(y * img.width + (img.width - 1 - x));
  return out;
}

Image preprocess(const RawImage& img, const PreprocessConfig& cfg, bool flip_enabled, Rng& rng) {
  if (img.channels != 3) throw DataError("preprocess: expected an RGB image, got " + std::to_string(img.channels) +
                                         " channels");
  RawImage resized = (img.height == cfg.size && img.width == cfg.size) ? img : resize_bilinear(img, cfg.size, cfg.size);
  Image out;
  out.height = cfg.size;
  out.width = cfg.size;
  out.pixels.resize(3, static_cast<Eigen::Index>(cfg.size) * cfg.size);
  for (int y = 0; y < cfg.size; ++y)
    for (int x = 0; x < cfg.size; ++x)
      for (int c = 0; c < 3; ++c)
        out.pixels(c, y * cfg.size + x) = (resized.at(y, x, c) - cfg.mean[c]) / cfg.stddev[c];
  if (flip_enabled && std::bernoulli_distribution(0.5)(rng)) out = flip_horizontal(out);
  return out;
}

}  // namespace mmasr
