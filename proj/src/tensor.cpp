#include "mmasr/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "mmasr/errors.hpp"

namespace mmasr {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written with a raw little-endian payload");

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', '1'};
constexpr std::uint32_t kMaxRank = 8;

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void round_to(std::vector<double>& values, DType dtype) {
  if (dtype != DType::f32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("tensor record truncated");
  return v;
}

}  // namespace

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

Tensor::Tensor(std::vector<std::size_t> shape, DType dtype)
    : shape_(std::move(shape)), values_(element_count(shape_), 0.0), dtype_(dtype) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values, DType dtype)
    : shape_(std::move(shape)), values_(std::move(values)), dtype_(dtype) {
  if (values_.size() != element_count(shape_)) {
    throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
  round_to(values_, dtype_);
}

void Tensor::set_dtype(DType dtype) {
  dtype_ = dtype;
  round_to(values_, dtype_);
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "x" : "") << shape[i];
  s << ']';
  return s.str();
}

void write_tensor_record(std::ostream& out, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
  if (t.dtype() == DType::f32) {
    std::vector<float> buf(t.values().begin(), t.values().end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

Tensor read_tensor_record(std::istream& in) {
  auto rank = get<std::uint32_t>(in);
  if (rank > kMaxRank) throw DataError("tensor rank " + std::to_string(rank) + " too large");
  std::vector<std::size_t> shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(get<std::uint64_t>(in));
  auto dtype_byte = get<std::uint8_t>(in);
  if (dtype_byte > 1) throw DataError("unknown dtype byte " + std::to_string(dtype_byte));
  auto dtype = static_cast<DType>(dtype_byte);
  std::size_t n = element_count(shape);
  std::vector<double> values(n);
  if (dtype == DType::f32) {
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    std::copy(buf.begin(), buf.end(), values.begin());
  } else {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!in) throw DataError("tensor payload truncated");
  return Tensor(std::move(shape), std::move(values), dtype);
}

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  write_tensor_record(out, t);
}

Tensor read_tensor(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad tensor magic (expected MMT1)");
  return read_tensor_record(in);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
  if (!out) throw DataError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_tensor(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace mmasr
