#pragma once

// Plain dense tensor used for persistence and for handing data between
// pipeline stages. Model math runs on Eigen matrices (see autodiff.hpp);
// this type only carries a shape, a dtype tag and row-major values.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mmasr {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string to_string(DType dtype);

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, DType dtype = DType::f32);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values, DType dtype = DType::f32);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  DType dtype() const { return dtype_; }
  void set_dtype(DType dtype);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Rank-2 view helpers. Vectors (rank 1) are treated as n x 1.
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_matrix() const;

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m, DType dtype);

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  DType dtype_ = DType::f32;
};

std::string shape_string(std::span<const std::size_t> shape);

// Binary tensor file: magic "MMT1", u32 rank, u64 extents[rank], u8 dtype,
// little-endian payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Shape/dtype/payload record without the file magic; shared with checkpoints.
void write_tensor_record(std::ostream& out, const Tensor& t);
Tensor read_tensor_record(std::istream& in);

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Tensor::to_matrix() const {
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  if (rank() == 1) {
    rows = static_cast<Eigen::Index>(shape_[0]);
  } else if (rank() == 2) {
    rows = static_cast<Eigen::Index>(shape_[0]);
    cols = static_cast<Eigen::Index>(shape_[1]);
  } else if (rank() != 0) {
    throw std::invalid_argument("to_matrix: tensor of rank " + std::to_string(rank()) +
                                " is not a matrix");
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
  for (std::size_t i = 0; i < values_.size(); ++i) m.data()[i] = static_cast<Scalar>(values_[i]);
  return m;
}

template <typename Derived>
Tensor Tensor::from_matrix(const Eigen::MatrixBase<Derived>& m, DType dtype) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(static_cast<double>(m(r, c)));
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(values), dtype);
}

}  // namespace mmasr
