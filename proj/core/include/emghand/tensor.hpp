#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace emghand {

/// Dense row-major tensor of doubles, rank 1-3. This is a plain data
/// container; differentiation lives in nn::Tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

  // rank-2 access
  std::int64_t rows() const { return shape_[0]; }
  std::int64_t cols() const { return shape_[1]; }
  double& at(std::int64_t r, std::int64_t c) { return values_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return values_[static_cast<std::size_t>(r * shape_[1] + c)]; }

  // rank-3 access
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return values_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return values_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  std::span<const double> row(std::int64_t r) const {
    return {values_.data() + r * shape_[1], static_cast<std::size_t>(shape_[1])};
  }
  std::span<double> row(std::int64_t r) {
    return {values_.data() + r * shape_[1], static_cast<std::size_t>(shape_[1])};
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v);

  std::string shape_str() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> values_;
};

}  // namespace emghand
