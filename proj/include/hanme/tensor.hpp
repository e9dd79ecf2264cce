#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hanme {

// Dense row-major double tensor with up to three axes. Shapes are fixed at
// construction; gradient buffers are kept as sibling tensors by the tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);  // 1-axis tensor

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // 2-axis views: a 1-axis tensor is treated as a single column.
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double v);
  void zero() { fill(0.0); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Exact shortest decimal text for a double; round-trips bit-for-bit.
std::string format_double(double v);
double parse_double(const std::string& s);  // throws FormatError on junk

}  // namespace hanme
