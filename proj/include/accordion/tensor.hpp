#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "accordion/errors.hpp"

namespace accordion {

// Dense float32 tensor, row-major, rank 1 or 2. Deliberately minimal: the
// kernels in ops.hpp own all the math, this is just shaped storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 2)
      throw ShapeError("Tensor: rank must be 1 or 2, got " + std::to_string(shape_.size()));
    std::size_t n = 1;
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("Tensor: zero-sized dimension");
      n *= d;
    }
    data_.assign(n, fill);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::size_t n, float fill = 0.0f) { return Tensor({n}, fill); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  float* row(std::size_t r) { return data_.data() + r * cols(); }
  const float* row(std::size_t r) const { return data_.data() + r * cols(); }

  void fill(float v) { data_.assign(data_.size(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool is_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

}  // namespace accordion
