#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "splab/error.hpp"
#include "splab/rng.hpp"

namespace splab {

// Shape of rank <= 3. Trailing dims are 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() > 3) throw DimensionError("Shape: rank > 3 not supported");
    for (int d : dims) {
      if (d <= 0) throw DimensionError("Shape: non-positive dimension");
      d_[rank_++] = d;
    }
  }

  static Shape scalar() { return Shape{1}; }

  int rank() const { return rank_; }
  int dim(int i) const { return d_[i]; }
  int rows() const { return d_[0]; }
  int cols() const { return d_[1]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= d_[i];
    return rank_ == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (d_[i] != o.d_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += "x";
      s += std::to_string(d_[i]);
    }
    return s + "]";
  }

 private:
  std::array<int, 3> d_{1, 1, 1};
  int rank_ = 0;
};

// Dense float32 tensor, row-major. Value semantics; the grad buffer (when
// allocated) travels with the tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), data_(static_cast<size_t>(shape.numel()), fill) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_.numel())
      throw DimensionError("Tensor: data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, double mean = 0.0) {
    Tensor t(shape);
    rng.fill_normal(t.data(), t.size(), mean, stddev);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  int rows() const { return shape_.rows(); }
  int cols() const { return shape_.cols(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return {data_.data(), data_.size()}; }
  std::span<const float> span() const { return {data_.data(), data_.size()}; }

  float& at(int i) { return data_[static_cast<size_t>(i)]; }
  float at(int i) const { return data_[static_cast<size_t>(i)]; }
  float& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_.cols() + j]; }
  float at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_.cols() + j]; }
  float* row(int i) { return data_.data() + static_cast<size_t>(i) * shape_.cols(); }
  const float* row(int i) const { return data_.data() + static_cast<size_t>(i) * shape_.cols(); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  bool has_grad() const { return !grad_.empty(); }
  std::vector<float>& grad() {
    if (grad_.empty()) grad_.assign(data_.size(), 0.0f);
    return grad_;
  }
  const std::vector<float>& grad() const { return grad_; }
  void zero_grad() { grad_.assign(data_.size(), 0.0f); }
  void drop_grad() { grad_.clear(); }

  bool same_values(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
  std::vector<float> grad_;  // empty = not allocated
  bool requires_grad_ = false;
};

}  // namespace splab
