#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace s2t {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles. Every extent is positive and every
/// entry is finite at construction.
class Array {
 public:
  Array() = default;

  explicit Array(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape();
    check_finite_value(fill);
    data_.assign(shape_size(shape_), fill);
  }

  Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_size(shape_) != data_.size()) {
      throw std::invalid_argument("array data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
    }
    for (double v : data_) check_finite_value(v);
  }

  static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Array({rows, cols}, fill);
  }
  static Array row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Array({1, n}, std::move(values));
  }
  static Array scalar(double v) { return Array({1, 1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading extent; for rank-1 arrays the array is treated as one row.
  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : (shape_.empty() ? 0 : 1); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Array& other) const { return shape_ == other.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Array& other) const = default;

 private:
  void check_shape() const {
    if (shape_.empty()) throw std::invalid_argument("array shape must have at least one extent");
    for (std::size_t e : shape_) {
      if (e == 0) throw std::invalid_argument("array extents must be positive, got " + shape_string(shape_));
    }
  }
  static void check_finite_value(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("array entries must be finite");
  }

  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs_diff(const Array& a, const Array& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Softmax over the last axis.
inline Array softmax(const Array& logits) {
  if (logits.empty() || logits.cols() == 0) throw std::invalid_argument("softmax: empty axis");
  const std::size_t n = logits.cols();
  const std::size_t outer = logits.size() / n;
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < outer; ++r) {
    const double* in = logits.data().data() + r * n;
    double* o = out.data() + r * n;
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      sum += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= sum;
  }
  return Array(logits.shape(), std::move(out));
}

}  // namespace s2t
