#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace textcnn {

using Shape = std::vector<std::size_t>;

namespace detail {

template <typename... Args>
std::string str(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

[[noreturn]] inline void fail(std::string msg) {
  throw std::runtime_error(std::move(msg));
}

inline void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

/// Dense N-dimensional array, row-major, rank 1..3. The last axis is
/// contiguous; sequence tensors are laid out (batch, channels, length) so
/// temporal loops run stride-1 over length.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  static Tensor from_data(Shape shape, std::vector<T> data) {
    validate_shape(shape);
    if (shape_size(shape) != data.size())
      detail::fail(detail::str("tensor data size ", data.size(),
                               " does not match shape ", shape_str(shape)));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  // Row-major element access; (i,j) of an (R,C) tensor is flat index i*C+j.
  T& operator()(std::size_t i) { return data_[i]; }
  const T& operator()(std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Pointer to the contiguous innermost row starting at (i) / (i,j).
  T* row(std::size_t i) { return data_.data() + i * shape_[1]; }
  const T* row(std::size_t i) const { return data_.data() + i * shape_[1]; }
  T* row(std::size_t i, std::size_t j) {
    return data_.data() + (i * shape_[1] + j) * shape_[2];
  }
  const T* row(std::size_t i, std::size_t j) const {
    return data_.data() + (i * shape_[1] + j) * shape_[2];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// New tensor with identical flat contents and a different shape.
  Tensor reshaped(Shape new_shape) const {
    validate_shape(new_shape);
    if (shape_size(new_shape) != data_.size())
      detail::fail(detail::str("reshape from ", shape_str(shape_), " to ",
                               shape_str(new_shape), " changes element count"));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

 private:
  static void validate_shape(const Shape& s) {
    if (s.empty()) detail::fail("tensor rank must be at least 1");
    if (s.size() > 3) detail::fail("tensor rank above 3 is not supported");
    for (std::size_t d : s)
      if (d == 0) detail::fail("tensor dimensions must be positive");
  }

  Shape shape_;
  std::vector<T> data_;
};

using ITensor = Tensor<std::int32_t>;

}  // namespace textcnn
