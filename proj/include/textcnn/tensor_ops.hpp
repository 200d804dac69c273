#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "textcnn/rng.hpp"
#include "textcnn/tensor.hpp"

namespace textcnn {

/// Tensor with every element drawn uniformly from [lo, hi).
template <typename T>
Tensor<T> rand_uniform(Shape shape, double lo, double hi, RngStream& rng) {
  if (!(lo < hi))
    detail::fail(detail::str("rand_uniform requires lo < hi, got [", lo, ", ", hi, ")"));
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    T v = static_cast<T>(rng.uniform(lo, hi));
    if (v >= static_cast<T>(hi)) v = std::nextafter(static_cast<T>(hi), static_cast<T>(lo));
    t[i] = v;
  }
  return t;
}

namespace detail {

// Splits a shape at `axis` into (outer, axis_dim, inner) block sizes for
// row-major walks along that axis.
struct AxisBlocks {
  std::size_t outer = 1, axis = 1, inner = 1;
};

inline AxisBlocks axis_blocks(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    fail(str("axis ", axis, " out of range for shape ", shape_str(s)));
  AxisBlocks b;
  for (std::size_t i = 0; i < axis; ++i) b.outer *= s[i];
  b.axis = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) b.inner *= s[i];
  return b;
}

}  // namespace detail

/// Concatenation along `axis`; all other dimensions must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) detail::fail("concat of zero tensors");
  const Shape& first = parts[0].shape();
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size())
      detail::fail("concat inputs must have equal rank");
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis && p.dim(d) != first[d])
        detail::fail(detail::str("concat shape mismatch off axis ", axis, ": ",
                                 shape_str(p.shape()), " vs ", shape_str(first)));
    axis_total += p.dim(axis);
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  Tensor<T> out(out_shape);

  auto ob = detail::axis_blocks(out_shape, axis);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pb = detail::axis_blocks(p.shape(), axis);
    for (std::size_t o = 0; o < pb.outer; ++o) {
      const T* src = p.data() + o * pb.axis * pb.inner;
      T* dst = out.data() + (o * ob.axis + offset) * ob.inner;
      std::memcpy(dst, src, pb.axis * pb.inner * sizeof(T));
    }
    offset += pb.axis;
  }
  return out;
}

/// Contiguous sub-range [start, start+len) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& t, std::size_t axis, std::size_t start,
                std::size_t len) {
  auto b = detail::axis_blocks(t.shape(), axis);
  if (start + len > b.axis || len == 0)
    detail::fail(detail::str("slice [", start, ", ", start + len,
                             ") out of range for axis ", axis, " of ",
                             shape_str(t.shape())));
  Shape out_shape = t.shape();
  out_shape[axis] = len;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < b.outer; ++o) {
    const T* src = t.data() + (o * b.axis + start) * b.inner;
    T* dst = out.data() + o * len * b.inner;
    std::memcpy(dst, src, len * b.inner * sizeof(T));
  }
  return out;
}

template <typename T>
struct ReduceMax {
  Tensor<T> values;
  ITensor arg_indices;  // position of the first maximum along the axis
};

/// Maximum along `axis`, dropping that axis (scalars keep shape (1)).
/// Ties resolve to the first occurrence.
template <typename T>
ReduceMax<T> reduce_max(const Tensor<T>& t, std::size_t axis) {
  auto b = detail::axis_blocks(t.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < t.rank(); ++i)
    if (i != axis) out_shape.push_back(t.dim(i));
  if (out_shape.empty()) out_shape = {1};

  ReduceMax<T> r{Tensor<T>(out_shape), ITensor(out_shape)};
  for (std::size_t o = 0; o < b.outer; ++o) {
    for (std::size_t in = 0; in < b.inner; ++in) {
      const T* base = t.data() + o * b.axis * b.inner + in;
      T best = base[0];
      std::size_t best_i = 0;
      for (std::size_t a = 1; a < b.axis; ++a) {
        T v = base[a * b.inner];
        if (v > best) {
          best = v;
          best_i = a;
        }
      }
      r.values[o * b.inner + in] = best;
      r.arg_indices[o * b.inner + in] = static_cast<std::int32_t>(best_i);
    }
  }
  return r;
}

/// Standard 2D matrix product.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    detail::fail("matmul expects rank-2 tensors");
  if (a.dim(1) != b.dim(0))
    detail::fail(detail::str("matmul inner dimensions differ: ",
                             shape_str(a.shape()), " x ", shape_str(b.shape())));
  const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
  Tensor<T> out({rows, cols}, T{});
  for (std::size_t i = 0; i < rows; ++i) {
    T* out_row = out.row(i);
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = a(i, k);
      const T* b_row = b.row(k);
      for (std::size_t j = 0; j < cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

}  // namespace textcnn
