#pragma once

// Shared helpers for the unit and acceptance suites.

#include "textcnn/autodiff.hpp"
#include "textcnn/rng.hpp"
#include "textcnn/tensor_ops.hpp"

namespace testutil {

using textcnn::Parameter;
using textcnn::RngStream;
using textcnn::Shape;
using textcnn::Tape;
using textcnn::Tensor;
using textcnn::Var;

// Scalarizes an op output with fixed random weights so a gradient probe
// exercises every output coordinate. Recorded directly on the tape; kept in
// test code so the checks stay independent of the library's layer set.
inline Var<double> weighted_sum(Var<double> x, const Tensor<double>& wts) {
  Tape<double>& tape = *x.tape;
  double acc = 0;
  for (std::size_t i = 0; i < wts.size(); ++i) acc += x.value()[i] * wts[i];
  Var<double> out{&tape, tape.add_slot(Tensor<double>({1}, acc), tape.requires_grad(x.id))};
  int x_id = x.id, out_id = out.id;
  Tensor<double> w = wts;
  tape.record("test_weighted_sum", [x_id, out_id, w = std::move(w)](Tape<double>& t) {
    if (!t.requires_grad(x_id)) return;
    const double g = t.grad(out_id)[0];
    Tensor<double>& gx = t.grad(x_id);
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
  return out;
}

inline Parameter<double> make_param(const std::string& name, Shape shape,
                                    RngStream& rng, double lo = -1, double hi = 1) {
  return Parameter<double>(name, textcnn::rand_uniform<double>(std::move(shape), lo, hi, rng));
}

}  // namespace testutil
