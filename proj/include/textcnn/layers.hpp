#pragma once

#include <cmath>
#include <vector>

#include "textcnn/autodiff.hpp"
#include "textcnn/rng.hpp"
#include "textcnn/tensor_ops.hpp"

namespace textcnn {

/// Lookup-table layer: indices (batch, length) -> (batch, d, length), where
/// column t of each output sample is column indices[b, t] of the table.
template <typename T>
Var<T> embedding(Tape<T>& tape, const ITensor& indices, Parameter<T>& table) {
  if (indices.rank() != 2 || table.value.rank() != 2)
    detail::fail("embedding expects indices (batch, length) and table (d, vocab)");
  const std::size_t batch = indices.dim(0), len = indices.dim(1);
  const std::size_t d = table.value.dim(0), vocab = table.value.dim(1);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < len; ++t) {
      std::int32_t ix = indices(b, t);
      if (ix < 0 || static_cast<std::size_t>(ix) >= vocab)
        detail::fail(detail::str("embedding index ", ix, " out of range [0, ",
                                 vocab, ") at sample ", b, " position ", t));
    }

  Tensor<T> out({batch, d, len});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < d; ++r) {
      const T* tab_row = table.value.row(r);
      const std::int32_t* ix_row = indices.row(b);
      T* out_row = out.row(b, r);
      for (std::size_t t = 0; t < len; ++t)
        out_row[t] = tab_row[ix_row[t]];
    }

  Var<T> y{&tape, tape.add_slot(std::move(out), table.trainable)};
  Parameter<T>* tab = &table;
  ITensor ix = indices;
  int y_id = y.id;
  tape.record("embedding", [tab, ix = std::move(ix), y_id, batch, d, len](Tape<T>& t) {
    if (!tab->trainable) return;
    const T fs = debug::fault_scale<T>("embedding");
    const Tensor<T>& g = t.grad(y_id);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t r = 0; r < d; ++r) {
        T* grow = tab->grad.row(r);
        const std::int32_t* ix_row = ix.row(b);
        const T* g_row = g.row(b, r);
        for (std::size_t tt = 0; tt < len; ++tt)
          grow[ix_row[tt]] += fs * g_row[tt];
      }
  });
  return y;
}

/// One-hot input adapter: indices (batch, length) -> (batch, alphabet,
/// length). Index == alphabet marks padding and yields an all-zero column.
template <typename T>
Var<T> onehot_input(Tape<T>& tape, const ITensor& indices, std::size_t alphabet) {
  if (indices.rank() != 2) detail::fail("onehot_input expects indices (batch, length)");
  const std::size_t batch = indices.dim(0), len = indices.dim(1);
  Tensor<T> out({batch, alphabet, len}, T{});
  for (std::size_t b = 0; b < batch; ++b) {
    const std::int32_t* ix_row = indices.row(b);
    for (std::size_t t = 0; t < len; ++t) {
      std::int32_t ix = ix_row[t];
      if (ix < 0 || static_cast<std::size_t>(ix) > alphabet)
        detail::fail(detail::str("one-hot index ", ix, " out of range [0, ",
                                 alphabet, "] at sample ", b, " position ", t));
      if (static_cast<std::size_t>(ix) < alphabet) out(b, ix, t) = T(1);
    }
  }
  return input(tape, std::move(out));
}

/// Valid temporal convolution, stride 1: x (batch, C_in, n) with weight
/// (C_out, C_in, h) -> pre-activation (batch, C_out, n-h+1). No implicit
/// padding; compose with pad1d for same-length convolution.
template <typename T>
Var<T> conv1d(Var<T> x, Parameter<T>& weight, Parameter<T>& bias) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("conv1d expects input (batch, channels, length)");
  if (weight.value.rank() != 3 || bias.value.rank() != 1)
    detail::fail("conv1d expects weight (C_out, C_in, h) and bias (C_out)");
  const std::size_t batch = xv.dim(0), c_in = xv.dim(1), n = xv.dim(2);
  const std::size_t c_out = weight.value.dim(0), h = weight.value.dim(2);
  if (weight.value.dim(1) != c_in)
    detail::fail(detail::str("conv1d channel mismatch: input has ", c_in,
                             ", weight expects ", weight.value.dim(1)));
  if (bias.value.dim(0) != c_out) detail::fail("conv1d bias size mismatch");
  if (n < h)
    detail::fail(detail::str("conv1d sequence length ", n,
                             " shorter than kernel ", h));
  const std::size_t n_out = n - h + 1;

  Tape<T>& tape = *x.tape;
  Tensor<T> out({batch, c_out, n_out});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < c_out; ++o) {
      T* out_row = out.row(b, o);
      std::fill(out_row, out_row + n_out, bias.value[o]);
      for (std::size_t c = 0; c < c_in; ++c) {
        const T* x_row = xv.row(b, c);
        const T* w_row = weight.value.row(o, c);
        for (std::size_t j = 0; j < h; ++j) {
          const T wj = w_row[j];
          const T* xj = x_row + j;
          for (std::size_t i = 0; i < n_out; ++i) out_row[i] += wj * xj[i];
        }
      }
    }

  bool needs = tape.requires_grad(x.id) || weight.trainable || bias.trainable;
  Var<T> y{&tape, tape.add_slot(std::move(out), needs)};
  Parameter<T>* w = &weight;
  Parameter<T>* bs = &bias;
  int x_id = x.id, y_id = y.id;
  tape.record("conv1d", [w, bs, x_id, y_id, batch, c_in, c_out, h, n_out](Tape<T>& t) {
    const Tensor<T>& g = t.grad(y_id);
    const Tensor<T>& xv = t.value(x_id);
    if (t.requires_grad(x_id)) {
      const T fs = debug::fault_scale<T>("conv1d");
      Tensor<T>& gx = t.grad(x_id);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < c_in; ++c) {
          T* gx_row = gx.row(b, c);
          for (std::size_t o = 0; o < c_out; ++o) {
            const T* g_row = g.row(b, o);
            const T* w_row = w->value.row(o, c);
            for (std::size_t j = 0; j < h; ++j) {
              const T wj = fs * w_row[j];
              T* gxj = gx_row + j;
              for (std::size_t i = 0; i < n_out; ++i) gxj[i] += wj * g_row[i];
            }
          }
        }
    }
    if (w->trainable) {
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t c = 0; c < c_in; ++c) {
          T* gw_row = w->grad.row(o, c);
          for (std::size_t b = 0; b < batch; ++b) {
            const T* g_row = g.row(b, o);
            const T* x_row = xv.row(b, c);
            for (std::size_t j = 0; j < h; ++j) {
              T acc{};
              const T* xj = x_row + j;
              for (std::size_t i = 0; i < n_out; ++i) acc += xj[i] * g_row[i];
              gw_row[j] += acc;
            }
          }
        }
    }
    if (bs->trainable) {
      for (std::size_t o = 0; o < c_out; ++o) {
        T acc{};
        for (std::size_t b = 0; b < batch; ++b) {
          const T* g_row = g.row(b, o);
          for (std::size_t i = 0; i < n_out; ++i) acc += g_row[i];
        }
        bs->grad[o] += acc;
      }
    }
  });
  return y;
}

/// Symmetric-capable zero padding along the time axis.
template <typename T>
Var<T> pad1d(Var<T> x, std::size_t left, std::size_t right) {
  if (left == 0 && right == 0) return x;
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("pad1d expects input (batch, channels, length)");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), n = xv.dim(2);
  Tensor<T> out({batch, ch, n + left + right}, T{});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      std::copy_n(xv.row(b, c), n, out.row(b, c) + left);

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("pad1d", [x_id, y_id, left, batch, ch, n](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const T fs = debug::fault_scale<T>("pad1d");
    const Tensor<T>& g = t.grad(y_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const T* g_row = g.row(b, c) + left;
        T* gx_row = gx.row(b, c);
        for (std::size_t i = 0; i < n; ++i) gx_row[i] += fs * g_row[i];
      }
  });
  return y;
}

/// Elementwise max(0, x); the subgradient at exactly zero is zero.
template <typename T>
Var<T> relu(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{} ? xv[i] : T{};

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("relu", [x_id, y_id](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const T fs = debug::fault_scale<T>("relu");
    const Tensor<T>& g = t.grad(y_id);
    const Tensor<T>& xv = t.value(x_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T{}) gx[i] += fs * g[i];
  });
  return y;
}

/// Max-over-time pooling: (batch, C, L) -> (batch, C). The gradient routes
/// entirely to the first maximal position of each channel.
template <typename T>
Var<T> global_max_pool(Var<T> x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("global_max_pool expects input (batch, channels, length)");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), n = xv.dim(2);
  Tensor<T> out({batch, ch});
  ITensor arg({batch, ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* row = xv.row(b, c);
      T best = row[0];
      std::size_t best_i = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (row[i] > best) { best = row[i]; best_i = i; }
      out(b, c) = best;
      arg(b, c) = static_cast<std::int32_t>(best_i);
    }

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("global_max_pool", [x_id, y_id, arg = std::move(arg), batch, ch](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const T fs = debug::fault_scale<T>("global_max_pool");
    const Tensor<T>& g = t.grad(y_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c)
        gx.row(b, c)[arg(b, c)] += fs * g(b, c);
  });
  return y;
}

/// Windowed max with stride == window: (batch, C, n) -> (batch, C,
/// ceil(n/k)); the final window may be partial.
template <typename T>
Var<T> local_max_pool(Var<T> x, std::size_t k) {
  if (k < 1) detail::fail("local_max_pool window must be at least 1");
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("local_max_pool expects input (batch, channels, length)");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), n = xv.dim(2);
  const std::size_t n_out = (n + k - 1) / k;
  Tensor<T> out({batch, ch, n_out});
  ITensor arg({batch, ch, n_out});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* row = xv.row(b, c);
      T* out_row = out.row(b, c);
      std::int32_t* arg_row = arg.row(b, c);
      for (std::size_t j = 0; j < n_out; ++j) {
        const std::size_t lo = j * k, hi = std::min(lo + k, n);
        T best = row[lo];
        std::size_t best_i = lo;
        for (std::size_t i = lo + 1; i < hi; ++i)
          if (row[i] > best) { best = row[i]; best_i = i; }
        out_row[j] = best;
        arg_row[j] = static_cast<std::int32_t>(best_i);
      }
    }

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("local_max_pool",
              [x_id, y_id, arg = std::move(arg), batch, ch, n_out](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const T fs = debug::fault_scale<T>("local_max_pool");
    const Tensor<T>& g = t.grad(y_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const T* g_row = g.row(b, c);
        const std::int32_t* arg_row = arg.row(b, c);
        T* gx_row = gx.row(b, c);
        for (std::size_t j = 0; j < n_out; ++j) gx_row[arg_row[j]] += fs * g_row[j];
      }
  });
  return y;
}

/// Mean-over-time pooling: (batch, C, L) -> (batch, C); the gradient spreads
/// uniformly, 1/L to each position.
template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("global_avg_pool expects input (batch, channels, length)");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), n = xv.dim(2);
  Tensor<T> out({batch, ch});
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* row = xv.row(b, c);
      T acc{};
      for (std::size_t i = 0; i < n; ++i) acc += row[i];
      out(b, c) = acc * inv;
    }

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("global_avg_pool", [x_id, y_id, batch, ch, n, inv](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const T fs = debug::fault_scale<T>("global_avg_pool");
    const Tensor<T>& g = t.grad(y_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const T gv = fs * g(b, c) * inv;
        T* gx_row = gx.row(b, c);
        for (std::size_t i = 0; i < n; ++i) gx_row[i] += gv;
      }
  });
  return y;
}

/// Affine map per batch row: x (batch, F_in), weight (F_out, F_in), bias
/// (F_out) -> (batch, F_out).
template <typename T>
Var<T> linear(Var<T> x, Parameter<T>& weight, Parameter<T>& bias) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) detail::fail("linear expects input (batch, features)");
  if (weight.value.rank() != 2 || bias.value.rank() != 1)
    detail::fail("linear expects weight (F_out, F_in) and bias (F_out)");
  const std::size_t batch = xv.dim(0), f_in = xv.dim(1), f_out = weight.value.dim(0);
  if (weight.value.dim(1) != f_in)
    detail::fail(detail::str("linear feature mismatch: input has ", f_in,
                             ", weight expects ", weight.value.dim(1)));
  if (bias.value.dim(0) != f_out) detail::fail("linear bias size mismatch");

  Tensor<T> out({batch, f_out});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* x_row = xv.row(b);
    T* out_row = out.row(b);
    for (std::size_t o = 0; o < f_out; ++o) {
      const T* w_row = weight.value.row(o);
      T acc = bias.value[o];
      for (std::size_t f = 0; f < f_in; ++f) acc += w_row[f] * x_row[f];
      out_row[o] = acc;
    }
  }

  Tape<T>& tape = *x.tape;
  bool needs = tape.requires_grad(x.id) || weight.trainable || bias.trainable;
  Var<T> y{&tape, tape.add_slot(std::move(out), needs)};
  Parameter<T>* w = &weight;
  Parameter<T>* bs = &bias;
  int x_id = x.id, y_id = y.id;
  tape.record("linear", [w, bs, x_id, y_id, batch, f_in, f_out](Tape<T>& t) {
    const Tensor<T>& g = t.grad(y_id);
    const Tensor<T>& xv = t.value(x_id);
    if (t.requires_grad(x_id)) {
      const T fs = debug::fault_scale<T>("linear");
      Tensor<T>& gx = t.grad(x_id);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* g_row = g.row(b);
        T* gx_row = gx.row(b);
        for (std::size_t o = 0; o < f_out; ++o) {
          const T gv = fs * g_row[o];
          const T* w_row = w->value.row(o);
          for (std::size_t f = 0; f < f_in; ++f) gx_row[f] += gv * w_row[f];
        }
      }
    }
    if (w->trainable) {
      for (std::size_t b = 0; b < batch; ++b) {
        const T* g_row = g.row(b);
        const T* x_row = xv.row(b);
        for (std::size_t o = 0; o < f_out; ++o) {
          const T gv = g_row[o];
          T* gw_row = w->grad.row(o);
          for (std::size_t f = 0; f < f_in; ++f) gw_row[f] += gv * x_row[f];
        }
      }
    }
    if (bs->trainable) {
      for (std::size_t b = 0; b < batch; ++b) {
        const T* g_row = g.row(b);
        for (std::size_t o = 0; o < f_out; ++o) bs->grad[o] += g_row[o];
      }
    }
  });
  return y;
}

/// Inverted dropout: in train mode each element is zeroed with probability p
/// and survivors are scaled by 1/(1-p); eval mode is the identity (the same
/// variable, bit-exact).
template <typename T>
Var<T> dropout(Var<T> x, double p, Mode mode, RngStream& rng) {
  if (p < 0 || p >= 1)
    detail::fail(detail::str("dropout rate must be in [0, 1), got ", p));
  if (mode == Mode::eval || p == 0) return x;

  const Tensor<T>& xv = x.value();
  const T keep_scale = T(1) / static_cast<T>(1 - p);
  Tensor<T> mask(xv.shape());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.next_double() < p ? T{} : keep_scale;

  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("dropout", [x_id, y_id, mask = std::move(mask)](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const T fs = debug::fault_scale<T>("dropout");
    const Tensor<T>& g = t.grad(y_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += fs * g[i] * mask[i];
  });
  return y;
}

/// Per-channel batch normalization state: learned scale/shift plus running
/// statistics for eval mode. momentum is the fraction of the old running
/// value kept at each train-mode update.
template <typename T>
struct BatchNorm {
  Parameter<T> scale;
  Parameter<T> shift;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double epsilon = 1e-5;
  double momentum = 0.9;

  BatchNorm(const std::string& name, std::size_t channels)
      : scale(name + ".scale", Tensor<T>({channels}, T(1))),
        shift(name + ".shift", Tensor<T>({channels}, T{})),
        running_mean({channels}, T{}),
        running_var({channels}, T(1)) {}
};

/// Normalizes (batch, C, L) per channel over (batch, time). Train mode uses
/// batch statistics (biased variance) and updates the running stats; eval
/// mode normalizes with the running statistics.
template <typename T>
Var<T> batch_norm(Var<T> x, BatchNorm<T>& bn, Mode mode) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("batch_norm expects input (batch, channels, length)");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
  if (bn.scale.value.dim(0) != ch)
    detail::fail(detail::str("batch_norm channel mismatch: input has ", ch,
                             ", state has ", bn.scale.value.dim(0)));
  const std::size_t n = batch * len;
  if (mode == Mode::train && n < 2)
    detail::fail("batch_norm train mode needs at least 2 values per channel");

  Tensor<T> mean({ch}), invstd({ch});
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < ch; ++c) {
      T sum{};
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = xv.row(b, c);
        for (std::size_t i = 0; i < len; ++i) sum += row[i];
      }
      const T mu = sum / static_cast<T>(n);
      T sq{};
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = xv.row(b, c);
        for (std::size_t i = 0; i < len; ++i) {
          const T d = row[i] - mu;
          sq += d * d;
        }
      }
      const T var = sq / static_cast<T>(n);
      mean[c] = mu;
      invstd[c] = T(1) / std::sqrt(var + static_cast<T>(bn.epsilon));
      bn.running_mean[c] = static_cast<T>(bn.momentum) * bn.running_mean[c] +
                           static_cast<T>(1 - bn.momentum) * mu;
      bn.running_var[c] = static_cast<T>(bn.momentum) * bn.running_var[c] +
                          static_cast<T>(1 - bn.momentum) * var;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = bn.running_mean[c];
      invstd[c] = T(1) / std::sqrt(bn.running_var[c] + static_cast<T>(bn.epsilon));
    }
  }

  Tensor<T> out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T mu = mean[c], is = invstd[c];
      const T ga = bn.scale.value[c], be = bn.shift.value[c];
      const T* row = xv.row(b, c);
      T* out_row = out.row(b, c);
      for (std::size_t i = 0; i < len; ++i)
        out_row[i] = ga * (row[i] - mu) * is + be;
    }

  Tape<T>& tape = *x.tape;
  bool needs = tape.requires_grad(x.id) || bn.scale.trainable || bn.shift.trainable;
  Var<T> y{&tape, tape.add_slot(std::move(out), needs)};
  BatchNorm<T>* state = &bn;
  int x_id = x.id, y_id = y.id;
  const bool train_stats = mode == Mode::train;
  tape.record("batch_norm", [state, x_id, y_id, mean = std::move(mean),
                             invstd = std::move(invstd), batch, ch, len, n,
                             train_stats](Tape<T>& t) {
    const T fs = debug::fault_scale<T>("batch_norm");
    const Tensor<T>& g = t.grad(y_id);
    const Tensor<T>& xv = t.value(x_id);
    const bool need_x = t.requires_grad(x_id);
    Tensor<T>* gx = need_x ? &t.grad(x_id) : nullptr;
    for (std::size_t c = 0; c < ch; ++c) {
      const T mu = mean[c], is = invstd[c], ga = state->scale.value[c];
      T sum_g{}, sum_gxh{};
      for (std::size_t b = 0; b < batch; ++b) {
        const T* g_row = g.row(b, c);
        const T* x_row = xv.row(b, c);
        for (std::size_t i = 0; i < len; ++i) {
          sum_g += g_row[i];
          sum_gxh += g_row[i] * (x_row[i] - mu) * is;
        }
      }
      if (state->scale.trainable) state->scale.grad[c] += sum_gxh;
      if (state->shift.trainable) state->shift.grad[c] += sum_g;
      if (!need_x) continue;
      const T inv_n = T(1) / static_cast<T>(n);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* g_row = g.row(b, c);
        const T* x_row = xv.row(b, c);
        T* gx_row = gx->row(b, c);
        if (train_stats) {
          for (std::size_t i = 0; i < len; ++i) {
            const T xh = (x_row[i] - mu) * is;
            gx_row[i] += fs * ga * is * (g_row[i] - sum_g * inv_n - xh * sum_gxh * inv_n);
          }
        } else {
          for (std::size_t i = 0; i < len; ++i) gx_row[i] += fs * ga * is * g_row[i];
        }
      }
    }
  });
  return y;
}

/// Elementwise sum of two same-shape branches; the gradient passes through
/// unchanged to both.
template <typename T>
Var<T> residual_add(Var<T> x, Var<T> fx) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& fv = fx.value();
  if (!xv.same_shape(fv))
    detail::fail(detail::str("residual_add shape mismatch: ", shape_str(xv.shape()),
                             " vs ", shape_str(fv.shape())));
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + fv[i];

  Tape<T>& tape = *x.tape;
  bool needs = tape.requires_grad(x.id) || tape.requires_grad(fx.id);
  Var<T> y{&tape, tape.add_slot(std::move(out), needs)};
  int x_id = x.id, f_id = fx.id, y_id = y.id;
  tape.record("residual_add", [x_id, f_id, y_id](Tape<T>& t) {
    const T fs = debug::fault_scale<T>("residual_add");
    const Tensor<T>& g = t.grad(y_id);
    for (int id : {x_id, f_id}) {
      if (!t.requires_grad(id)) continue;
      Tensor<T>& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += fs * g[i];
    }
  });
  return y;
}

/// Channel-axis concatenation of (batch, C_i, L) maps (or (batch, C_i) rows)
/// in the given order. All inputs must agree on every non-channel dimension.
template <typename T>
Var<T> dense_concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) detail::fail("dense_concat of zero inputs");
  if (parts.size() == 1) return parts[0];
  Tape<T>& tape = *parts[0].tape;
  const Shape& first = parts[0].shape();
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  bool needs = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || s[0] != first[0] ||
        (s.size() == 3 && s[2] != first[2]))
      detail::fail(detail::str("dense_concat inputs must agree off the channel axis: ",
                               shape_str(s), " vs ", shape_str(first)));
    values.push_back(p.value());
    needs = needs || tape.requires_grad(p.id);
  }
  Tensor<T> out = concat(values, 1);

  Var<T> y{&tape, tape.add_slot(std::move(out), needs)};
  std::vector<int> ids(parts.size());
  std::vector<std::size_t> widths(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    ids[i] = parts[i].id;
    widths[i] = parts[i].shape()[1];
  }
  int y_id = y.id;
  tape.record("dense_concat", [ids, widths, y_id](Tape<T>& t) {
    const T fs = debug::fault_scale<T>("dense_concat");
    const Tensor<T>& g = t.grad(y_id);
    auto gb = detail::axis_blocks(g.shape(), 1);
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      const std::size_t w = widths[pi];
      if (t.requires_grad(ids[pi])) {
        Tensor<T>& gi = t.grad(ids[pi]);
        for (std::size_t o = 0; o < gb.outer; ++o) {
          const T* src = g.data() + (o * gb.axis + offset) * gb.inner;
          T* dst = gi.data() + o * w * gb.inner;
          for (std::size_t i = 0; i < w * gb.inner; ++i) dst[i] += fs * src[i];
        }
      }
      offset += w;
    }
  });
  return y;
}

/// (batch, C, L) -> (batch, C*L), row-major, so channel blocks stay
/// contiguous per sample.
template <typename T>
Var<T> flatten(Var<T> x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) detail::fail("flatten expects input (batch, channels, length)");
  Tensor<T> out = xv.reshaped({xv.dim(0), xv.dim(1) * xv.dim(2)});

  Tape<T>& tape = *x.tape;
  Var<T> y{&tape, tape.add_slot(std::move(out), tape.requires_grad(x.id))};
  int x_id = x.id, y_id = y.id;
  tape.record("flatten", [x_id, y_id](Tape<T>& t) {
    if (!t.requires_grad(x_id)) return;
    const Tensor<T>& g = t.grad(y_id);
    Tensor<T>& gx = t.grad(x_id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return y;
}

template <typename T>
struct XentResult {
  Var<T> loss;       // scalar: mean over the batch of -log p[label]
  Tensor<T> probs;   // (batch, K) softmax rows
};

/// Log-sum-exp stabilized softmax + cross-entropy head. Non-finite logits
/// (overflow propagated from earlier layers) fail fast here with the
/// offending position named.
template <typename T>
XentResult<T> softmax_cross_entropy(Var<T> logits, const ITensor& labels) {
  const Tensor<T>& lv = logits.value();
  if (lv.rank() != 2) detail::fail("softmax_cross_entropy expects logits (batch, K)");
  const std::size_t batch = lv.dim(0), k = lv.dim(1);
  if (labels.size() != batch)
    detail::fail(detail::str("softmax_cross_entropy got ", labels.size(),
                             " labels for batch ", batch));
  for (std::size_t b = 0; b < batch; ++b)
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k)
      detail::fail(detail::str("label ", labels[b], " out of range [0, ", k,
                               ") at sample ", b));

  Tensor<T> probs({batch, k});
  double loss_sum = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = lv.row(b);
    for (std::size_t j = 0; j < k; ++j)
      if (!std::isfinite(static_cast<double>(row[j])))
        detail::fail(detail::str("non-finite logit at sample ", b, " class ", j,
                                 "; loss computation aborted"));
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T sum{};
    T* p_row = probs.row(b);
    for (std::size_t j = 0; j < k; ++j) {
      p_row[j] = std::exp(row[j] - m);
      sum += p_row[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < k; ++j) p_row[j] *= inv;
    loss_sum += -(static_cast<double>(row[labels[b]] - m) -
                  std::log(static_cast<double>(sum)));
  }
  const double loss_val = loss_sum / static_cast<double>(batch);
  if (!std::isfinite(loss_val)) detail::fail("non-finite loss");

  Tape<T>& tape = *logits.tape;
  Var<T> loss{&tape, tape.add_slot(Tensor<T>({1}, static_cast<T>(loss_val)),
                                   tape.requires_grad(logits.id))};
  int l_id = logits.id, loss_id = loss.id;
  ITensor lab = labels;
  Tensor<T> probs_copy = probs;
  tape.record("softmax_cross_entropy",
              [l_id, loss_id, lab = std::move(lab), probs = std::move(probs_copy),
               batch, k](Tape<T>& t) {
    if (!t.requires_grad(l_id)) return;
    const T fs = debug::fault_scale<T>("softmax_cross_entropy");
    const T gl = t.grad(loss_id)[0] / static_cast<T>(batch);
    Tensor<T>& gx = t.grad(l_id);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p_row = probs.row(b);
      T* gx_row = gx.row(b);
      for (std::size_t j = 0; j < k; ++j) gx_row[j] += fs * gl * p_row[j];
      gx_row[lab[b]] -= fs * gl;
    }
  });
  return {loss, std::move(probs)};
}

}  // namespace textcnn
