#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "textcnn/autodiff.hpp"

namespace textcnn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lr >= 0)) detail::fail("learning rate must be non-negative");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      detail::fail("adam betas must lie in [0, 1)");
    if (epsilon <= 0) detail::fail("adam epsilon must be positive");
  }
};

/// First/second moment accumulators, one pair per parameter, plus the shared
/// timestep. Zero-initialized; t increments once per step.
template <typename T>
struct AdamState {
  struct Moments {
    Tensor<T> m, v;
  };
  std::vector<Moments> moments;
  std::uint64_t t = 0;

  static AdamState zeros(const std::vector<Parameter<T>*>& params) {
    AdamState s;
    s.moments.reserve(params.size());
    for (auto* p : params)
      s.moments.push_back(Moments{Tensor<T>(p->value.shape(), T{}),
                                  Tensor<T>(p->value.shape(), T{})});
    return s;
  }
};

/// One Adam update with bias correction:
///   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
/// Gradient masks apply before the moments see the gradient. A non-finite
/// (masked) gradient aborts the whole step before any parameter moves.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state,
               const AdamConfig& cfg) {
  cfg.validate();
  if (state.moments.size() != params.size())
    detail::fail("adam state does not match the parameter list");
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Parameter<T>& p = *params[pi];
    if (!p.value.same_shape(p.grad)) detail::fail("gradient shape drifted from its parameter");
    if (!p.trainable) continue;
    const bool masked = !p.grad_mask.empty();
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const T g = masked ? p.grad[i] * p.grad_mask[i] : p.grad[i];
      if (!std::isfinite(static_cast<double>(g)))
        detail::fail(detail::str("non-finite gradient in ", p.name, "[", i,
                                 "]; step aborted"));
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T one_m_b1 = static_cast<T>(1 - cfg.beta1), one_m_b2 = static_cast<T>(1 - cfg.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.epsilon);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>& p = *params[pi];
    if (!p.trainable) continue;
    auto& mom = state.moments[pi];
    const bool masked = !p.grad_mask.empty();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = masked ? p.grad[i] * p.grad_mask[i] : p.grad[i];
      mom.m[i] = b1 * mom.m[i] + one_m_b1 * g;
      mom.v[i] = b2 * mom.v[i] + one_m_b2 * g * g;
      const T m_hat = mom.m[i] * inv_bc1;
      const T v_hat = mom.v[i] * inv_bc2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace textcnn
