#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "textcnn/autodiff.hpp"
#include "textcnn/rng.hpp"

namespace textcnn {

struct GradCheckOptions {
  int probes_per_param = 32;   // coordinates sampled per parameter
  double step = 1e-5;          // central-difference half step
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
  std::string note;  // failure location or non-finite diagnostic
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }

  std::string table() const {
    std::string out = "op/model                     max_rel_err   result\n";
    char line[160];
    for (const auto& e : entries) {
      std::snprintf(line, sizeof(line), "%-28s %11.3e   %s%s%s\n", e.name.c_str(),
                    e.max_rel_err, e.pass ? "PASS" : "FAIL",
                    e.note.empty() ? "" : "  ", e.note.c_str());
      out += line;
    }
    return out;
  }
};

/// Central finite differences vs the analytic gradients produced by one
/// forward/backward pass, in double precision.
///
/// `loss` must be a deterministic function of the current parameter values:
/// loss(true) runs forward and backward (accumulating into param grads),
/// loss(false) runs forward only. At least `probes_per_param` coordinates of
/// each parameter are probed (all of them for small parameters). The error
/// per coordinate is |fd - analytic| / (|analytic| + 0.01): relative for
/// large gradients with an absolute floor that keeps finite-difference
/// round-off on near-zero coordinates from registering as failure.
inline GradCheckEntry check_gradients(const std::string& name,
                                      const std::function<double(bool)>& loss,
                                      const std::vector<Parameter<double>*>& params,
                                      const GradCheckOptions& opts = {}) {
  GradCheckEntry entry;
  entry.name = name;
  RngStream rng(opts.seed, 0x6c);

  for (auto* p : params) p->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) {
    entry.note = "non-finite loss in forward pass";
    return entry;
  }

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  double max_err = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    const std::size_t count = p.value.size();
    std::vector<std::size_t> coords;
    if (count <= static_cast<std::size_t>(opts.probes_per_param)) {
      coords.resize(count);
      for (std::size_t i = 0; i < count; ++i) coords[i] = i;
    } else {
      coords.reserve(opts.probes_per_param);
      for (int i = 0; i < opts.probes_per_param; ++i) coords.push_back(rng.below(count));
    }

    for (std::size_t c : coords) {
      const double an = analytic[pi][c];
      if (!std::isfinite(an)) {
        entry.note = detail::str("non-finite analytic gradient at ", p.name, "[", c, "]");
        entry.max_rel_err = std::numeric_limits<double>::infinity();
        return entry;
      }
      const double saved = p.value[c];
      p.value[c] = saved + opts.step;
      const double up = loss(false);
      p.value[c] = saved - opts.step;
      const double down = loss(false);
      p.value[c] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        entry.note = detail::str("non-finite loss probing ", p.name, "[", c, "]");
        entry.max_rel_err = std::numeric_limits<double>::infinity();
        return entry;
      }
      const double fd = (up - down) / (2 * opts.step);
      const double err = std::abs(fd - an) / (std::abs(an) + 0.01);
      if (err > max_err) {
        max_err = err;
        if (err >= opts.tolerance)
          entry.note = detail::str("worst at ", p.name, "[", c, "]: fd=", fd,
                                   " analytic=", an);
      }
    }
  }

  entry.max_rel_err = max_err;
  entry.pass = max_err < opts.tolerance;
  if (entry.pass) entry.note.clear();
  return entry;
}

}  // namespace textcnn
