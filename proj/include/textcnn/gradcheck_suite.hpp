#pragma once

#include "textcnn/gradcheck.hpp"
#include "textcnn/model.hpp"

namespace textcnn {

namespace detail {

// Scalarizes an output with fixed weights so every coordinate contributes.
inline Var<double> probe_sum(Var<double> x, const Tensor<double>& wts) {
  Tape<double>& tape = *x.tape;
  double acc = 0;
  for (std::size_t i = 0; i < wts.size(); ++i) acc += x.value()[i] * wts[i];
  Var<double> out{&tape, tape.add_slot(Tensor<double>({1}, acc), tape.requires_grad(x.id))};
  int x_id = x.id, out_id = out.id;
  Tensor<double> w = wts;
  tape.record("probe_sum", [x_id, out_id, w = std::move(w)](Tape<double>& t) {
    if (!t.requires_grad(x_id)) return;
    const double g = t.grad(out_id)[0];
    Tensor<double>& gx = t.grad(x_id);
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
  return out;
}

inline ITensor random_index_batch(std::size_t batch, std::size_t len,
                                  std::size_t bound, RngStream& rng) {
  ITensor idx({batch, len});
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = static_cast<std::int32_t>(rng.below(bound));
  return idx;
}

}  // namespace detail

/// Finite-difference verification of every layer op plus the four model
/// families at tiny sizes, double precision. This is what `gradcheck` runs.
inline GradCheckReport run_gradcheck_suite(std::uint64_t seed) {
  GradCheckReport report;
  GradCheckOptions opts;
  opts.seed = seed;
  RngStream rng(seed, 0x9c);
  auto uni = [&rng](Shape s, double lo = -1, double hi = 1) {
    return rand_uniform<double>(std::move(s), lo, hi, rng);
  };

  // -- single ops ----------------------------------------------------------
  {
    Parameter<double> table("table", uni({4, 6}));
    ITensor idx = detail::random_index_batch(2, 5, 6, rng);
    Tensor<double> wts = uni({2 * 4 * 5}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "embedding",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(embedding(tape, idx, table), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&table}, opts));
  }
  {
    Parameter<double> x("x", uni({2, 3, 12}));
    Parameter<double> w("w", uni({4, 3, 3}));
    Parameter<double> b("b", uni({4}));
    Tensor<double> wts = uni({2 * 4 * 10}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "conv1d",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(conv1d(param_ref(tape, x), w, b), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x, &w, &b}, opts));
  }
  {
    Parameter<double> x("x", uni({2, 2, 6}));
    Tensor<double> wts = uni({2 * 2 * 9}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "pad1d",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(pad1d(param_ref(tape, x), 2, 1), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x}, opts));
  }
  {
    // inputs kept clear of the kink at zero
    Parameter<double> x("x", Tensor<double>({24}));
    for (std::size_t i = 0; i < x.value.size(); ++i) {
      double v = rng.uniform(0.2, 1.0);
      x.value[i] = rng.next_double() < 0.5 ? -v : v;
    }
    Tensor<double> wts = uni({24}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "relu",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(relu(param_ref(tape, x)), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x}, opts));
  }
  {
    // distinct magnitudes keep argmax stable under probing
    Parameter<double> x("x", Tensor<double>({2, 3, 9}));
    for (std::size_t i = 0; i < x.value.size(); ++i)
      x.value[i] = 0.05 * static_cast<double>((i * 29) % 53) + rng.uniform(0, 1e-3);
    Tensor<double> wts_g = uni({6}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "global_max_pool",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(global_max_pool(param_ref(tape, x)), wts_g);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x}, opts));
    Tensor<double> wts_l = uni({2 * 3 * 3}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "local_max_pool",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out =
              detail::probe_sum(local_max_pool(param_ref(tape, x), 3), wts_l);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x}, opts));
    Tensor<double> wts_a = uni({6}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "global_avg_pool",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(global_avg_pool(param_ref(tape, x)), wts_a);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x}, opts));
  }
  {
    Parameter<double> x("x", uni({3, 5}));
    Parameter<double> w("w", uni({4, 5}));
    Parameter<double> b("b", uni({4}));
    Tensor<double> wts = uni({12}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "linear",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(linear(param_ref(tape, x), w, b), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x, &w, &b}, opts));
  }
  {
    Parameter<double> x("x", uni({4, 6}));
    Tensor<double> wts = uni({24}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "dropout",
        [&](bool wg) {
          Tape<double> tape;
          RngStream mask_rng(seed, 0x7d7);
          Var<double> out = detail::probe_sum(
              dropout(param_ref(tape, x), 0.5, Mode::train, mask_rng), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x}, opts));
  }
  {
    BatchNorm<double> bn("bn", 3);
    bn.scale.value = uni({3}, 0.5, 1.5);
    bn.shift.value = uni({3}, -0.5, 0.5);
    Parameter<double> x("x", uni({3, 3, 4}));
    Tensor<double> wts = uni({3 * 3 * 4}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "batch_norm",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out =
              detail::probe_sum(batch_norm(param_ref(tape, x), bn, Mode::train), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&x, &bn.scale, &bn.shift}, opts));
  }
  {
    Parameter<double> a("a", uni({2, 5}));
    Parameter<double> b("b", uni({2, 5}));
    Tensor<double> wts = uni({10}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "residual_add",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(
              residual_add(param_ref(tape, a), param_ref(tape, b)), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&a, &b}, opts));
  }
  {
    Parameter<double> a("a", uni({2, 2, 4}));
    Parameter<double> b("b", uni({2, 3, 4}));
    Tensor<double> wts = uni({2 * 5 * 4}, 0.5, 1.5);
    report.entries.push_back(check_gradients(
        "dense_concat",
        [&](bool wg) {
          Tape<double> tape;
          Var<double> out = detail::probe_sum(
              dense_concat<double>({param_ref(tape, a), param_ref(tape, b)}), wts);
          if (wg) tape.backward(out.id);
          return out.value()[0];
        },
        {&a, &b}, opts));
  }
  {
    Parameter<double> logits("logits", uni({3, 4}));
    ITensor labels = ITensor::from_data({3}, {1, 3, 0});
    report.entries.push_back(check_gradients(
        "softmax_cross_entropy",
        [&](bool wg) {
          Tape<double> tape;
          auto r = softmax_cross_entropy(param_ref(tape, logits), labels);
          if (wg) tape.backward(r.loss.id);
          return r.loss.value()[0];
        },
        {&logits}, opts));
  }

  // -- whole models at tiny sizes -----------------------------------------
  struct ModelCase {
    const char* name;
    ArchSpec spec;
  };
  std::vector<ModelCase> cases;
  {
    ArchSpec s = shallow_default(Level::chars);
    s.windows = {3, 5};
    s.filters = 4;
    s.max_len = 24;
    s.num_classes = 3;
    cases.push_back({"model shallow char", s});
  }
  {
    ArchSpec s = shallow_default(Level::words);
    s.windows = {2, 3};
    s.filters = 3;
    s.max_len = 12;
    s.num_classes = 3;
    cases.push_back({"model shallow word", s});
  }
  {
    ArchSpec s = densenet_default(Level::chars);  // local-max + FC tail
    s.max_len = 24;
    s.growth = 3;
    s.init_channels = 4;
    s.fc_width = 6;
    s.num_classes = 3;
    cases.push_back({"model densenet char", s});
  }
  {
    ArchSpec s = densenet_default(Level::words);  // global average tail
    s.max_len = 16;
    s.growth = 3;
    s.init_channels = 4;
    s.num_classes = 3;
    cases.push_back({"model densenet word", s});
  }

  for (auto& c : cases) {
    const std::size_t cols = 8;
    RngStream init(seed, streams::kInit);
    auto model = build_model<double>(c.spec, cols, init);
    const std::size_t bound =
        c.spec.level == Level::chars ? CharVocab::kSize + 1 : cols;
    ITensor idx = detail::random_index_batch(2, c.spec.max_len, bound, rng);
    ITensor labels = ITensor::from_data({2}, {0, 2});
    auto loss_fn = [&](bool wg) {
      Tape<double> tape;
      RngStream drop(seed, streams::kDropoutBase);
      Var<double> lg = model->logits(tape, idx, Mode::train, drop);
      auto r = softmax_cross_entropy(lg, labels);
      if (wg) tape.backward(r.loss.id);
      return r.loss.value()[0];
    };
    report.entries.push_back(check_gradients(c.name, loss_fn, model->parameters(), opts));
  }

  return report;
}

}  // namespace textcnn
