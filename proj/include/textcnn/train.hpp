#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "textcnn/adam.hpp"
#include "textcnn/dataset.hpp"
#include "textcnn/model.hpp"

namespace textcnn {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based in reports
  double train_loss = 0, train_acc = 0;
  double test_loss = 0, test_acc = 0;
  double seconds = 0;
};

struct EvalResult {
  double accuracy = 0;
  double mean_loss = 0;
  std::vector<std::size_t> confusion;  // row-major (true, predicted)
  std::size_t num_classes = 0;

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return confusion[truth * num_classes + pred];
  }
};

namespace detail {

/// Argmax with ties resolved to the lowest class index.
template <typename T>
std::size_t predict_class(const Tensor<T>& probs, std::size_t row) {
  const T* p = probs.row(row);
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.dim(1); ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

}  // namespace detail

/// Eval-mode pass over a dataset: accuracy, mean loss and the confusion
/// matrix. Per-sample results do not depend on the batch split.
template <typename T>
EvalResult evaluate(TextClassifier<T>& model, const EncodedDataset& data,
                    std::size_t batch_size = 128) {
  if (data.size() == 0) detail::fail("cannot evaluate an empty dataset");
  EvalResult out;
  out.num_classes = data.num_classes;
  out.confusion.assign(data.num_classes * data.num_classes, 0);
  RngStream unused_dropout(0, 0);  // eval mode never consumes it
  double loss_sum = 0;
  std::size_t correct = 0;
  for (const Batch& batch : make_batches(data, batch_size, nullptr)) {
    Tape<T> tape;
    Var<T> lg = model.logits(tape, batch.indices, Mode::eval, unused_dropout);
    auto ce = softmax_cross_entropy(lg, batch.labels);
    const std::size_t rows = batch.labels.size();
    loss_sum += ce.loss.value()[0] * static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t pred = detail::predict_class(ce.probs, r);
      const std::size_t truth = static_cast<std::size_t>(batch.labels[r]);
      out.confusion[truth * data.num_classes + pred] += 1;
      if (pred == truth) ++correct;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  out.mean_loss = loss_sum / static_cast<double>(data.size());
  return out;
}

/// Epoch loop: seeded shuffle, forward/backward, Adam step, then an
/// eval-mode pass over the held-out split. Shuffle and dropout streams are
/// derived per epoch from (seed, epoch), so a run resumed from a checkpoint
/// at an epoch boundary continues bit-identically.
template <typename T>
std::vector<EpochMetrics> train(TextClassifier<T>& model, const EncodedDataset& train_data,
                                const EncodedDataset* test_data, const TrainConfig& cfg,
                                AdamState<T>& adam, std::size_t start_epoch = 0,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (train_data.size() == 0) detail::fail("cannot train on an empty dataset");
  std::vector<Parameter<T>*> params = model.parameters();
  if (adam.moments.empty()) adam = AdamState<T>::zeros(params);

  std::vector<EpochMetrics> history;
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream shuffle_rng(cfg.seed, streams::shuffle(epoch));
    RngStream dropout_rng(cfg.seed, streams::dropout(epoch));

    double loss_sum = 0;
    std::size_t correct = 0;
    for (const Batch& batch : make_batches(train_data, cfg.batch_size, &shuffle_rng)) {
      const std::size_t rows = batch.labels.size();
      // a size-1 batch whose feature maps shrink to length 1 cannot form
      // batch statistics; run it in eval mode (no BN stat update)
      Mode mode = Mode::train;
      if (rows == 1 && model.min_feature_length() < 2) mode = Mode::eval;

      for (auto* p : params) p->zero_grad();
      Tape<T> tape;
      Var<T> lg = model.logits(tape, batch.indices, mode, dropout_rng);
      auto ce = softmax_cross_entropy(lg, batch.labels);
      tape.backward(ce.loss.id);
      adam_step(params, adam, cfg.adam);

      loss_sum += ce.loss.value()[0] * static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        if (detail::predict_class(ce.probs, r) == static_cast<std::size_t>(batch.labels[r]))
          ++correct;
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = loss_sum / static_cast<double>(train_data.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(train_data.size());
    if (test_data) {
      EvalResult ev = evaluate(model, *test_data, cfg.batch_size);
      m.test_loss = ev.mean_loss;
      m.test_acc = ev.accuracy;
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(m);
    history.push_back(m);
  }
  return history;
}

inline std::string format_metrics_row(const EpochMetrics& m) {
  char line[160];
  std::snprintf(line, sizeof(line), "%zu,%.6f,%.4f,%.6f,%.4f,%.3f", m.epoch,
                m.train_loss, m.train_acc, m.test_loss, m.test_acc, m.seconds);
  return line;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) detail::fail("cannot write metrics file: " + path);
  out << "epoch,train_loss,train_acc,test_loss,test_acc,seconds\n";
  for (const auto& m : history) out << format_metrics_row(m) << "\n";
}

inline void write_confusion_csv(const std::string& path, const EvalResult& ev) {
  std::ofstream out(path);
  if (!out) detail::fail("cannot write confusion matrix file: " + path);
  for (std::size_t t = 0; t < ev.num_classes; ++t) {
    for (std::size_t p = 0; p < ev.num_classes; ++p) {
      if (p) out << ",";
      out << ev.at(t, p);
    }
    out << "\n";
  }
}

}  // namespace textcnn
