#pragma once

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "textcnn/arch.hpp"
#include "textcnn/embeddings.hpp"
#include "textcnn/layers.hpp"

namespace textcnn {

namespace init {

/// Glorot-uniform fan-based initialization, zero biases.
template <typename T>
Parameter<T> glorot(const std::string& name, Shape shape, std::size_t fan_in,
                    std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Parameter<T>(name, rand_uniform<T>(std::move(shape), -limit, limit, rng));
}

template <typename T>
Parameter<T> conv_weight(const std::string& name, std::size_t c_out, std::size_t c_in,
                         std::size_t h, RngStream& rng) {
  return glorot<T>(name, {c_out, c_in, h}, c_in * h, c_out * h, rng);
}

template <typename T>
Parameter<T> linear_weight(const std::string& name, std::size_t f_out, std::size_t f_in,
                           RngStream& rng) {
  return glorot<T>(name, {f_out, f_in}, f_in, f_out, rng);
}

template <typename T>
Parameter<T> zero_bias(const std::string& name, std::size_t n) {
  return Parameter<T>(name, Tensor<T>({n}, T{}));
}

}  // namespace init

struct LayerRow {
  std::string name;
  std::string input;
  std::string output;
  std::size_t params = 0;
};

struct InspectReport {
  std::vector<LayerRow> rows;
  std::size_t total_params = 0;
  std::vector<std::string> notes;

  std::string table() const {
    std::string out;
    char line[192];
    std::snprintf(line, sizeof(line), "%-22s %-20s %-20s %12s\n", "layer", "input",
                  "output", "params");
    out += line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%-22s %-20s %-20s %12zu\n", r.name.c_str(),
                    r.input.c_str(), r.output.c_str(), r.params);
      out += line;
    }
    std::snprintf(line, sizeof(line), "%-22s %-20s %-20s %12zu\n", "total", "", "",
                  total_params);
    out += line;
    for (const auto& n : notes) out += n + "\n";
    return out;
  }
};

namespace detail {

inline std::string dims2(std::size_t a) { return str("(B, ", a, ")"); }
inline std::string dims3(std::size_t a, std::size_t b) {
  return str("(B, ", a, ", ", b, ")");
}
inline std::size_t ceil_div(std::size_t n, std::size_t k) { return (n + k - 1) / k; }

}  // namespace detail

/// Per-layer shapes and parameter counts, computed from the spec alone.
/// vocab_columns is the embedding column count for word-level specs.
inline InspectReport inspect_arch(const ArchSpec& spec, std::size_t vocab_columns) {
  spec.validate();
  InspectReport rep;
  const std::size_t d = spec.embed_dim();
  const std::size_t L = spec.max_len;
  auto add = [&rep](std::string name, std::string in, std::string out, std::size_t p) {
    rep.rows.push_back(LayerRow{std::move(name), std::move(in), std::move(out), p});
    rep.total_params += p;
  };

  if (spec.level == Level::chars) {
    add("onehot", detail::str("(B, ", L, ")"), detail::dims3(d, L), 0);
  } else {
    add("embedding", detail::str("(B, ", L, ")"), detail::dims3(d, L),
        kWordEmbedDim * vocab_columns);
  }

  if (spec.family == Family::shallow) {
    const std::size_t m = spec.filters;
    for (std::size_t h : spec.windows) {
      const std::size_t n_out = L - h + 1;
      add(detail::str("conv_h", h), detail::dims3(d, L), detail::dims3(m, n_out),
          m * d * h + m);
      add(detail::str("maxpool_h", h), detail::dims3(m, n_out), detail::dims2(m), 0);
    }
    const std::size_t width = spec.windows.size() * m;
    add("concat", detail::str(spec.windows.size(), " x ", detail::dims2(m)),
        detail::dims2(width), 0);
    if (spec.dropout > 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "dropout p=%g", spec.dropout);
      add(name, detail::dims2(width), detail::dims2(width), 0);
    }
    add("classifier", detail::dims2(width), detail::dims2(spec.num_classes),
        spec.num_classes * width + spec.num_classes);
    rep.notes.push_back(detail::str("concat width = ", width));
    return rep;
  }

  const std::size_t h = spec.windows[0];
  std::size_t channels = spec.init_channels;
  std::size_t len = L;
  add("stem", detail::dims3(d, L), detail::dims3(channels, len),
      channels * d * h + channels);
  std::vector<std::size_t> transition_lengths;
  for (std::size_t b = 0; b < 4; ++b) {
    std::size_t in_ch = channels;
    for (std::size_t l = 0; l < spec.blocks[b]; ++l) {
      add(detail::str("block", b + 1, ".conv", l + 1), detail::dims3(in_ch, len),
          detail::dims3(spec.growth, len),
          2 * in_ch + spec.growth * in_ch * h + spec.growth);
      in_ch += spec.growth;
    }
    channels = in_ch;
    if (b < 3) {
      const std::size_t out_ch = channels / 2;
      const std::size_t out_len = detail::ceil_div(len, 2);
      add(detail::str("transition", b + 1), detail::dims3(channels, len),
          detail::dims3(out_ch, out_len), out_ch * channels * h + out_ch);
      channels = out_ch;
      len = out_len;
      transition_lengths.push_back(out_len);
    }
  }

  std::size_t feat = 0;
  if (spec.tail == TailKind::local_max_fc) {
    const std::size_t k = spec.final_pool_kernel();
    const std::size_t pooled = detail::ceil_div(len, k);
    add(detail::str("maxpool_k", k), detail::dims3(channels, len),
        detail::dims3(channels, pooled), 0);
    const std::size_t flat = channels * pooled;
    add("flatten", detail::dims3(channels, pooled), detail::dims2(flat), 0);
    add("fc1", detail::dims2(flat), detail::dims2(spec.fc_width),
        spec.fc_width * flat + spec.fc_width);
    add("fc2", detail::dims2(spec.fc_width), detail::dims2(spec.fc_width),
        spec.fc_width * spec.fc_width + spec.fc_width);
    feat = spec.fc_width;
  } else {
    add("avgpool", detail::dims3(channels, len), detail::dims2(channels), 0);
    feat = channels;
  }
  if (spec.dropout > 0) {
    char name[32];
    std::snprintf(name, sizeof(name), "dropout p=%g", spec.dropout);
    add(name, detail::dims2(feat), detail::dims2(feat), 0);
  }
  add("classifier", detail::dims2(feat), detail::dims2(spec.num_classes),
      spec.num_classes * feat + spec.num_classes);
  rep.notes.push_back(detail::str("transition lengths: ", transition_lengths[0], "/",
                                  transition_lengths[1], "/", transition_lengths[2]));
  if (spec.tail == TailKind::local_max_fc)
    rep.notes.push_back(detail::str("tail pool kernel = ", spec.final_pool_kernel()));
  return rep;
}

/// A built classifier: owns parameters, runs the forward pass on a tape.
template <typename T>
class TextClassifier {
 public:
  virtual ~TextClassifier() = default;

  const ArchSpec& spec() const { return spec_; }
  std::size_t vocab_columns() const { return vocab_columns_; }

  virtual Var<T> logits(Tape<T>& tape, const ITensor& indices, Mode mode,
                        RngStream& dropout_rng) = 0;
  virtual std::vector<Parameter<T>*> parameters() = 0;
  /// Non-trainable tensors that still belong in a checkpoint (running stats).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() { return {}; }
  /// Shortest time length any batch-norm sees; SIZE_MAX when there is none.
  virtual std::size_t min_feature_length() const { return SIZE_MAX; }

  InspectReport inspect() const { return inspect_arch(spec_, vocab_columns_); }

 protected:
  TextClassifier(ArchSpec spec, std::size_t vocab_columns)
      : spec_(std::move(spec)), vocab_columns_(vocab_columns) {}

  Var<T> adapt_input(Tape<T>& tape, const ITensor& indices, Parameter<T>* table) {
    if (spec_.level == Level::chars)
      return onehot_input<T>(tape, indices, CharVocab::kSize);
    return embedding(tape, indices, *table);
  }

  ArchSpec spec_;
  std::size_t vocab_columns_;
};

/// Shallow-and-wide CNN: parallel convolutions with global max-over-time
/// pooling, concatenated and classified.
template <typename T>
class ShallowModel : public TextClassifier<T> {
 public:
  ShallowModel(ArchSpec spec, std::size_t vocab_columns, RngStream& rng,
               Parameter<T> embedding_table = {})
      : TextClassifier<T>(std::move(spec), vocab_columns) {
    const ArchSpec& s = this->spec_;
    s.validate();
    const std::size_t d = s.embed_dim();
    if (s.level == Level::words) {
      embedding_ = embedding_table.value.empty()
                       ? make_embedding_table<T>(vocab_columns, rng)
                       : std::move(embedding_table);
      if (embedding_.value.dim(1) != vocab_columns)
        detail::fail("embedding table column count does not match the vocabulary");
    }
    for (std::size_t h : s.windows) {
      branches_.push_back(Branch{
          init::conv_weight<T>(detail::str("conv_h", h, ".weight"), s.filters, d, h, rng),
          init::zero_bias<T>(detail::str("conv_h", h, ".bias"), s.filters)});
    }
    const std::size_t width = s.windows.size() * s.filters;
    head_w_ = init::linear_weight<T>("classifier.weight", s.num_classes, width, rng);
    head_b_ = init::zero_bias<T>("classifier.bias", s.num_classes);
  }

  Var<T> logits(Tape<T>& tape, const ITensor& indices, Mode mode,
                RngStream& dropout_rng) override {
    const ArchSpec& s = this->spec_;
    Var<T> x = this->adapt_input(tape, indices, &embedding_);
    std::vector<Var<T>> pooled;
    pooled.reserve(branches_.size());
    for (auto& br : branches_)
      pooled.push_back(global_max_pool(relu(conv1d(x, br.w, br.b))));
    Var<T> g = dense_concat(pooled);
    g = dropout(g, s.dropout, mode, dropout_rng);
    return linear(g, head_w_, head_b_);
  }

  std::vector<Parameter<T>*> parameters() override {
    std::vector<Parameter<T>*> out;
    if (this->spec_.level == Level::words) out.push_back(&embedding_);
    for (auto& br : branches_) {
      out.push_back(&br.w);
      out.push_back(&br.b);
    }
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
  }

  Parameter<T>& embedding_table() { return embedding_; }

 private:
  struct Branch {
    Parameter<T> w, b;
  };

  Parameter<T> embedding_;
  std::vector<Branch> branches_;
  Parameter<T> head_w_, head_b_;
};

/// Character/word DenseNet: a same-length stem convolution, four dense
/// blocks of BN-ReLU-conv layers with in-block concatenation, channel-halving
/// transitions with pool/2, and either the local-max + two-FC tail or a
/// global average pooling tail.
template <typename T>
class DenseNetModel : public TextClassifier<T> {
 public:
  DenseNetModel(ArchSpec spec, std::size_t vocab_columns, RngStream& rng,
                Parameter<T> embedding_table = {})
      : TextClassifier<T>(std::move(spec), vocab_columns) {
    const ArchSpec& s = this->spec_;
    s.validate();
    const std::size_t d = s.embed_dim();
    const std::size_t h = s.windows[0];
    if (s.level == Level::words) {
      embedding_ = embedding_table.value.empty()
                       ? make_embedding_table<T>(vocab_columns, rng)
                       : std::move(embedding_table);
      if (embedding_.value.dim(1) != vocab_columns)
        detail::fail("embedding table column count does not match the vocabulary");
    }

    stem_w_ = init::conv_weight<T>("stem.weight", s.init_channels, d, h, rng);
    stem_b_ = init::zero_bias<T>("stem.bias", s.init_channels);

    std::size_t channels = s.init_channels;
    std::size_t len = s.max_len;
    for (std::size_t b = 0; b < 4; ++b) {
      blocks_.emplace_back();
      for (std::size_t l = 0; l < s.blocks[b]; ++l) {
        const std::string name = detail::str("block", b + 1, ".conv", l + 1);
        blocks_.back().push_back(ConvBlockParams{
            BatchNorm<T>(name + ".bn", channels),
            init::conv_weight<T>(name + ".weight", s.growth, channels, h, rng),
            init::zero_bias<T>(name + ".bias", s.growth)});
        channels += s.growth;
      }
      if (b < 3) {
        const std::size_t out_ch = channels / 2;
        const std::string name = detail::str("transition", b + 1);
        transitions_.push_back(Transition{
            init::conv_weight<T>(name + ".weight", out_ch, channels, h, rng),
            init::zero_bias<T>(name + ".bias", out_ch)});
        channels = out_ch;
        len = detail::ceil_div(len, 2);
      }
    }
    final_channels_ = channels;
    final_length_ = len;

    std::size_t feat;
    if (s.tail == TailKind::local_max_fc) {
      const std::size_t pooled = detail::ceil_div(len, s.final_pool_kernel());
      const std::size_t flat = channels * pooled;
      fc1_w_ = init::linear_weight<T>("fc1.weight", s.fc_width, flat, rng);
      fc1_b_ = init::zero_bias<T>("fc1.bias", s.fc_width);
      fc2_w_ = init::linear_weight<T>("fc2.weight", s.fc_width, s.fc_width, rng);
      fc2_b_ = init::zero_bias<T>("fc2.bias", s.fc_width);
      feat = s.fc_width;
    } else {
      feat = channels;
    }
    head_w_ = init::linear_weight<T>("classifier.weight", s.num_classes, feat, rng);
    head_b_ = init::zero_bias<T>("classifier.bias", s.num_classes);
  }

  Var<T> logits(Tape<T>& tape, const ITensor& indices, Mode mode,
                RngStream& dropout_rng) override {
    const ArchSpec& s = this->spec_;
    const std::size_t h = s.windows[0];
    const std::size_t pad = (h - 1) / 2;

    Var<T> x = this->adapt_input(tape, indices, &embedding_);
    x = conv1d(pad1d(x, pad, pad), stem_w_, stem_b_);
    for (std::size_t b = 0; b < 4; ++b) {
      std::vector<Var<T>> feats = {x};
      for (auto& layer : blocks_[b]) {
        Var<T> in = dense_concat(feats);
        Var<T> out = conv1d(pad1d(relu(batch_norm(in, layer.bn, mode)), pad, pad),
                            layer.w, layer.b);
        feats.push_back(out);
      }
      x = dense_concat(feats);
      if (b < 3)
        x = local_max_pool(conv1d(pad1d(x, pad, pad), transitions_[b].w, transitions_[b].b), 2);
    }

    Var<T> feat;
    if (s.tail == TailKind::local_max_fc) {
      Var<T> pooled = local_max_pool(x, s.final_pool_kernel());
      Var<T> f = flatten(pooled);
      f = relu(linear(f, fc1_w_, fc1_b_));
      feat = linear(f, fc2_w_, fc2_b_);
    } else {
      feat = global_avg_pool(x);
    }
    feat = dropout(feat, s.dropout, mode, dropout_rng);
    return linear(feat, head_w_, head_b_);
  }

  std::vector<Parameter<T>*> parameters() override {
    std::vector<Parameter<T>*> out;
    if (this->spec_.level == Level::words) out.push_back(&embedding_);
    out.push_back(&stem_w_);
    out.push_back(&stem_b_);
    for (auto& block : blocks_)
      for (auto& layer : block) {
        out.push_back(&layer.bn.scale);
        out.push_back(&layer.bn.shift);
        out.push_back(&layer.w);
        out.push_back(&layer.b);
      }
    for (auto& t : transitions_) {
      out.push_back(&t.w);
      out.push_back(&t.b);
    }
    if (this->spec_.tail == TailKind::local_max_fc) {
      out.push_back(&fc1_w_);
      out.push_back(&fc1_b_);
      out.push_back(&fc2_w_);
      out.push_back(&fc2_b_);
    }
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() override {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& block : blocks_)
      for (auto& layer : block) {
        out.emplace_back(layer.bn.scale.name.substr(0, layer.bn.scale.name.size() - 6) +
                             ".running_mean",
                         &layer.bn.running_mean);
        out.emplace_back(layer.bn.scale.name.substr(0, layer.bn.scale.name.size() - 6) +
                             ".running_var",
                         &layer.bn.running_var);
      }
    return out;
  }

  std::size_t min_feature_length() const override { return final_length_; }

  Parameter<T>& embedding_table() { return embedding_; }

 private:
  struct ConvBlockParams {
    BatchNorm<T> bn;
    Parameter<T> w, b;
  };
  struct Transition {
    Parameter<T> w, b;
  };

  Parameter<T> embedding_;
  Parameter<T> stem_w_, stem_b_;
  std::vector<std::vector<ConvBlockParams>> blocks_;
  std::vector<Transition> transitions_;
  Parameter<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  Parameter<T> head_w_, head_b_;
  std::size_t final_channels_ = 0;
  std::size_t final_length_ = 0;
};

/// Builds the model a spec describes. For word-level specs the embedding
/// table is initialized here (optionally from pretrained vectors via the
/// vocabulary); char-level specs use the fixed one-hot adapter.
template <typename T>
std::unique_ptr<TextClassifier<T>> build_model(const ArchSpec& spec,
                                               std::size_t vocab_columns,
                                               RngStream& rng,
                                               const WordVocab* vocab = nullptr,
                                               const PretrainedVectors<T>* pretrained = nullptr) {
  spec.validate();
  Parameter<T> table;
  if (spec.level == Level::words) {
    if (vocab_columns < WordVocab::kReserved + 1)
      detail::fail("word-level models need at least one real vocabulary token");
    if (vocab) {
      if (vocab->total_size() != vocab_columns)
        detail::fail("vocabulary size does not match vocab_columns");
      table = init_embeddings<T>(*vocab, pretrained, rng);
    }
  }
  if (spec.family == Family::shallow)
    return std::make_unique<ShallowModel<T>>(spec, vocab_columns, rng, std::move(table));
  return std::make_unique<DenseNetModel<T>>(spec, vocab_columns, rng, std::move(table));
}

}  // namespace textcnn
