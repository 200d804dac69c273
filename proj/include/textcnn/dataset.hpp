#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "textcnn/rng.hpp"
#include "textcnn/tensor.hpp"
#include "textcnn/vocab.hpp"

namespace textcnn {

struct Sample {
  std::int32_t label = 0;  // 0-based internally
  std::string text;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;
};

namespace detail {

/// One CSV record: every field double-quoted, embedded quotes doubled.
inline std::vector<std::string> parse_csv_row(const std::string& line,
                                              std::size_t row_no) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  const std::size_t n = line.size();
  while (pos < n) {
    if (line[pos] != '"')
      fail(str("row ", row_no, ": expected opening quote at column ", pos + 1));
    ++pos;
    std::string field;
    bool closed = false;
    while (pos < n) {
      if (line[pos] == '"') {
        if (pos + 1 < n && line[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
        } else {
          ++pos;
          closed = true;
          break;
        }
      } else {
        field.push_back(line[pos++]);
      }
    }
    if (!closed) fail(str("row ", row_no, ": unbalanced quotes"));
    fields.push_back(std::move(field));
    if (pos < n) {
      if (line[pos] != ',')
        fail(str("row ", row_no, ": expected ',' after field, got '", line[pos], "'"));
      ++pos;
      if (pos == n) fields.emplace_back();  // trailing empty (unquoted) field
    }
  }
  return fields;
}

}  // namespace detail

/// Loads the corpus CSV schema: first field a 1-based class index, remaining
/// fields text, joined by single spaces. Labels become 0-based.
inline Dataset load_csv(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) detail::fail("cannot open dataset file: " + path);
  Dataset out;
  out.num_classes = num_classes;
  std::string line;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::parse_csv_row(line, row_no);
    if (fields.empty()) continue;
    long long label = detail::parse_int(fields[0], detail::str("row ", row_no, ": label"));
    if (label < 1 || static_cast<std::size_t>(label) > num_classes)
      detail::fail(detail::str("row ", row_no, ": label ", label,
                               " outside [1, ", num_classes, "]"));
    std::string text;
    for (std::size_t f = 1; f < fields.size(); ++f) {
      if (f > 1) text.push_back(' ');
      text += fields[f];
    }
    out.samples.push_back(Sample{static_cast<std::int32_t>(label - 1), std::move(text)});
  }
  return out;
}

/// Writes a dataset back in the same schema (1-based labels, quoted fields).
inline void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) detail::fail("cannot write dataset file: " + path);
  for (const auto& s : data.samples) {
    std::string quoted;
    for (char c : s.text) {
      quoted.push_back(c);
      if (c == '"') quoted.push_back('"');
    }
    out << '"' << (s.label + 1) << "\",\"" << quoted << "\"\n";
  }
}

/// Deterministic token list for synthetic corpora: t00, t01, ...
inline std::vector<std::string> synth_tokens(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%02zu", i);
    out.emplace_back(buf);
  }
  return out;
}

/// Linearly separable synthetic dataset: class c owns the three marker
/// tokens vocab[3c .. 3c+2]; every sample contains at least two of its own
/// class markers and fillers drawn only from the non-marker remainder, so a
/// bag-of-marker-counts classifier is exact on it.
inline Dataset synth_dataset(std::size_t num_classes, std::size_t samples_per_class,
                             const std::vector<std::string>& vocab, RngStream& rng) {
  if (vocab.size() < num_classes * 3)
    detail::fail(detail::str("synthetic dataset needs a vocabulary of at least ",
                             num_classes * 3, " tokens, got ", vocab.size()));
  const std::size_t marker_count = num_classes * 3;
  Dataset out;
  out.num_classes = num_classes;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      const std::size_t len = 8 + rng.below(9);
      std::vector<std::string> tokens;
      tokens.reserve(len);
      for (std::size_t i = 0; i < len; ++i) {
        if (marker_count < vocab.size())
          tokens.push_back(vocab[marker_count + rng.below(vocab.size() - marker_count)]);
        else
          tokens.push_back(vocab[3 * c + rng.below(3)]);
      }
      // two distinct positions carry this class's markers
      const std::size_t p1 = rng.below(len);
      const std::size_t p2 = (p1 + 1 + rng.below(len - 1)) % len;
      tokens[p1] = vocab[3 * c + rng.below(3)];
      tokens[p2] = vocab[3 * c + rng.below(3)];
      std::string text;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) text.push_back(' ');
        text += tokens[i];
      }
      out.samples.push_back(Sample{static_cast<std::int32_t>(c), std::move(text)});
    }
  }
  return out;
}

/// Fixed-length encoded dataset plus labels; built once, batched many times.
struct EncodedDataset {
  ITensor indices;  // (N, max_len)
  std::vector<std::int32_t> labels;
  std::size_t num_classes = 0;
  std::size_t max_len = 0;

  std::size_t size() const { return labels.size(); }
};

template <typename Encoder>
EncodedDataset encode_dataset(const Dataset& data, Encoder&& encode, std::size_t max_len) {
  if (data.samples.empty()) detail::fail("cannot encode an empty dataset");
  EncodedDataset out;
  out.num_classes = data.num_classes;
  out.max_len = max_len;
  out.indices = ITensor({data.samples.size(), max_len});
  out.labels.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    EncodedSequence seq = encode(data.samples[i].text);
    if (seq.indices.size() != max_len)
      detail::fail("encoder produced a sequence of the wrong length");
    std::copy(seq.indices.begin(), seq.indices.end(), out.indices.row(i));
    out.labels.push_back(data.samples[i].label);
  }
  return out;
}

struct Batch {
  ITensor indices;  // (B, max_len)
  ITensor labels;   // (B)
};

/// Splits a dataset into batches of batch_size (final partial batch kept).
/// With a shuffle stream the sample order is a seeded Fisher-Yates
/// permutation; without one, file order.
inline std::vector<Batch> make_batches(const EncodedDataset& data, std::size_t batch_size,
                                       RngStream* shuffle_rng) {
  if (batch_size == 0) detail::fail("batch size must be positive");
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle_rng)
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng->below(i)]);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t rows = std::min(batch_size, n - start);
    Batch b{ITensor({rows, data.max_len}), ITensor({rows})};
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t src = order[start + r];
      std::copy_n(data.indices.row(src), data.max_len, b.indices.row(r));
      b.labels[r] = data.labels[src];
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace textcnn
