#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "textcnn/autodiff.hpp"
#include "textcnn/rng.hpp"
#include "textcnn/tensor_ops.hpp"
#include "textcnn/vocab.hpp"

namespace textcnn {

inline constexpr std::size_t kWordEmbedDim = 300;

/// Pretrained vectors parsed from the textual embedding format: a
/// "<count> <dim>" header line, then one "token v1 ... vdim" line per token.
template <typename T>
struct PretrainedVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<T>> vectors;
  std::vector<std::string> warnings;  // duplicate tokens, last occurrence kept
};

template <typename T>
PretrainedVectors<T> load_pretrained(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::fail("cannot open embedding file: " + path);

  PretrainedVectors<T> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t declared = 0;
  if (!std::getline(in, line))
    detail::fail("embedding file " + path + " is empty");
  ++line_no;
  {
    std::istringstream header(line);
    if (!(header >> declared >> out.dim) || out.dim == 0)
      detail::fail(detail::str("embedding file ", path,
                               " line 1: expected '<count> <dim>' header"));
  }

  std::size_t parsed = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token))
      detail::fail(detail::str("embedding file ", path, " line ", line_no,
                               ": missing token"));
    std::vector<T> vec(out.dim);
    for (std::size_t d = 0; d < out.dim; ++d) {
      double v;
      if (!(ls >> v))
        detail::fail(detail::str("embedding file ", path, " line ", line_no,
                                 ": expected ", out.dim, " values for token '",
                                 token, "'"));
      vec[d] = static_cast<T>(v);
    }
    double extra;
    if (ls >> extra)
      detail::fail(detail::str("embedding file ", path, " line ", line_no,
                               ": more than ", out.dim, " values for token '",
                               token, "'"));
    if (out.vectors.count(token))
      out.warnings.push_back(detail::str("duplicate token '", token, "' at line ",
                                         line_no, "; keeping the last occurrence"));
    out.vectors[token] = std::move(vec);
    ++parsed;
  }
  if (declared != parsed)
    out.warnings.push_back(detail::str("header declared ", declared,
                                       " vectors, file contains ", parsed));
  return out;
}

template <typename T>
void write_pretrained(const std::string& path,
                      const std::vector<std::pair<std::string, std::vector<T>>>& entries,
                      std::size_t dim) {
  std::ofstream out(path);
  if (!out) detail::fail("cannot write embedding file: " + path);
  out << entries.size() << " " << dim << "\n";
  char buf[32];
  for (const auto& [token, vec] : entries) {
    out << token;
    for (T v : vec) {
      // enough digits for an exact parse round-trip in either precision
      std::snprintf(buf, sizeof(buf), " %.17g", static_cast<double>(v));
      out << buf;
    }
    out << "\n";
  }
}

/// Uniform [-0.1, 0.1) embedding table with a zeroed, gradient-masked
/// padding column (so it never trains away).
template <typename T>
Parameter<T> make_embedding_table(std::size_t columns, RngStream& rng) {
  Parameter<T> table("embedding", Tensor<T>({kWordEmbedDim, columns}));
  for (std::size_t r = 0; r < kWordEmbedDim; ++r)
    for (std::size_t c = 0; c < columns; ++c)
      table.value(r, c) =
          c == WordVocab::kPadIndex ? T{} : static_cast<T>(rng.uniform(-0.1, 0.1));
  table.grad_mask = Tensor<T>({kWordEmbedDim, columns}, T(1));
  for (std::size_t r = 0; r < kWordEmbedDim; ++r)
    table.grad_mask(r, WordVocab::kPadIndex) = T{};
  return table;
}

/// Embedding table (300, |vocab|): pretrained vectors where available,
/// uniform [-0.1, 0.1) elsewhere (including the OOV column).
template <typename T>
Parameter<T> init_embeddings(const WordVocab& vocab,
                             const PretrainedVectors<T>* pretrained,
                             RngStream& rng) {
  if (pretrained && pretrained->dim != kWordEmbedDim)
    detail::fail(detail::str("pretrained embedding dimension ", pretrained->dim,
                             " does not match the required ", kWordEmbedDim));
  Parameter<T> table = make_embedding_table<T>(vocab.total_size(), rng);
  if (pretrained) {
    for (std::size_t i = 0; i < vocab.tokens().size(); ++i) {
      auto it = pretrained->vectors.find(vocab.tokens()[i]);
      if (it == pretrained->vectors.end()) continue;
      const std::size_t c = WordVocab::kReserved + i;
      for (std::size_t r = 0; r < kWordEmbedDim; ++r) table.value(r, c) = it->second[r];
    }
  }
  return table;
}

}  // namespace textcnn
