#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "textcnn/adam.hpp"
#include "textcnn/arch.hpp"
#include "textcnn/model.hpp"

namespace textcnn {

// Binary checkpoint layout (little-endian):
//   8-byte magic, u32 version, u8 element size (4|8),
//   u32 arch text length + "key = value" lines,
//   u64 vocabulary hash, u64 completed epochs,
//   u8 has-adam flag (+ u64 adam timestep),
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 rank, u64 dims, raw IEEE-754 values.
inline constexpr char kCheckpointMagic[8] = {'T', 'X', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint32_t version = 0;
  std::size_t element_size = 0;  // 4 = f32, 8 = f64
  ArchSpec spec;
  std::uint64_t vocab_hash = 0;
  std::uint64_t epochs_done = 0;
  bool has_adam = false;
  std::uint64_t adam_t = 0;
};

namespace detail {

template <typename V>
void write_pod(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in, const char* what) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V)))
    fail(str("checkpoint truncated while reading ", what));
  return v;
}

inline std::string arch_to_text(const ArchSpec& spec) {
  std::string text;
  for (const auto& [k, v] : spec.to_kv()) text += k + " = " + v + "\n";
  return text;
}

inline ArchSpec arch_from_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return arch_from_kv(kv);
}

template <typename T>
void write_tensor_record(std::ostream& out, const std::string& name, const Tensor<T>& t) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d) write_pod<std::uint64_t>(out, t.dim(d));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
}

}  // namespace detail

/// Every tensor worth persisting, in a stable order: parameters, running
/// statistics, then (optionally) the Adam moments under adam.m:/adam.v:.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> checkpoint_tensors(
    TextClassifier<T>& model, AdamState<T>* adam) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  std::vector<Parameter<T>*> params = model.parameters();
  for (auto* p : params) out.emplace_back(p->name, &p->value);
  for (auto& [name, tensor] : model.state_tensors()) out.emplace_back(name, tensor);
  if (adam) {
    if (adam->moments.size() != params.size())
      detail::fail("adam state does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back("adam.m:" + params[i]->name, &adam->moments[i].m);
      out.emplace_back("adam.v:" + params[i]->name, &adam->moments[i].v);
    }
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::string& path, TextClassifier<T>& model,
                     std::uint64_t vocab_hash, std::uint64_t epochs_done,
                     AdamState<T>* adam = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) detail::fail("cannot write checkpoint file: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
  const std::string arch = detail::arch_to_text(model.spec());
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(arch.size()));
  out.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  detail::write_pod<std::uint64_t>(out, vocab_hash);
  detail::write_pod<std::uint64_t>(out, epochs_done);
  detail::write_pod<std::uint8_t>(out, adam ? 1 : 0);
  if (adam) detail::write_pod<std::uint64_t>(out, adam->t);

  auto tensors = checkpoint_tensors(model, adam);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, tensor] : tensors) detail::write_tensor_record(out, name, *tensor);
  if (!out) detail::fail("failed while writing checkpoint: " + path);
}

/// Header only: enough to rebuild the model before loading tensors.
inline CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail("cannot open checkpoint file: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    detail::fail("not a checkpoint file (bad magic): " + path);
  CheckpointMeta meta;
  meta.version = detail::read_pod<std::uint32_t>(in, "version");
  if (meta.version != kCheckpointVersion)
    detail::fail(detail::str("unsupported checkpoint version ", meta.version,
                             " (this build reads version ", kCheckpointVersion, ")"));
  meta.element_size = detail::read_pod<std::uint8_t>(in, "element size");
  if (meta.element_size != 4 && meta.element_size != 8)
    detail::fail("checkpoint carries an unknown element size");
  const auto arch_len = detail::read_pod<std::uint32_t>(in, "arch length");
  std::string arch(arch_len, '\0');
  if (!in.read(arch.data(), arch_len)) detail::fail("checkpoint truncated in arch text");
  meta.spec = detail::arch_from_text(arch);
  meta.vocab_hash = detail::read_pod<std::uint64_t>(in, "vocab hash");
  meta.epochs_done = detail::read_pod<std::uint64_t>(in, "epoch counter");
  meta.has_adam = detail::read_pod<std::uint8_t>(in, "adam flag") != 0;
  if (meta.has_adam) meta.adam_t = detail::read_pod<std::uint64_t>(in, "adam timestep");
  return meta;
}

/// Restores every tensor into an already-built model (and Adam state when
/// present and requested). The build precision must match the file.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, TextClassifier<T>& model,
                               AdamState<T>* adam = nullptr) {
  CheckpointMeta meta = peek_checkpoint(path);
  if (meta.element_size != sizeof(T))
    detail::fail(detail::str("checkpoint stores ", meta.element_size * 8,
                             "-bit values but the model was built for ",
                             sizeof(T) * 8, "-bit"));
  if (adam && meta.has_adam) {
    *adam = AdamState<T>::zeros(model.parameters());
    adam->t = meta.adam_t;
  }

  std::map<std::string, Tensor<T>*> expected;
  for (auto& [name, tensor] : checkpoint_tensors(model, meta.has_adam ? adam : nullptr))
    expected[name] = tensor;

  std::ifstream in(path, std::ios::binary);
  // re-skip the header (peek validated it)
  in.seekg(8 + 4 + 1, std::ios::beg);
  const auto arch_len = detail::read_pod<std::uint32_t>(in, "arch length");
  in.seekg(arch_len + 8 + 8 + 1 + (meta.has_adam ? 8 : 0), std::ios::cur);

  const auto count = detail::read_pod<std::uint32_t>(in, "tensor count");
  std::size_t filled = 0;
  for (std::uint32_t idx = 0; idx < count; ++idx) {
    const auto name_len = detail::read_pod<std::uint32_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) detail::fail("checkpoint truncated in tensor name");
    const auto rank = detail::read_pod<std::uint32_t>(in, "tensor rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(detail::read_pod<std::uint64_t>(in, "tensor dim"));

    auto it = expected.find(name);
    const bool skip = it == expected.end();
    if (skip && name.rfind("adam.", 0) != 0)
      detail::fail("checkpoint tensor '" + name + "' does not exist in this model");
    const std::size_t n = shape_size(shape);
    if (skip) {
      in.seekg(static_cast<std::streamoff>(n * sizeof(T)), std::ios::cur);
      if (!in) detail::fail("checkpoint truncated in tensor data");
      continue;
    }
    if (it->second->shape() != shape)
      detail::fail(detail::str("checkpoint tensor '", name, "' has shape ",
                               shape_str(shape), " but the model expects ",
                               shape_str(it->second->shape())));
    if (!in.read(reinterpret_cast<char*>(it->second->data()),
                 static_cast<std::streamsize>(n * sizeof(T))))
      detail::fail("checkpoint truncated in tensor data");
    ++filled;
  }
  if (filled != expected.size())
    detail::fail(detail::str("checkpoint is missing ", expected.size() - filled,
                             " tensors expected by this model"));
  return meta;
}

}  // namespace textcnn
