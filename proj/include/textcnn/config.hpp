#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "textcnn/arch.hpp"
#include "textcnn/train.hpp"

namespace textcnn {

/// Fully resolved run description: architecture, optimization, precision and
/// file locations. Paths may also use the synthetic-corpus form
/// "synth:<samples_per_class>" anywhere a dataset path is expected.
struct RunConfig {
  ArchSpec arch;
  TrainConfig train;
  std::string precision = "f32";  // f32 | f64
  std::size_t min_freq = 1;

  std::string train_path;
  std::string test_path;
  std::string embeddings_path;
  std::string vocab_path;
  std::string checkpoint_path;
  std::string resume_path;
  std::string out_dir = ".";
};

using KvList = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& what) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) fail(what + ": trailing characters in '" + value + "'");
    return v;
  } catch (const std::exception&) {
    fail(what + ": '" + value + "' is not an unsigned integer");
  }
}

}  // namespace detail

/// Line-based "key = value" file with '#' comments and blank lines.
inline KvList read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::fail("cannot open config file: " + path);
  KvList kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      detail::fail(detail::str("config ", path, " line ", line_no,
                               ": expected 'key = value'"));
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty())
      detail::fail(detail::str("config ", path, " line ", line_no, ": empty key"));
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

/// Applies one resolved key. Unknown keys raise (no silent ignore);
/// `origin` names the offending source in the message.
inline void apply_config_key(RunConfig& cfg, const std::string& key,
                             const std::string& value, const std::string& origin) {
  if (apply_arch_key(cfg.arch, key, value)) return;
  if (key == "lr") {
    cfg.train.adam.lr = detail::parse_double(value, "lr");
    if (cfg.train.adam.lr < 0) detail::fail("lr must be non-negative");
  } else if (key == "batch") {
    cfg.train.batch_size = detail::parse_positive(value, "batch");
  } else if (key == "epochs") {
    long long v = detail::parse_int(value, "epochs");
    if (v < 0) detail::fail("epochs must be non-negative");
    cfg.train.epochs = static_cast<std::size_t>(v);
  } else if (key == "beta1") {
    cfg.train.adam.beta1 = detail::parse_double(value, "beta1");
  } else if (key == "beta2") {
    cfg.train.adam.beta2 = detail::parse_double(value, "beta2");
  } else if (key == "epsilon") {
    cfg.train.adam.epsilon = detail::parse_double(value, "epsilon");
  } else if (key == "seed") {
    cfg.train.seed = detail::parse_u64(value, "seed");
  } else if (key == "precision") {
    if (value != "f32" && value != "f64")
      detail::fail("precision must be 'f32' or 'f64', got '" + value + "'");
    cfg.precision = value;
  } else if (key == "min_freq") {
    cfg.min_freq = detail::parse_positive(value, "min_freq");
  } else if (key == "train") {
    cfg.train_path = value;
  } else if (key == "test") {
    cfg.test_path = value;
  } else if (key == "embeddings") {
    cfg.embeddings_path = value;
  } else if (key == "vocab") {
    cfg.vocab_path = value;
  } else if (key == "checkpoint") {
    cfg.checkpoint_path = value;
  } else if (key == "resume") {
    cfg.resume_path = value;
  } else if (key == "out") {
    cfg.out_dir = value;
  } else {
    detail::fail("unknown config key '" + key + "' (from " + origin + ")");
  }
}

/// Precedence: built-in defaults, then the config file, then flags. The
/// level/family pair is resolved first so the remaining keys override the
/// right family defaults.
inline RunConfig resolve_run_config(const KvList& file_kv, const KvList& flag_kv) {
  Level level = Level::words;
  Family family = Family::shallow;
  for (const KvList* src : {&file_kv, &flag_kv}) {
    for (const auto& [k, v] : *src) {
      if (k == "level") level = parse_level(v);
      if (k == "family") family = parse_family(v);
    }
  }
  RunConfig cfg;
  cfg.arch = family == Family::shallow ? shallow_default(level) : densenet_default(level);
  for (const auto& [k, v] : file_kv) apply_config_key(cfg, k, v, "config file");
  for (const auto& [k, v] : flag_kv) apply_config_key(cfg, k, v, "command line");
  cfg.arch.validate();
  cfg.train.adam.validate();
  return cfg;
}

/// True when a dataset path uses the synthetic form "synth:<per_class>".
inline bool is_synth_path(const std::string& path) { return path.rfind("synth:", 0) == 0; }

inline std::size_t parse_synth_count(const std::string& path) {
  return detail::parse_positive(path.substr(6), "synthetic sample count");
}

inline void require_input_file(const std::string& path, const std::string& what) {
  if (path.empty()) detail::fail(what + " path is required");
  if (is_synth_path(path)) {
    parse_synth_count(path);
    return;
  }
  if (!std::filesystem::exists(path))
    detail::fail(what + " path does not exist: " + path);
}

}  // namespace textcnn
