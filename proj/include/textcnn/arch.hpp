#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "textcnn/tensor.hpp"
#include "textcnn/vocab.hpp"

namespace textcnn {

enum class Level { chars, words };
enum class Family { shallow, densenet };
enum class TailKind { local_max_fc, global_avg };

inline const char* to_string(Level l) { return l == Level::chars ? "char" : "word"; }
inline const char* to_string(Family f) { return f == Family::shallow ? "shallow" : "densenet"; }
inline const char* to_string(TailKind t) { return t == TailKind::local_max_fc ? "max" : "avg"; }

inline Level parse_level(const std::string& s) {
  if (s == "char") return Level::chars;
  if (s == "word") return Level::words;
  detail::fail("level must be 'char' or 'word', got '" + s + "'");
}

inline Family parse_family(const std::string& s) {
  if (s == "shallow") return Family::shallow;
  if (s == "densenet") return Family::densenet;
  detail::fail("family must be 'shallow' or 'densenet', got '" + s + "'");
}

inline TailKind parse_tail(const std::string& s) {
  if (s == "max") return TailKind::local_max_fc;
  if (s == "avg") return TailKind::global_avg;
  detail::fail("tail must be 'max' or 'avg', got '" + s + "'");
}

namespace detail {

inline long long parse_int(const std::string& value, const std::string& what) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) fail(what + ": trailing characters in '" + value + "'");
    return v;
  } catch (const std::invalid_argument&) {
    fail(what + ": '" + value + "' is not an integer");
  } catch (const std::out_of_range&) {
    fail(what + ": '" + value + "' is out of range");
  }
}

inline std::size_t parse_positive(const std::string& value, const std::string& what) {
  long long v = parse_int(value, what);
  if (v <= 0) fail(detail::str(what, " must be positive, got ", v));
  return static_cast<std::size_t>(v);
}

inline double parse_double(const std::string& value, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) fail(what + ": trailing characters in '" + value + "'");
    return v;
  } catch (const std::exception&) {
    fail(what + ": '" + value + "' is not a number");
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Kernel window list in the "15,20,25" notation.
inline std::vector<std::size_t> parse_windows(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& part : detail::split(s, ','))
    out.push_back(detail::parse_positive(part, "windows"));
  return out;
}

/// Block configuration in the "10-10-4-4" notation; exactly four blocks.
inline std::array<std::size_t, 4> parse_blocks(const std::string& s) {
  auto parts = detail::split(s, '-');
  if (parts.size() != 4)
    detail::fail("blocks must have exactly 4 dash-separated entries, got '" + s + "'");
  std::array<std::size_t, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = detail::parse_positive(parts[i], "blocks");
  return out;
}

/// Declarative model description; every knob the builders consume.
struct ArchSpec {
  Level level = Level::words;
  Family family = Family::shallow;
  std::vector<std::size_t> windows = {3, 4, 5};  // shallow kernel sizes; [0] is the densenet window
  std::size_t filters = 100;                     // shallow filters per window
  std::array<std::size_t, 4> blocks = {4, 4, 4, 4};
  std::size_t growth = 64;
  std::size_t init_channels = 64;
  TailKind tail = TailKind::global_avg;
  double dropout = 0.0;
  std::size_t num_classes = 2;
  std::size_t max_len = kWordMaxLen;
  std::size_t fc_width = 2048;  // hidden width of the local-max tail

  /// Input channels seen by the first convolution.
  std::size_t embed_dim() const { return level == Level::chars ? CharVocab::kSize : 300; }

  /// Kernel of the final local max-pooling in the max tail.
  std::size_t final_pool_kernel() const { return level == Level::chars ? 3 : 8; }

  void validate() const {
    if (num_classes < 2) detail::fail("classes must be at least 2");
    if (dropout < 0 || dropout >= 1)
      detail::fail(detail::str("dropout must be in [0, 1), got ", dropout));
    if (max_len == 0) detail::fail("max_len must be positive");
    if (family == Family::shallow) {
      if (windows.empty()) detail::fail("shallow family needs at least one window");
      if (filters == 0) detail::fail("filters must be positive");
      for (std::size_t w : windows)
        if (w > max_len)
          detail::fail(detail::str("max_len ", max_len, " is shorter than window ", w));
    } else {
      for (std::size_t b : blocks)
        if (b == 0) detail::fail("every dense block needs at least one layer");
      if (growth == 0 || init_channels == 0 || fc_width == 0)
        detail::fail("growth, init_channels and fc_width must be positive");
      if (windows.empty() || windows[0] % 2 == 0)
        detail::fail("densenet window must be odd for same-length convolution");
      if (max_len < 8)
        detail::fail(detail::str("densenet needs max_len >= 8 so all three "
                                 "transitions keep a positive length, got ",
                                 max_len));
    }
  }

  std::vector<std::pair<std::string, std::string>> to_kv() const {
    auto join = [](const std::vector<std::size_t>& v, char sep) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s.push_back(sep);
        s += std::to_string(v[i]);
      }
      return s;
    };
    char drop[32];
    std::snprintf(drop, sizeof(drop), "%g", dropout);
    return {
        {"level", to_string(level)},
        {"family", to_string(family)},
        {"windows", join(windows, ',')},
        {"filters", std::to_string(filters)},
        {"blocks", join({blocks[0], blocks[1], blocks[2], blocks[3]}, '-')},
        {"growth", std::to_string(growth)},
        {"init_channels", std::to_string(init_channels)},
        {"tail", to_string(tail)},
        {"dropout", drop},
        {"max_len", std::to_string(max_len)},
        {"classes", std::to_string(num_classes)},
        {"fc_width", std::to_string(fc_width)},
    };
  }
};

/// Applies one architecture key; returns false when the key is not an
/// architecture key (so callers can try other key groups).
inline bool apply_arch_key(ArchSpec& spec, const std::string& key, const std::string& value) {
  if (key == "level") spec.level = parse_level(value);
  else if (key == "family") spec.family = parse_family(value);
  else if (key == "windows") spec.windows = parse_windows(value);
  else if (key == "filters") spec.filters = detail::parse_positive(value, "filters");
  else if (key == "blocks") spec.blocks = parse_blocks(value);
  else if (key == "growth") spec.growth = detail::parse_positive(value, "growth");
  else if (key == "init_channels") spec.init_channels = detail::parse_positive(value, "init_channels");
  else if (key == "tail") spec.tail = parse_tail(value);
  else if (key == "dropout") spec.dropout = detail::parse_double(value, "dropout");
  else if (key == "max_len") spec.max_len = detail::parse_positive(value, "max_len");
  else if (key == "classes") spec.num_classes = detail::parse_positive(value, "classes");
  else if (key == "fc_width") spec.fc_width = detail::parse_positive(value, "fc_width");
  else return false;
  return true;
}

inline ArchSpec arch_from_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
  ArchSpec spec;
  for (const auto& [k, v] : kv)
    if (!apply_arch_key(spec, k, v))
      detail::fail("unknown architecture key '" + k + "'");
  return spec;
}

/// Shallow-and-wide defaults: char level uses windows (15, 20, 25) with 700
/// filters; word level uses (3, 4, 5) with 100 filters and dropout 0.5.
inline ArchSpec shallow_default(Level level) {
  ArchSpec spec;
  spec.level = level;
  spec.family = Family::shallow;
  if (level == Level::chars) {
    spec.windows = {15, 20, 25};
    spec.filters = 700;
    spec.dropout = 0.0;
    spec.max_len = kCharMaxLen;
  } else {
    spec.windows = {3, 4, 5};
    spec.filters = 100;
    spec.dropout = 0.5;
    spec.max_len = kWordMaxLen;
  }
  return spec;
}

/// DenseNet defaults: window 3 at both levels, blocks (4, 4, 4, 4); the char
/// tail keeps local max-pooling plus two fully connected layers while the
/// word tail is a single global average pooling.
inline ArchSpec densenet_default(Level level) {
  ArchSpec spec;
  spec.level = level;
  spec.family = Family::densenet;
  spec.windows = {3};
  spec.blocks = {4, 4, 4, 4};
  spec.growth = 64;
  spec.init_channels = 64;
  spec.dropout = 0.0;
  if (level == Level::chars) {
    spec.tail = TailKind::local_max_fc;
    spec.max_len = kCharMaxLen;
  } else {
    spec.tail = TailKind::global_avg;
    spec.max_len = kWordMaxLen;
  }
  return spec;
}

}  // namespace textcnn
