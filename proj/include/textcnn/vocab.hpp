#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "textcnn/tensor.hpp"

namespace textcnn {

/// FNV-1a over a byte string; used to fingerprint vocabularies so an
/// evaluation run can refuse a checkpoint built against different indices.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// One sample encoded to a fixed-length index sequence. Padding fills the
/// tail; true_length counts the positions backed by actual input.
struct EncodedSequence {
  std::vector<std::int32_t> indices;
  std::size_t true_length = 0;
  std::int32_t label = -1;
};

// The 69-symbol character dictionary: 26 lowercase letters, 10 digits, the
// 32 ASCII punctuation marks and newline. The source listing this follows
// writes '-' twice and typesets quote-like glyphs ambiguously; here the
// duplicate is collapsed and every symbol is pinned to its ASCII form, which
// keeps symbol <-> index a bijection at exactly 69 entries.
inline constexpr std::string_view kCharAlphabet =
    "abcdefghijklmnopqrstuvwxyz0123456789-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}\n";
static_assert(kCharAlphabet.size() == 69);

/// Fixed character-level dictionary. Out-of-alphabet characters map to the
/// padding index, which one-hot encodes as an all-zero column.
class CharVocab {
 public:
  static constexpr std::size_t kSize = 69;
  static constexpr std::int32_t kPadIndex = 69;

  CharVocab() {
    lookup_.fill(-1);
    for (std::size_t i = 0; i < kCharAlphabet.size(); ++i)
      lookup_[static_cast<unsigned char>(kCharAlphabet[i])] = static_cast<std::int32_t>(i);
  }

  std::string_view alphabet() const { return kCharAlphabet; }

  /// Index of a raw (already lowercased) character, or -1 if absent.
  std::int32_t index_of(char c) const { return lookup_[static_cast<unsigned char>(c)]; }

  char symbol(std::size_t index) const { return kCharAlphabet[index]; }

  std::uint64_t fingerprint() const {
    return fnv1a64("char\n" + std::string(kCharAlphabet));
  }

 private:
  std::array<std::int32_t, 256> lookup_;
};

inline constexpr std::size_t kCharMaxLen = 1014;

/// Byte-wise character encoding: lowercase, map through the dictionary,
/// send unknown bytes to padding, then pad or truncate to max_len. Total
/// over arbitrary input.
inline EncodedSequence encode_chars(std::string_view text, const CharVocab& vocab,
                                    std::size_t max_len = kCharMaxLen,
                                    bool lowercase = true) {
  EncodedSequence seq;
  seq.indices.assign(max_len, CharVocab::kPadIndex);
  seq.true_length = std::min(text.size(), max_len);
  for (std::size_t t = 0; t < seq.true_length; ++t) {
    char c = text[t];
    if (lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    std::int32_t ix = vocab.index_of(c);
    seq.indices[t] = ix < 0 ? CharVocab::kPadIndex : ix;
  }
  return seq;
}

/// Inverse of encode_chars on in-alphabet text; padding positions decode to
/// nothing.
inline std::string decode_chars(const std::vector<std::int32_t>& indices,
                                const CharVocab& vocab) {
  std::string out;
  for (std::int32_t ix : indices)
    if (ix >= 0 && static_cast<std::size_t>(ix) < CharVocab::kSize)
      out.push_back(vocab.symbol(static_cast<std::size_t>(ix)));
  return out;
}

/// One-hot matrix (69, max_len): column t is the unit vector of index t,
/// all-zero for padding.
template <typename T>
Tensor<T> chars_to_onehot(const EncodedSequence& seq) {
  Tensor<T> out({CharVocab::kSize, seq.indices.size()}, T{});
  for (std::size_t t = 0; t < seq.indices.size(); ++t) {
    std::int32_t ix = seq.indices[t];
    if (ix >= 0 && static_cast<std::size_t>(ix) < CharVocab::kSize)
      out(static_cast<std::size_t>(ix), t) = T(1);
  }
  return out;
}

/// Deterministic word tokenizer: lowercase, split on whitespace, and (unless
/// raw_whitespace) detach ASCII punctuation as single-character tokens.
inline std::vector<std::string> tokenize_words(std::string_view text,
                                               bool lowercase = true,
                                               bool raw_whitespace = false) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (char raw : text) {
    unsigned char u = static_cast<unsigned char>(raw);
    char c = raw;
    if (lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (std::isspace(u)) {
      flush();
    } else if (!raw_whitespace && u < 128 && std::ispunct(u)) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return tokens;
}

/// Corpus-built word dictionary. Index 0 is padding, index 1 is the
/// out-of-vocabulary token; real tokens start at 2, ordered by descending
/// corpus frequency with lexicographic tie-breaking.
class WordVocab {
 public:
  static constexpr std::int32_t kPadIndex = 0;
  static constexpr std::int32_t kOovIndex = 1;
  static constexpr std::size_t kReserved = 2;

  static WordVocab build(const std::vector<std::string>& corpus_tokens,
                         std::size_t min_freq = 1) {
    if (corpus_tokens.empty()) detail::fail("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& t : corpus_tokens) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    WordVocab v;
    for (auto& [token, count] : ranked) {
      if (count < min_freq) continue;
      v.index_[token] = static_cast<std::int32_t>(kReserved + v.tokens_.size());
      v.tokens_.push_back(token);
    }
    return v;
  }

  /// Reads the dump format back; the two reserved header lines must match.
  static WordVocab load_dump(const std::string& path) {
    std::ifstream in(path);
    if (!in) detail::fail("cannot open vocabulary file: " + path);
    WordVocab v;
    std::string line;
    for (const char* expected : {"<pad>", "<oov>"}) {
      if (!std::getline(in, line) || strip_cr(line) != expected)
        detail::fail(detail::str("vocabulary file ", path, " must start with <pad> and <oov> lines"));
    }
    while (std::getline(in, line)) {
      strip_cr(line);
      if (line.empty()) continue;
      v.index_[line] = static_cast<std::int32_t>(kReserved + v.tokens_.size());
      v.tokens_.push_back(line);
    }
    return v;
  }

  /// Columns of the embedding table: padding + OOV + real tokens.
  std::size_t total_size() const { return kReserved + tokens_.size(); }

  std::int32_t index_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kOovIndex : it->second;
  }

  const std::string& token(std::int32_t index) const {
    static const std::string pad = "<pad>", oov = "<oov>";
    if (index == kPadIndex) return pad;
    if (index == kOovIndex) return oov;
    return tokens_.at(static_cast<std::size_t>(index) - kReserved);
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  void dump(std::ostream& out) const {
    out << "<pad>\n<oov>\n";
    for (const auto& t : tokens_) out << t << "\n";
  }

  void dump_to(const std::string& path) const {
    std::ofstream out(path);
    if (!out) detail::fail("cannot write vocabulary file: " + path);
    dump(out);
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a64("word\n<pad>\n<oov>\n");
    for (const auto& t : tokens_) h = fnv1a64(t + "\n", h);
    return h;
  }

 private:
  static std::string& strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::string> tokens_;
};

inline constexpr std::size_t kWordMaxLen = 256;

/// Word-level encoding: tokenize, map known tokens to their index and
/// unknown ones to OOV, pad or truncate to max_len.
inline EncodedSequence encode_words(std::string_view text, const WordVocab& vocab,
                                    std::size_t max_len = kWordMaxLen,
                                    bool lowercase = true,
                                    bool raw_whitespace = false) {
  std::vector<std::string> tokens = tokenize_words(text, lowercase, raw_whitespace);
  EncodedSequence seq;
  seq.indices.assign(max_len, WordVocab::kPadIndex);
  seq.true_length = std::min(tokens.size(), max_len);
  for (std::size_t t = 0; t < seq.true_length; ++t)
    seq.indices[t] = vocab.index_of(tokens[t]);
  return seq;
}

}  // namespace textcnn
