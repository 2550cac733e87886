#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "qamatch/common.hpp"

namespace qamatch {

/// Tokenization is pluggable but deliberately thin: `Whitespace` splits on
/// whitespace runs, `Pretokenized` declares that segmentation already
/// happened upstream (the text is space-joined tokens), which splits the
/// same way. Languages needing real segmentation must be pre-tokenized.
struct TokenizerSpec {
  enum class Mode { Whitespace, Pretokenized };
  Mode mode = Mode::Whitespace;
};

inline std::vector<std::string> tokenize(const std::string& text,
                                         const TokenizerSpec& = {}) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Token <-> id map with two reserved rows. Lookup is total: anything
/// unknown resolves to <unk>.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kPadToken = "<pad>";

  Vocabulary() {
    id_to_token_ = {kUnkToken, kPadToken};
    token_to_id_ = {{kUnkToken, kUnk}, {kPadToken, kPad}};
  }

  /// Tokens with frequency >= min_count get ids ordered by (frequency desc,
  /// token asc); everything else maps to <unk>.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          int min_count) {
    if (corpus.empty()) throw DataError("build_vocab: empty corpus");
    std::unordered_map<std::string, long long> freq;
    for (const auto& sent : corpus) {
      for (const auto& tok : sent) ++freq[tok];
    }
    std::vector<std::pair<std::string, long long>> kept;
    for (auto& [tok, n] : freq) {
      if (n >= min_count && tok != kUnkToken && tok != kPadToken) {
        kept.emplace_back(tok, n);
      }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    v.min_count_ = min_count;
    for (auto& [tok, n] : kept) {
      v.frequency_.push_back(n);
      v.add(tok);
    }
    return v;
  }

  int add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
    return id;
  }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
  }

  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

  std::size_t size() const { return id_to_token_.size(); }
  int min_count() const { return min_count_; }

  /// Corpus frequency of a non-reserved id, when built from a corpus.
  long long frequency(int id) const {
    return id >= 2 && id - 2 < static_cast<int>(frequency_.size())
               ? frequency_[static_cast<std::size_t>(id - 2)]
               : 0;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<long long> frequency_;
  int min_count_ = 1;
};

}  // namespace qamatch
