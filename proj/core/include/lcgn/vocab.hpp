#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace lcgn {

// Token table with fixed PAD=0 and UNK=1 slots. The on-disk format is one
// token per line, line number = index, first two lines PAD and UNK.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;

  Vocabulary();

  // Appends a token if absent; returns its index either way.
  std::int64_t add(const std::string& token);

  std::int64_t lookup(const std::string& token) const;  // UNK when absent
  const std::string& token(std::int64_t index) const;
  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::unordered_map<std::string, std::int64_t> index_;
  std::vector<std::string> tokens_;
};

// Lowercases, splits on whitespace, and splits punctuation into separate
// tokens. Empty input yields an empty sequence.
std::vector<std::string> tokenize_words(const std::string& text);

std::vector<std::int64_t> tokenize(const std::string& text,
                                   const Vocabulary& vocab);

}  // namespace lcgn
