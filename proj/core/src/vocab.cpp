#include "lcgn/vocab.hpp"

#include <cctype>
#include <fstream>

#include "lcgn/errors.hpp"

namespace lcgn {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

std::int64_t Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto idx = static_cast<std::int64_t>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, idx);
  return idx;
}

std::int64_t Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int64_t index) const {
  if (index < 0 || index >= size())
    throw ContractError("vocab index " + std::to_string(index) +
                        " out of range");
  return tokens_[static_cast<std::size_t>(index)];
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path);
  Vocabulary v;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno >= 2) v.add(line);
    ++lineno;
  }
  if (lineno < 2)
    throw std::runtime_error("vocabulary file " + path +
                             " is missing the PAD/UNK lines");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else if (std::ispunct(ch)) {
      flush();
      out.emplace_back(1, static_cast<char>(ch));
    } else {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return out;
}

std::vector<std::int64_t> tokenize(const std::string& text,
                                   const Vocabulary& vocab) {
  std::vector<std::int64_t> out;
  for (const auto& w : tokenize_words(text)) out.push_back(vocab.lookup(w));
  return out;
}

}  // namespace lcgn
