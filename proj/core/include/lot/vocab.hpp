#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lot/errors.hpp"

namespace lot {

// Whitespace word-level vocabulary with fixed reserved ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab() {
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
  }

  int add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  // UNK for unknown words.
  int lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw ArgumentError("token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace lot
