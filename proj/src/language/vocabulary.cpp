#include "mattnet/language/vocabulary.hpp"

#include <cctype>

#include "mattnet/errors.hpp"

namespace mattnet::lang {

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnknownToken));
}

int Vocabulary::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  if (!doc.is_array() || doc.size() < 2 || doc[0] != kPadToken || doc[1] != kUnknownToken) {
    throw InputError("vocabulary must be a JSON array starting with \"<pad>\", \"<unk>\"");
  }
  Vocabulary v;
  for (std::size_t i = 2; i < doc.size(); ++i) {
    const auto tok = doc[i].get<std::string>();
    if (v.contains(tok)) throw InputError("vocabulary: duplicate token '" + tok + "'");
    v.add(tok);
  }
  return v;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace mattnet::lang
