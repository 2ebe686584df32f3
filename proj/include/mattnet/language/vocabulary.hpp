#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace mattnet::lang {

/// Token <-> id map. Ids 0 and 1 are reserved for padding and unknown words.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();

  /// Returns the existing id when the token is already present.
  int add(const std::string& token);
  /// Unknown tokens map to kUnknown.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  /// JSON array of tokens; index is the id.
  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Lower-cased whitespace tokenization.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace mattnet::lang
