#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reflect::policy {

using TokenId = int;

// Symbol-level vocabulary. Reserved tokens are written "<name>" and never
// produced by encode(); decode() renders them as empty text.
class Vocab {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUser = "<user>";
  static constexpr std::string_view kAssistant = "<assistant>";
  static constexpr std::string_view kReflect = "<reflect>";

  // Throws VocabError on duplicates or missing reserved tokens.
  explicit Vocab(std::vector<std::string> tokens);

  // Digits, + - * / ( ), "\boxed{" and "}", ',' and '=' plus reserved tokens.
  static Vocab mini_countdown();

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws VocabError

  TokenId pad() const { return pad_; }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  TokenId user() const { return user_; }
  TokenId assistant() const { return assistant_; }
  TokenId reflect() const { return reflect_; }
  bool is_reserved(TokenId id) const;

  // Greedy longest match over non-reserved tokens. Throws VocabError.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t longest_ = 1;
  TokenId pad_, bos_, eos_, user_, assistant_, reflect_;
};

}  // namespace reflect::policy
