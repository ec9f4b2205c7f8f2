#include "reflect/policy/vocab.hpp"

#include "reflect/error.hpp"

namespace reflect::policy {

namespace {
bool looks_reserved(const std::string& t) {
  return t.size() > 2 && t.front() == '<' && t.back() == '>';
}
}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw VocabError("empty token");
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw VocabError("duplicate token '" + tokens_[i] + "'");
    }
    if (!looks_reserved(tokens_[i])) longest_ = std::max(longest_, tokens_[i].size());
  }
  pad_ = id(kPad);
  bos_ = id(kBos);
  eos_ = id(kEos);
  user_ = id(kUser);
  assistant_ = id(kAssistant);
  reflect_ = id(kReflect);
}

Vocab Vocab::mini_countdown() {
  std::vector<std::string> t{std::string(kPad),  std::string(kBos),       std::string(kEos),
                             std::string(kUser), std::string(kAssistant), std::string(kReflect)};
  for (char c = '0'; c <= '9'; ++c) t.emplace_back(1, c);
  for (const char* s : {"+", "-", "*", "/", "(", ")", "\\boxed{", "}", ",", "="}) t.emplace_back(s);
  return Vocab(std::move(t));
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view token) const {
  const auto found = find(token);
  if (!found) throw VocabError("token '" + std::string(token) + "' not in vocabulary");
  return *found;
}

bool Vocab::is_reserved(TokenId id) const { return looks_reserved(token(id)); }

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_, text.size() - i); len > 0; --len) {
      const auto it = index_.find(std::string(text.substr(i, len)));
      if (it != index_.end() && !looks_reserved(it->first)) {
        out.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw VocabError("character '" + std::string(1, text[i]) + "' at offset " +
                       std::to_string(i) + " is not in the vocabulary");
    }
  }
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw VocabError("token id " + std::to_string(id) + " out of range");
    }
    if (!is_reserved(id)) out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

}  // namespace reflect::policy
