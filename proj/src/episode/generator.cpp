#include "reflect/episode/generator.hpp"

#include <regex>

#include "reflect/tasks/prompts.hpp"

namespace reflect::episode {

using llm::Role;

MiniChatCodec::MiniChatCodec(const policy::Vocab& vocab) : vocab_(&vocab) {}

std::vector<TokenId> MiniChatCodec::encode_problem(const std::vector<std::int64_t>& numbers,
                                                   std::int64_t target) const {
  std::string text;
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (i > 0) text += ',';
    text += std::to_string(numbers[i]);
  }
  text += '=' + std::to_string(target);
  return vocab_->encode(text);
}

std::vector<TokenId> MiniChatCodec::encode_prompt(const llm::Transcript& messages) const {
  static const auto tpl = tasks::countdown_template();
  static const std::regex problem(R"(^Using the numbers \[([0-9, ]*)\], create an equation that equals ([0-9]+)\.)");
  const auto& v = *vocab_;
  std::vector<TokenId> out = {v.bos()};
  auto append = [&out](const std::vector<TokenId>& ids) { out.insert(out.end(), ids.begin(), ids.end()); };

  for (const auto& m : messages) {
    switch (m.role) {
      case Role::System:
        if (m.content != tpl.system) throw VocabError("unsupported system message");
        break;
      case Role::Assistant:
        out.push_back(v.assistant());
        append(v.encode(m.content));
        out.push_back(v.eos());
        break;
      case Role::User: {
        if (m.content == tpl.reflection) {
          out.push_back(v.reflect());
          break;
        }
        std::smatch match;
        if (!std::regex_search(m.content, match, problem)) {
          throw VocabError("user message is not a Countdown prompt");
        }
        tasks::Problem p;
        const std::string list = match[1];
        static const std::regex num("[0-9]+");
        for (auto it = std::sregex_iterator(list.begin(), list.end(), num); it != std::sregex_iterator(); ++it) {
          p.numbers.push_back(std::stoll(it->str()));
        }
        p.target = std::stoll(match[2].str());
        // Only messages that are exactly the template wording are accepted.
        const auto expected = tasks::render_messages(tpl, p, tasks::Stage::FirstAttempt, {});
        if (expected.back().content != m.content) throw VocabError("user message deviates from the template");
        out.push_back(v.user());
        append(encode_problem(p.numbers, p.target));
        break;
      }
    }
  }
  out.push_back(v.assistant());
  return out;
}

LocalGenerator::LocalGenerator(const policy::PolicyParams& params, policy::SamplingConfig sampling,
                               std::string id)
    : params_(&params), sampling_(std::move(sampling)), codec_(params.vocab()), id_(std::move(id)) {
  sampling_.stop_at_eos = true;
}

Completion LocalGenerator::complete(const llm::Transcript& messages, std::uint64_t seed) const {
  Completion c;
  c.prompt_tokens = codec_.encode_prompt(messages);
  auto cfg = sampling_;
  cfg.seed = seed;
  c.tokens = policy::sample(*params_, c.prompt_tokens, cfg);
  c.text = params_->vocab().decode(c.tokens);
  return c;
}

RemoteGenerator::RemoteGenerator(std::shared_ptr<const llm::Client> client, llm::ChatSampling sampling)
    : client_(std::move(client)), sampling_(sampling) {}

Completion RemoteGenerator::complete(const llm::Transcript& messages, std::uint64_t seed) const {
  auto s = sampling_;
  s.seed = seed;
  return Completion{client_->chat(messages, s), {}, {}};
}

std::string RemoteGenerator::id() const { return "remote:" + client_->config().model; }

ScriptedGenerator::ScriptedGenerator(Script script, std::string id, double temperature)
    : script_(std::move(script)), id_(std::move(id)), temperature_(temperature) {}

Completion ScriptedGenerator::complete(const llm::Transcript& messages, std::uint64_t seed) const {
  return Completion{script_(messages, seed), {}, {}};
}

}  // namespace reflect::episode
