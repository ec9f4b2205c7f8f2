#include "reflect/episode/records.hpp"

#include <fstream>

namespace reflect::episode {

using nlohmann::ordered_json;
using verifiers::Category;

ordered_json task_to_json(const tasks::Task& task) {
  ordered_json j;
  j["kind"] = std::string(tasks::to_string(tasks::kind_of(task)));
  if (const auto* p = std::get_if<tasks::Problem>(&task)) {
    j["numbers"] = p->numbers;
    j["target"] = p->target;
    j["seed"] = p->seed;
  } else {
    j["record"] = tasks::tool_task_to_json(std::get<tasks::ToolTask>(task));
  }
  return j;
}

tasks::Task task_from_json(const ordered_json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "countdown") {
      tasks::Problem p;
      p.numbers = j.at("numbers").get<std::vector<std::int64_t>>();
      p.target = j.at("target").get<std::int64_t>();
      p.seed = j.value("seed", std::uint64_t{0});
      if (p.numbers.empty()) throw std::invalid_argument("empty number list");
      return p;
    }
    if (kind == "toolcall") return tasks::tool_task_from_json(j.at("record"));
    throw std::invalid_argument("unknown task kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad task: ") + e.what());
  }
}

namespace {

ordered_json outcome_json(const VerifierOutcome& o) {
  return {{"success", o.success}, {"category", std::string(verifiers::to_string(o.category))},
          {"detail", o.detail}};
}

VerifierOutcome outcome_from(const ordered_json& j) {
  const auto c = verifiers::category_from_string(j.at("category").get<std::string>());
  if (!c) throw std::invalid_argument("unknown category");
  return {j.at("success").get<bool>(), *c, j.at("detail").get<std::string>()};
}

void check_version(const ordered_json& j) {
  if (!j.is_object() || j.value("schema_version", -1) != kSchemaVersion) {
    throw std::invalid_argument("missing or unsupported schema_version");
  }
}

template <typename T, typename Parse>
std::vector<T> read_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError(n, "not valid JSON (truncated?)");
    out.push_back(parse(j, n));
  }
  return out;
}

template <typename T>
void write_lines(const std::filesystem::path& path, const std::vector<T>& items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  for (const auto& item : items) out << to_json(item).dump() << '\n';
  if (!out) throw FileError("write failed: " + path.string());
}

}  // namespace

ordered_json to_json(const FailureRecord& rec) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["task"] = task_to_json(rec.task);
  j["attempt"] = rec.attempt;
  j["category"] = std::string(verifiers::to_string(rec.category));
  j["seed"] = rec.seed;
  j["temperature"] = rec.temperature;
  j["generator"] = rec.generator;
  return j;
}

FailureRecord failure_from_json(const ordered_json& j, std::size_t line) {
  FailureRecord rec;
  try {
    check_version(j);
    rec.task = task_from_json(j.at("task"));
    rec.attempt = j.at("attempt").get<std::string>();
    const auto c = verifiers::category_from_string(j.at("category").get<std::string>());
    if (!c) throw std::invalid_argument("unknown category");
    rec.category = *c;
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.temperature = j.at("temperature").get<double>();
    rec.generator = j.at("generator").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(line, e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(line, e.what());
  }
  const auto outcome = Verifier(tasks::kind_of(rec.task))(rec.task, rec.attempt);
  if (outcome.success) throw ValidationError(line, "stored attempt verifies as Success");
  if (outcome.category != rec.category) {
    throw ValidationError(line, "stored category " + std::string(verifiers::to_string(rec.category)) +
                                    " but the verifier says " +
                                    std::string(verifiers::to_string(outcome.category)));
  }
  return rec;
}

ordered_json to_json(const Episode& ep) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["task"] = task_to_json(ep.task);
  ordered_json msgs = ordered_json::array();
  for (const auto& m : ep.transcript) {
    msgs.push_back({{"role", std::string(llm::to_string(m.role))}, {"content", m.content}});
  }
  j["transcript"] = std::move(msgs);
  j["attempt1"] = ep.attempt1;
  j["outcome1"] = outcome_json(ep.outcome1);
  if (ep.reflection) j["reflection"] = *ep.reflection;
  if (!ep.sequence.empty()) {
    j["sequence"] = ep.sequence;
    j["reflection_span"] = {ep.reflection_span.begin, ep.reflection_span.end};
  }
  if (ep.attempt2) j["attempt2"] = *ep.attempt2;
  if (ep.outcome2) j["outcome2"] = outcome_json(*ep.outcome2);
  if (ep.reward) j["reward"] = *ep.reward;
  return j;
}

Episode episode_from_json(const ordered_json& j, const tasks::PromptTemplate& prompts, std::size_t line) {
  Episode ep;
  try {
    check_version(j);
    ep.task = task_from_json(j.at("task"));
    for (const auto& m : j.at("transcript")) {
      const auto role = m.at("role").get<std::string>();
      llm::Role r;
      if (role == "system") r = llm::Role::System;
      else if (role == "user") r = llm::Role::User;
      else if (role == "assistant") r = llm::Role::Assistant;
      else throw std::invalid_argument("unknown role '" + role + "'");
      ep.transcript.push_back({r, m.at("content").get<std::string>()});
    }
    ep.attempt1 = j.at("attempt1").get<std::string>();
    ep.outcome1 = outcome_from(j.at("outcome1"));
    if (j.contains("reflection")) ep.reflection = j["reflection"].get<std::string>();
    if (j.contains("sequence")) {
      ep.sequence = j["sequence"].get<std::vector<TokenId>>();
      const auto span = j.at("reflection_span").get<std::vector<std::size_t>>();
      if (span.size() != 2) throw std::invalid_argument("reflection_span needs two indices");
      ep.reflection_span = {span[0], span[1]};
    }
    if (j.contains("attempt2")) ep.attempt2 = j["attempt2"].get<std::string>();
    if (j.contains("outcome2")) ep.outcome2 = outcome_from(j["outcome2"]);
    if (j.contains("reward")) ep.reward = j["reward"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(line, e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(line, e.what());
  }
  std::optional<std::string> why;
  try {
    why = protocol_violation(ep, Verifier(tasks::kind_of(ep.task)), prompts);
  } catch (const Error& e) {
    why = e.what();
  }
  if (why) throw ValidationError(line, *why);
  return ep;
}

void write_failures(const std::filesystem::path& path, const std::vector<FailureRecord>& records) {
  write_lines(path, records);
}

std::vector<FailureRecord> read_failures(const std::filesystem::path& path) {
  return read_lines<FailureRecord>(path, [](const ordered_json& j, std::size_t n) {
    return failure_from_json(j, n);
  });
}

void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  write_lines(path, episodes);
}

std::vector<Episode> read_episodes(const std::filesystem::path& path, const tasks::PromptTemplate& prompts) {
  return read_lines<Episode>(path, [&](const ordered_json& j, std::size_t n) {
    return episode_from_json(j, prompts, n);
  });
}

}  // namespace reflect::episode
