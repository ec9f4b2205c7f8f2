#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflect/episode/episode.hpp"

namespace reflect::episode {

inline constexpr int kSchemaVersion = 1;

nlohmann::ordered_json task_to_json(const tasks::Task& task);
tasks::Task task_from_json(const nlohmann::ordered_json& j);  // throws std::invalid_argument

nlohmann::ordered_json to_json(const FailureRecord& rec);
nlohmann::ordered_json to_json(const Episode& ep);

// Throws ValidationError(line) when a field is missing, the stored attempt
// verifies as Success, or its category disagrees with the verifier.
FailureRecord failure_from_json(const nlohmann::ordered_json& j, std::size_t line = 0);
Episode episode_from_json(const nlohmann::ordered_json& j, const tasks::PromptTemplate& prompts,
                          std::size_t line = 0);

void write_failures(const std::filesystem::path& path, const std::vector<FailureRecord>& records);
std::vector<FailureRecord> read_failures(const std::filesystem::path& path);

void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes(const std::filesystem::path& path, const tasks::PromptTemplate& prompts);

}  // namespace reflect::episode
