#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reflect/episode/episode.hpp"

namespace reflect::report {

struct Cell {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct GridRow {
  std::string name;
  Cell first;
  Cell second;  // first-attempt success or retry success

  friend bool operator==(const GridRow&, const GridRow&) = default;
};

struct AccuracyGrid {
  std::vector<GridRow> rows;
};

// First-attempt failure counts in the taxonomy's column order.
struct ErrorBreakdown {
  std::string name;
  tasks::TaskKind kind = tasks::TaskKind::Countdown;
  std::vector<std::pair<verifiers::Category, std::size_t>> counts;

  std::size_t total() const;
  friend bool operator==(const ErrorBreakdown&, const ErrorBreakdown&) = default;
};

// Column order of the breakdown tables for a task kind.
std::vector<verifiers::Category> taxonomy(tasks::TaskKind kind);
ErrorBreakdown empty_breakdown(std::string name, tasks::TaskKind kind);

struct EvalConfig {
  std::string name = "policy";
  tasks::PromptTemplate prompts = tasks::countdown_template();
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct EvalResult {
  GridRow row;
  ErrorBreakdown breakdown;
  std::vector<episode::Episode> episodes;  // instances that ran to completion
  std::vector<std::string> errors;         // generator failures, counted as wrong
};

// One episode per instance; instance i uses seed mix_seed(cfg.seed, i).
// Decoding follows the generator's own settings (greedy for the CLI default).
EvalResult evaluate(const episode::Generator& gen, const std::vector<tasks::Task>& test_set,
                    const episode::Verifier& verifier, const EvalConfig& cfg);

enum class Format { Markdown, Csv };

using Provenance = std::vector<std::pair<std::string, std::string>>;

std::string render_report(const AccuracyGrid& grid, const std::vector<ErrorBreakdown>& breakdowns,
                          Format format, const Provenance& provenance = {});

struct ParsedCsv {
  AccuracyGrid grid;
  std::vector<ErrorBreakdown> breakdowns;
};
// Reads back the CSV written by render_report. Throws FormatError.
ParsedCsv parse_csv_report(const std::string& csv);

// Summary file written by `eval` and merged by `report`.
void save_eval(const std::filesystem::path& path, const EvalResult& result, const Provenance& provenance);
struct EvalSummary {
  GridRow row;
  ErrorBreakdown breakdown;
  Provenance provenance;
};
EvalSummary load_eval(const std::filesystem::path& path);

}  // namespace reflect::report
