#include "reflect/report/report.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "reflect/random.hpp"

namespace reflect::report {

using verifiers::Category;

std::size_t ErrorBreakdown::total() const {
  std::size_t n = 0;
  for (const auto& [c, k] : counts) n += k;
  return n;
}

std::vector<Category> taxonomy(tasks::TaskKind kind) {
  if (kind == tasks::TaskKind::Countdown) {
    return {Category::InvalidEquation, Category::WrongNumbers, Category::MissedTarget};
  }
  return {Category::ToolChoiceError, Category::ParameterError, Category::FormatError};
}

ErrorBreakdown empty_breakdown(std::string name, tasks::TaskKind kind) {
  ErrorBreakdown b{std::move(name), kind, {}};
  for (const auto c : taxonomy(kind)) b.counts.emplace_back(c, 0);
  return b;
}

namespace {

void bump(ErrorBreakdown& b, Category c) {
  for (auto& [cat, n] : b.counts) {
    if (cat == c) {
      ++n;
      return;
    }
  }
  throw std::logic_error("category outside the taxonomy");
}

std::string pct(const Cell& c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f%% (%zu/%zu)", 100.0 * c.accuracy(), c.correct, c.total);
  return buf;
}

std::string label(Category c) {
  switch (c) {
    case Category::InvalidEquation: return "Invalid Equation";
    case Category::WrongNumbers: return "Wrong Numbers";
    case Category::MissedTarget: return "Missed Target";
    case Category::ToolChoiceError: return "Tool Choice";
    case Category::ParameterError: return "Parameter Error";
    case Category::FormatError: return "Format Error";
    case Category::Success: return "Success";
  }
  return "?";
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  return out;
}

}  // namespace

EvalResult evaluate(const episode::Generator& gen, const std::vector<tasks::Task>& test_set,
                    const episode::Verifier& verifier, const EvalConfig& cfg) {
  if (test_set.empty()) throw std::invalid_argument("empty test set");
  const auto kind = verifier.kind();
  struct Slot {
    std::optional<episode::Episode> ep;
    std::string error;
  };
  std::vector<Slot> slots(test_set.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < test_set.size(); i = next++) {
      episode::EpisodeConfig ecfg{cfg.prompts, mix_seed(cfg.seed, i)};
      try {
        slots[i].ep = episode::run_episode(gen, test_set[i], verifier, ecfg);
      } catch (const episode::GeneratorError& e) {
        slots[i].error = "instance " + std::to_string(i) + ": " + e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(cfg.workers, test_set.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }

  EvalResult r;
  r.row.name = cfg.name;
  r.breakdown = empty_breakdown(cfg.name, kind);
  const Category fallback = kind == tasks::TaskKind::Countdown ? Category::InvalidEquation : Category::FormatError;
  for (auto& s : slots) {
    ++r.row.first.total;
    ++r.row.second.total;
    if (!s.ep) {
      bump(r.breakdown, fallback);
      r.errors.push_back(s.error);
      continue;
    }
    const auto& ep = *s.ep;
    if (ep.outcome1.success) {
      ++r.row.first.correct;
      ++r.row.second.correct;
    } else {
      bump(r.breakdown, ep.outcome1.category);
      if (ep.outcome2 && ep.outcome2->success) ++r.row.second.correct;
    }
    r.episodes.push_back(std::move(*s.ep));
  }
  return r;
}

std::string render_report(const AccuracyGrid& grid, const std::vector<ErrorBreakdown>& breakdowns,
                          Format format, const Provenance& provenance) {
  std::ostringstream out;
  if (format == Format::Markdown) {
    out << "| Model | 1st Try | 2nd Try |\n|---|---|---|\n";
    for (const auto& row : grid.rows) out << "| " << row.name << " | " << pct(row.first) << " | " << pct(row.second) << " |\n";
    for (const auto& b : breakdowns) {
      out << "\n| " << b.name << " (" << tasks::to_string(b.kind) << " failures) |";
      for (const auto& [c, n] : b.counts) out << ' ' << label(c) << " |";
      out << " Total |\n|---|";
      for (std::size_t i = 0; i <= b.counts.size(); ++i) out << "---|";
      out << "\n| count |";
      for (const auto& [c, n] : b.counts) out << ' ' << n << " |";
      out << ' ' << b.total() << " |\n";
    }
    if (!provenance.empty()) {
      out << "\n";
      for (const auto& [k, v] : provenance) out << "- " << k << ": " << v << "\n";
    }
    return out.str();
  }
  out << "table,name,first_correct,first_total,first_accuracy,second_correct,second_total,second_accuracy\n";
  for (const auto& row : grid.rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%zu,%zu,%.6f,%zu,%zu,%.6f", row.first.correct, row.first.total,
                  row.first.accuracy(), row.second.correct, row.second.total, row.second.accuracy());
    out << "grid," << csv_cell(row.name) << buf << "\n";
  }
  for (const auto& b : breakdowns) {
    out << "breakdown," << csv_cell(b.name) << ',' << tasks::to_string(b.kind);
    for (const auto& [c, n] : b.counts) out << ',' << verifiers::to_string(c) << '=' << n;
    out << "\n";
  }
  for (const auto& [k, v] : provenance) out << "provenance," << csv_cell(k) << ',' << csv_cell(v) << "\n";
  return out.str();
}

ParsedCsv parse_csv_report(const std::string& csv) {
  ParsedCsv p;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv_split(line);
    try {
      if (f[0] == "grid" && f.size() == 8) {
        GridRow row{f[1], {std::stoul(f[2]), std::stoul(f[3])}, {std::stoul(f[5]), std::stoul(f[6])}};
        p.grid.rows.push_back(row);
      } else if (f[0] == "breakdown" && f.size() >= 3) {
        ErrorBreakdown b{f[1], f[2] == "countdown" ? tasks::TaskKind::Countdown : tasks::TaskKind::ToolCalling, {}};
        for (std::size_t i = 3; i < f.size(); ++i) {
          const auto eq = f[i].find('=');
          const auto c = verifiers::category_from_string(f[i].substr(0, eq));
          if (eq == std::string::npos || !c) throw FormatError("bad breakdown cell '" + f[i] + "'");
          b.counts.emplace_back(*c, std::stoul(f[i].substr(eq + 1)));
        }
        p.breakdowns.push_back(std::move(b));
      } else if (f[0] != "provenance") {
        throw FormatError("unexpected CSV row '" + line + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError("bad number in CSV row '" + line + "'");
    }
  }
  return p;
}

void save_eval(const std::filesystem::path& path, const EvalResult& r, const Provenance& provenance) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["name"] = r.row.name;
  j["kind"] = std::string(tasks::to_string(r.breakdown.kind));
  j["first"] = {r.row.first.correct, r.row.first.total};
  j["second"] = {r.row.second.correct, r.row.second.total};
  nlohmann::ordered_json b = nlohmann::ordered_json::object();
  for (const auto& [c, n] : r.breakdown.counts) b[std::string(verifiers::to_string(c))] = n;
  j["breakdown"] = b;
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  for (const auto& [k, v] : provenance) prov[k] = v;
  j["provenance"] = prov;
  j["errors"] = r.errors;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

EvalSummary load_eval(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    EvalSummary s;
    s.row.name = j.at("name").get<std::string>();
    const auto f = j.at("first").get<std::vector<std::size_t>>();
    const auto t = j.at("second").get<std::vector<std::size_t>>();
    if (f.size() != 2 || t.size() != 2) throw FormatError("accuracy cells need [correct, total]");
    s.row.first = {f[0], f[1]};
    s.row.second = {t[0], t[1]};
    const auto kind = j.at("kind").get<std::string>();
    s.breakdown = empty_breakdown(s.row.name, kind == "countdown" ? tasks::TaskKind::Countdown
                                                                   : tasks::TaskKind::ToolCalling);
    for (auto& [c, n] : s.breakdown.counts) n = j.at("breakdown").at(std::string(verifiers::to_string(c))).get<std::size_t>();
    for (const auto& [k, v] : j.at("provenance").items()) s.provenance.emplace_back(k, v.get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace reflect::report
