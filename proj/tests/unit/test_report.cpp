#include <fstream>

#include "doctest.h"
#include "reflect/random.hpp"
#include "reflect/report/report.hpp"
#include "reflect/tasks/countdown.hpp"
#include "reflect/verifiers/countdown.hpp"
#include "support/temp_dir.hpp"

using namespace reflect;
using namespace reflect::report;
using reflect::episode::ScriptedGenerator;
using reflect::llm::Role;
using reflect::llm::Transcript;
using reflect::verifiers::Category;

namespace {

const episode::Verifier kCountdown(tasks::TaskKind::Countdown);

std::vector<tasks::Task> instances(std::size_t n, std::uint64_t seed) {
  std::vector<tasks::Task> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(tasks::generate_countdown(mix_seed(seed, i), {}));
  return out;
}

// Recovers the instance from the first user message.
tasks::Problem problem_of(const Transcript& t) {
  const auto& text = t.at(1).content;
  tasks::Problem p;
  const auto open = text.find('['), close = text.find(']');
  std::string nums = text.substr(open + 1, close - open - 1);
  for (std::size_t pos = 0; pos < nums.size();) {
    const auto comma = nums.find(',', pos);
    p.numbers.push_back(std::stoll(nums.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 2;
  }
  const auto eq = text.find("equals ");
  p.target = std::stoll(text.substr(eq + 7));
  return p;
}

std::string solution(const Transcript& t) {
  const auto p = problem_of(t);
  return "\\boxed{" + verifiers::render(*tasks::solve_countdown(p.numbers, p.target)) + "}";
}

std::size_t assistant_turns(const Transcript& t) {
  std::size_t n = 0;
  for (const auto& m : t) n += m.role == Role::Assistant;
  return n;
}

// First attempts cycle through the three countdown failure kinds; the
// retry is right on odd seeds.
ScriptedGenerator mixed() {
  return ScriptedGenerator([](const Transcript& t, std::uint64_t seed) -> std::string {
    const auto p = problem_of(t);
    switch (assistant_turns(t)) {
      case 0:
        switch (seed % 4) {
          case 0: return "\\boxed{1+}";
          case 1: return "\\boxed{" + std::to_string(p.target) + "}";
          case 2: return "\\boxed{" + std::to_string(p.numbers[0]) + "*" + std::to_string(p.numbers[1]) + "*" +
                         std::to_string(p.numbers[2]) + "+1000}";
          default: return solution(t);
        }
      case 1: return "think again";
      default: return seed % 2 ? solution(t) : std::string("no idea");
    }
  });
}

}  // namespace

TEST_CASE("perfect generator scores 100% on both tries with an empty breakdown") {
  const ScriptedGenerator gen([](const Transcript& t, std::uint64_t) { return solution(t); });
  const auto r = evaluate(gen, instances(40, 1), kCountdown, {});
  CHECK(r.row.first == Cell{40, 40});
  CHECK(r.row.second == Cell{40, 40});
  CHECK(r.breakdown.total() == 0);
  CHECK(r.episodes.size() == 40);
}

TEST_CASE("always-wrong generator scores zero and every failure is categorised") {
  const ScriptedGenerator gen([](const Transcript&, std::uint64_t) { return std::string("\\boxed{1+}"); });
  const auto r = evaluate(gen, instances(25, 2), kCountdown, {});
  CHECK(r.row.first.correct == 0);
  CHECK(r.row.second.correct == 0);
  CHECK(r.breakdown.total() == 25);
  CHECK(r.breakdown.counts[0] == std::pair{Category::InvalidEquation, std::size_t{25}});
}

TEST_CASE("wrong then right scores 0% first and 100% second") {
  const ScriptedGenerator gen([](const Transcript& t, std::uint64_t) {
    return assistant_turns(t) == 0 ? std::string("wrong") : solution(t);
  });
  const auto r = evaluate(gen, instances(30, 3), kCountdown, {});
  CHECK(r.row.first == Cell{0, 30});
  CHECK(r.row.second == Cell{30, 30});
  CHECK(r.breakdown.counts[0].first == Category::InvalidEquation);
}

TEST_CASE("breakdown conserves failures and second try dominates first") {
  for (const std::size_t workers : {std::size_t{1}, std::size_t{3}}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      EvalConfig cfg;
      cfg.seed = seed;
      cfg.workers = workers;
      const auto r = evaluate(mixed(), instances(60, seed), kCountdown, cfg);
      CHECK(r.breakdown.total() == r.row.first.total - r.row.first.correct);
      CHECK(r.row.second.correct >= r.row.first.correct);
      CHECK(r.row.first.total == 60);
      for (const auto& [c, n] : r.breakdown.counts) CHECK(c != Category::Success);
    }
  }
}

TEST_CASE("generator errors count as wrong and keep the accounting exact") {
  const ScriptedGenerator gen([](const Transcript& t, std::uint64_t seed) -> std::string {
    if (seed % 3 == 0) throw std::runtime_error("backend down");
    return solution(t);
  });
  const auto r = evaluate(gen, instances(30, 4), kCountdown, {});
  CHECK(r.errors.size() + r.episodes.size() == 30);
  CHECK(r.breakdown.total() == r.errors.size());
  CHECK(r.row.first.correct == r.episodes.size());
}

TEST_CASE("evaluation is deterministic and independent of worker count") {
  EvalConfig a, b;
  b.workers = 4;
  const auto set = instances(50, 5);
  const auto ra = evaluate(mixed(), set, kCountdown, a);
  const auto rb = evaluate(mixed(), set, kCountdown, b);
  CHECK(ra.row == rb.row);
  CHECK(ra.breakdown == rb.breakdown);
}

TEST_CASE("taxonomy column order") {
  CHECK(taxonomy(tasks::TaskKind::Countdown) ==
        std::vector{Category::InvalidEquation, Category::WrongNumbers, Category::MissedTarget});
  CHECK(taxonomy(tasks::TaskKind::ToolCalling) ==
        std::vector{Category::ToolChoiceError, Category::ParameterError, Category::FormatError});
}

TEST_CASE("markdown report has exactly the two accuracy columns") {
  AccuracyGrid grid{{{"base", {3, 10}, {5, 10}}, {"trained", {4, 10}, {9, 10}}}};
  auto b = empty_breakdown("base", tasks::TaskKind::Countdown);
  b.counts[1].second = 7;
  const auto md = render_report(grid, {b}, Format::Markdown, {{"seed", "7"}});
  CHECK(md.rfind("| Model | 1st Try | 2nd Try |\n|---|---|---|\n", 0) == 0);
  CHECK(md.find("| base | 30.0% (3/10) | 50.0% (5/10) |") != std::string::npos);
  CHECK(md.find("| trained | 40.0% (4/10) | 90.0% (9/10) |") != std::string::npos);
  CHECK(md.find("| Invalid Equation | Wrong Numbers | Missed Target | Total |") != std::string::npos);
  CHECK(md.find("| count | 0 | 7 | 0 | 7 |") != std::string::npos);
  CHECK(md.find("- seed: 7") != std::string::npos);
}

TEST_CASE("csv report round trips") {
  AccuracyGrid grid{{{"a, \"quoted\" name", {1, 3}, {2, 3}}, {"b", {0, 0}, {0, 0}}}};
  auto tool = empty_breakdown("b", tasks::TaskKind::ToolCalling);
  tool.counts[2].second = 11;
  const std::vector breakdowns{empty_breakdown("a, \"quoted\" name", tasks::TaskKind::Countdown), tool};
  const auto csv = render_report(grid, breakdowns, Format::Csv, {{"k", "v,w"}});
  const auto back = parse_csv_report(csv);
  REQUIRE(back.grid.rows.size() == 2);
  CHECK(back.grid.rows[0] == grid.rows[0]);
  CHECK(back.grid.rows[1] == grid.rows[1]);
  CHECK(back.breakdowns == breakdowns);
  CHECK_THROWS_AS(parse_csv_report("header\nnonsense,1\n"), FormatError);
  CHECK_THROWS_AS(parse_csv_report("header\ngrid,x,a,1,0,1,1,0\n"), FormatError);
}

TEST_CASE("eval summary round trips through a file") {
  const TempDir dir;
  const auto r = evaluate(mixed(), instances(20, 6), kCountdown, {});
  const Provenance prov{{"generator", "scripted"}, {"seed", "0"}};
  save_eval(dir / "s.json", r, prov);
  const auto s = load_eval(dir / "s.json");
  CHECK(s.row == r.row);
  CHECK(s.breakdown == r.breakdown);
  CHECK(s.provenance == prov);
  std::ofstream(dir / "bad.json") << "{\"schema_version\": 1";
  CHECK_THROWS_AS(load_eval(dir / "bad.json"), Error);
}
