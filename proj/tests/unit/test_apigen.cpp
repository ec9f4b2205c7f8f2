#include <fstream>

#include "doctest.h"
#include "reflect/error.hpp"
#include "reflect/tasks/apigen.hpp"
#include "reflect/verifiers/toolcall.hpp"
#include "support/golden.hpp"
#include "support/temp_dir.hpp"

using namespace reflect::tasks;

TEST_CASE("load the vimeo sample record") {
  const auto tasks = load_apigen(golden_path("apigen_sample.jsonl"));
  REQUIRE(tasks.size() == 1);
  const auto& t = tasks[0];
  CHECK(t.query == "Check if the Vimeo username 'john_doe_artist' is available.");
  REQUIRE(t.tools.size() == 2);
  CHECK(t.tools[0].name == "vimeo");
  CHECK(t.tools[1].name == "get_user_pins");
  REQUIRE(t.tools[0].parameters.size() == 1);
  CHECK(t.tools[0].parameters[0].name == "username");
  CHECK(t.tools[0].parameters[0].type == "str");
  CHECK(t.tools[1].parameters[0].default_value == "0869178429hau");
  REQUIRE(t.expected.size() == 1);
  CHECK(t.expected[0].name == "vimeo");
  CHECK(t.expected[0].arguments["username"] == "john_doe_artist");
}

TEST_CASE("empty file and blank lines") {
  TempDir dir;
  std::ofstream(dir / "empty.jsonl").close();
  CHECK(load_apigen(dir / "empty.jsonl").empty());
  std::ofstream(dir / "blank.jsonl") << "\n  \n";
  CHECK(load_apigen(dir / "blank.jsonl").empty());
}

TEST_CASE("malformed records report their line") {
  TempDir dir;
  const std::string good = read_golden("apigen_sample.jsonl");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << good << R"({"query": "q", "answers": []})" << "\n";
  }
  try {
    load_apigen(dir / "bad.jsonl");
    FAIL("expected RecordError");
  } catch (const reflect::RecordError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("tools") != std::string::npos);
  }
  {
    std::ofstream out(dir / "unknown.jsonl");
    out << R"({"query": "q", "tools": [{"name": "a"}], "answers": [{"name": "b", "arguments": {}}]})" << "\n";
  }
  CHECK_THROWS_AS(load_apigen(dir / "unknown.jsonl"), reflect::RecordError);
  {
    std::ofstream out(dir / "junk.jsonl");
    out << "{not json\n";
  }
  CHECK_THROWS_AS(load_apigen(dir / "junk.jsonl"), reflect::RecordError);
  CHECK_THROWS_AS(load_apigen(dir / "missing.jsonl"), reflect::FileError);
}

TEST_CASE("string-encoded tools and answers as distributed upstream") {
  TempDir dir;
  {
    std::ofstream out(dir / "str.jsonl");
    out << R"({"query": "q", "tools": "[{\"name\": \"a\", \"parameters\": {}}]", "answers": "[{\"name\": \"a\", \"arguments\": {\"k\": 1}}]"})" << "\n";
  }
  const auto tasks = load_apigen(dir / "str.jsonl");
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].expected[0].arguments["k"] == 1);
}

TEST_CASE("too many tools is rejected") {
  nlohmann::ordered_json rec{{"query", "q"}, {"tools", nlohmann::ordered_json::array()},
                             {"answers", {{{"name", "t0"}, {"arguments", nlohmann::ordered_json::object()}}}}};
  for (int i = 0; i < 9; ++i) rec["tools"].push_back({{"name", "t" + std::to_string(i)}});
  CHECK_THROWS_AS(tool_task_from_json(rec), std::invalid_argument);
  rec["tools"].erase(8);
  CHECK(tool_task_from_json(rec).tools.size() == 8);
}
