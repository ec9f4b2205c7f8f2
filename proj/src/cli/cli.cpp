#include "reflect/cli/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "reflect/episode/records.hpp"
#include "reflect/grpo/grpo.hpp"
#include "reflect/grpo/imitation.hpp"
#include "reflect/policy/checkpoint.hpp"
#include "reflect/random.hpp"
#include "reflect/report/experiment.hpp"
#include "reflect/report/report.hpp"
#include "reflect/tasks/apigen.hpp"
#include "reflect/verifiers/countdown.hpp"
#include "reflect/verifiers/toolcall.hpp"

namespace reflect::cli {

namespace {

std::vector<std::int64_t> parse_numbers(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw CLI::ValidationError("--numbers", "expected comma-separated integers, got '" + s + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError("--numbers", "no numbers given");
  return out;
}

struct GeneratorOptions {
  std::string checkpoint;
  std::string endpoint;
  std::string model;
  std::string token_env = "REFLECT_API_KEY";
  double temperature = 0.0;
  std::size_t max_new_tokens = 32;
  std::size_t max_in_flight = 8;

  void add(CLI::App* app, double default_temperature) {
    temperature = default_temperature;
    app->add_option("--checkpoint", checkpoint, "local policy checkpoint");
    app->add_option("--endpoint", endpoint, "chat-completions base URL, e.g. http://host:8000/v1");
    app->add_option("--model", model, "remote model name");
    app->add_option("--token-env", token_env, "environment variable holding the bearer token");
    app->add_option("--temperature", temperature, "sampling temperature (0 = greedy)")->capture_default_str();
    app->add_option("--max-new-tokens", max_new_tokens, "generation budget per turn")->capture_default_str();
    app->add_option("--max-in-flight", max_in_flight, "concurrent remote requests")->capture_default_str();
  }
};

// The loaded checkpoint must outlive the generator.
struct GeneratorHandle {
  std::optional<policy::PolicyParams> params;
  std::unique_ptr<episode::Generator> gen;
};

GeneratorHandle make_generator(const GeneratorOptions& o) {
  if (o.checkpoint.empty() == o.endpoint.empty()) {
    throw CLI::ValidationError("generator", "give exactly one of --checkpoint or --endpoint");
  }
  GeneratorHandle h;
  if (!o.checkpoint.empty()) {
    h.params = policy::load_checkpoint(o.checkpoint);
    policy::SamplingConfig sc;
    sc.temperature = o.temperature;
    sc.max_new_tokens = o.max_new_tokens;
    h.gen = std::make_unique<episode::LocalGenerator>(*h.params, sc, "local:" + std::filesystem::path(o.checkpoint).filename().string());
    return h;
  }
  llm::EndpointConfig ec;
  ec.base_url = o.endpoint;
  ec.model = o.model;
  ec.token_env = o.token_env;
  ec.max_in_flight = o.max_in_flight;
  llm::ChatSampling cs;
  cs.temperature = o.temperature;
  cs.max_tokens = static_cast<int>(o.max_new_tokens);
  h.gen = std::make_unique<episode::RemoteGenerator>(std::make_shared<llm::Client>(ec), cs);
  return h;
}

std::vector<tasks::Task> load_tasks(const std::string& path, const std::string& kind) {
  std::vector<tasks::Task> out;
  if (kind == "countdown") {
    for (auto& p : tasks::read_problems(path)) out.emplace_back(std::move(p));
  } else {
    for (auto& t : tasks::load_apigen(path)) out.emplace_back(std::move(t));
  }
  return out;
}

tasks::TaskKind kind_from(const std::string& kind) {
  return kind == "countdown" ? tasks::TaskKind::Countdown : tasks::TaskKind::ToolCalling;
}

std::string template_for(const std::string& given, const std::string& kind) {
  if (!given.empty()) return given;
  return kind == "countdown" ? "countdown" : "qwen";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FileError("cannot open " + path + " for writing");
  f << text;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reflect, retry, reward: verifiers, a tiny policy and reflection-only GRPO"};
  app.name("reflect");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  const std::vector<std::string> kinds = {"countdown", "toolcall"};
  const std::vector<std::string> templates = {"countdown", "qwen", "llama"};

  // gen-countdown
  auto* gen = app.add_subcommand("gen-countdown", "write random solvable Countdown instances (JSONL)");
  std::size_t gen_count = 100;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string split = "all";
  tasks::CountdownConfig cc;
  gen->add_option("--count", gen_count, "number of instances")->capture_default_str();
  gen->add_option("--seed", seed, "random seed")->capture_default_str();
  gen->add_option("--out", out_path, "output file")->required();
  gen->add_option("--min-count", cc.min_count)->capture_default_str();
  gen->add_option("--max-count", cc.max_count)->capture_default_str();
  gen->add_option("--min-value", cc.min_value)->capture_default_str();
  gen->add_option("--max-value", cc.max_value)->capture_default_str();
  gen->add_option("--min-target", cc.min_target)->capture_default_str();
  gen->add_option("--max-target", cc.max_target)->capture_default_str();
  gen->add_option("--split", split, "keep only the train or held-out (test) partition")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();

  // solve
  auto* solve = app.add_subcommand("solve", "exhaustive solver for one instance");
  std::string numbers;
  std::int64_t target = 0;
  solve->add_option("--numbers", numbers, "comma-separated, e.g. 4,73,4,23")->required();
  solve->add_option("--target", target)->required();

  // verify
  auto* verify = app.add_subcommand("verify", "check one model output");
  std::string text, task_file, kind = "countdown";
  std::size_t index = 0;
  verify->add_option("--numbers", numbers);
  verify->add_option("--target", target);
  verify->add_option("--text", text, "model output")->required();
  verify->add_option("--task-file", task_file, "APIGen JSONL file (tool calls)");
  verify->add_option("--index", index, "record index in --task-file")->capture_default_str();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "imitation pretraining of the tiny policy");
  std::string problems_path;
  policy::ModelConfig mc;
  grpo::ImitationConfig ic;
  pre->add_option("--problems", problems_path, "Countdown JSONL")->required();
  pre->add_option("--out", out_path, "checkpoint to write")->required();
  pre->add_option("--seed", seed)->capture_default_str();
  pre->add_option("--layers", mc.layers)->capture_default_str();
  pre->add_option("--width", mc.width)->capture_default_str();
  pre->add_option("--heads", mc.heads)->capture_default_str();
  pre->add_option("--context", mc.context)->capture_default_str();
  pre->add_option("--steps", ic.steps)->capture_default_str();
  pre->add_option("--batch", ic.batch_size)->capture_default_str();
  pre->add_option("--lr", ic.lr)->capture_default_str();
  pre->add_option("--reflection-fraction", ic.reflection_fraction)->capture_default_str();

  // build-failures
  auto* build = app.add_subcommand("build-failures", "sample k first attempts per task, keep failures");
  GeneratorOptions build_gen;
  build_gen.add(build, 1.0);
  std::string tasks_path, tpl_name;
  std::size_t k = 8, workers = 1;
  build->add_option("--tasks", tasks_path, "task file")->required();
  build->add_option("--kind", kind)->check(CLI::IsMember(kinds))->capture_default_str();
  build->add_option("--template", tpl_name)->check(CLI::IsMember(templates));
  build->add_option("--k", k, "responses per task")->capture_default_str();
  build->add_option("--seed", seed)->capture_default_str();
  build->add_option("--workers", workers)->capture_default_str();
  build->add_option("--out", out_path, "failure records (JSONL)")->required();

  // train
  auto* train = app.add_subcommand("train", "reflection-only GRPO on a failure file");
  std::string ckpt, failures_path, config_path;
  std::optional<std::size_t> steps;
  train->add_option("--checkpoint", ckpt, "initial (and reference) policy")->required();
  train->add_option("--failures", failures_path)->required();
  train->add_option("--config", config_path, "key = value GRPO config");
  train->add_option("--steps", steps, "overrides max_steps");
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--out", out_path, "run directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "first and second try accuracy on a test file");
  GeneratorOptions eval_gen;
  eval_gen.add(eval, 0.0);
  std::string name = "policy", summary_path, episodes_path, format = "markdown";
  eval->add_option("--tests", tasks_path)->required();
  eval->add_option("--kind", kind)->check(CLI::IsMember(kinds))->capture_default_str();
  eval->add_option("--template", tpl_name)->check(CLI::IsMember(templates));
  eval->add_option("--name", name, "row label")->capture_default_str();
  eval->add_option("--seed", seed)->capture_default_str();
  eval->add_option("--workers", workers)->capture_default_str();
  eval->add_option("--out", summary_path, "summary JSON for `report`");
  eval->add_option("--episodes", episodes_path, "episode log (JSONL)");
  eval->add_option("--format", format)->check(CLI::IsMember({"markdown", "csv"}))->capture_default_str();

  // report
  auto* rep = app.add_subcommand("report", "merge eval summaries into accuracy and error tables");
  std::vector<std::string> inputs;
  rep->add_option("inputs", inputs, "summary files from `eval --out`")->required();
  rep->add_option("--format", format)->check(CLI::IsMember({"markdown", "csv"}))->capture_default_str();
  rep->add_option("--out", out_path, "write here instead of stdout");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run the desk-scale learning experiment for one seed");
  exp->add_option("--seed", seed)->capture_default_str();
  std::optional<std::size_t> pre_steps;
  exp->add_option("--pretrain-steps", pre_steps);
  exp->add_option("--steps", steps, "GRPO steps");

  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      std::vector<tasks::Problem> ps;
      std::size_t draw = 0;
      while (ps.size() < gen_count) {
        auto p = tasks::generate_countdown(mix_seed(seed, draw), cc);
        p.seed = mix_seed(seed, draw++);
        const bool held = report::is_held_out(p);
        if (split == "all" || (split == "test") == held) ps.push_back(std::move(p));
        if (draw > 1000 * (gen_count + 10)) throw GenerationExhausted("split too small for the requested count");
      }
      tasks::write_problems(out_path, ps);
      out << "wrote " << ps.size() << " instances to " << out_path << "\n";
    } else if (*solve) {
      const auto ns = parse_numbers(numbers);
      const auto e = tasks::solve_countdown(ns, target);
      out << (e ? verifiers::render(*e) : std::string("no solution")) << "\n";
    } else if (*verify) {
      verifiers::VerifierOutcome o;
      if (!task_file.empty()) {
        const auto ts = tasks::load_apigen(task_file);
        if (index >= ts.size()) throw CLI::ValidationError("--index", "out of range");
        o = verifiers::verify_toolcall(ts[index].expected, text);
      } else {
        if (numbers.empty() || verify->count("--target") == 0) {
          throw CLI::ValidationError("verify", "give --numbers and --target, or --task-file");
        }
        o = verifiers::verify_countdown(parse_numbers(numbers), target, text);
      }
      out << verifiers::to_string(o.category);
      if (!o.detail.empty()) out << ": " << o.detail;
      out << "\n";
    } else if (*pre) {
      ic.seed = seed;
      const auto ps = tasks::read_problems(problems_path);
      auto params = policy::PolicyParams::random(mc, policy::Vocab::mini_countdown(), mix_seed(seed, 2));
      const auto losses = grpo::imitation_pretrain(params, ps, ic);
      policy::save_checkpoint(out_path, params);
      out << "pretrained " << ic.steps << " steps, final loss " << (losses.empty() ? 0.0 : losses.back())
          << ", wrote " << out_path << "\n";
    } else if (*build) {
      auto h = make_generator(build_gen);
      const auto ts = load_tasks(tasks_path, kind);
      episode::BuildConfig bc;
      bc.k = k;
      bc.seed = seed;
      bc.workers = workers;
      bc.prompts = tasks::template_by_name(template_for(tpl_name, kind));
      const auto r = episode::build_failures(*h.gen, ts, episode::Verifier(kind_from(kind)), bc);
      episode::write_failures(out_path, r.records);
      for (const auto& s : r.skipped) err << nlohmann::json{{"skipped", s}}.dump() << "\n";
      out << "wrote " << r.records.size() << " failures from " << ts.size() << " tasks to " << out_path << "\n";
    } else if (*train) {
      auto cfg = config_path.empty() ? grpo::GrpoConfig{} : grpo::load_config(config_path);
      if (train->count("--seed")) cfg.seed = seed;
      if (steps) cfg.max_steps = *steps;
      cfg.validate();
      const auto params = policy::load_checkpoint(ckpt);
      const auto data = episode::read_failures(failures_path);
      std::filesystem::create_directories(out_path);
      write_text((std::filesystem::path(out_path) / "config.txt").string(), grpo::format_config(cfg));
      const auto r = grpo::train(params, data, cfg, out_path);
      out << "trained " << r.steps_done << " steps, final checkpoint "
          << grpo::checkpoint_path(out_path, r.steps_done).string() << "\n";
    } else if (*eval) {
      auto h = make_generator(eval_gen);
      const auto ts = load_tasks(tasks_path, kind);
      report::EvalConfig ec;
      ec.name = name;
      ec.seed = seed;
      ec.workers = workers;
      ec.prompts = tasks::template_by_name(template_for(tpl_name, kind));
      const auto r = report::evaluate(*h.gen, ts, episode::Verifier(kind_from(kind)), ec);
      const report::Provenance prov = {{"generator", h.gen->id()},
                                       {"temperature", fmt(eval_gen.temperature)},
                                       {"seed", std::to_string(seed)},
                                       {"template", ec.prompts.name},
                                       {"instances", std::to_string(ts.size())}};
      if (!summary_path.empty()) report::save_eval(summary_path, r, prov);
      if (!episodes_path.empty()) episode::write_episodes(episodes_path, r.episodes);
      for (const auto& e : r.errors) err << nlohmann::json{{"generator_error", e}}.dump() << "\n";
      out << report::render_report({{r.row}}, {r.breakdown},
                                   format == "csv" ? report::Format::Csv : report::Format::Markdown, prov);
    } else if (*rep) {
      report::AccuracyGrid grid;
      std::vector<report::ErrorBreakdown> breakdowns;
      report::Provenance prov;
      for (const auto& in : inputs) {
        auto s = report::load_eval(in);
        grid.rows.push_back(s.row);
        breakdowns.push_back(s.breakdown);
        for (const auto& [key, v] : s.provenance) prov.emplace_back(s.row.name + "." + key, v);
      }
      const auto doc = report::render_report(
          grid, breakdowns, format == "csv" ? report::Format::Csv : report::Format::Markdown, prov);
      if (out_path.empty()) out << doc;
      else write_text(out_path, doc);
    } else if (*exp) {
      auto cfg = report::default_experiment(seed);
      if (pre_steps) cfg.imitation.steps = *pre_steps;
      if (steps) cfg.grpo.max_steps = *steps;
      const auto r = report::run_experiment(cfg, [&](const std::string& s) { err << s << "\n"; });
      out << report::render_report({{r.baseline, r.trained}}, {}, report::Format::Markdown,
                                   {{"seed", std::to_string(seed)},
                                    {"failures", std::to_string(r.failures)},
                                    {"grpo steps", std::to_string(r.steps)},
                                    {"G", std::to_string(cfg.grpo.group_size)},
                                    {"clip", fmt(cfg.grpo.clip)}});
    }
  } catch (const CLI::ValidationError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", "Error"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace reflect::cli
