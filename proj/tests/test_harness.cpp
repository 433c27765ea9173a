#include <doctest.h>

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "culturecraft/harness.hpp"
#include "culturecraft/text.hpp"

using namespace culturecraft;
using namespace culturecraft::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kDig = "```\nmine dirt\n```";
const std::string kExplore = "```\nexplore\n```";
const std::string kTip = "How to mine 1 dirt? dig it up with bare hands";

std::vector<int> range(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

// Novice whose actor succeeds outright on the listed trials.
json solo_spec(int trials, const std::vector<int>& winners) {
  return {{"run_id", "solo-test"},
          {"setting", "solo"},
          {"task", "mine_dirt"},
          {"trials", trials},
          {"max_actions", 1},
          {"backends",
           {{"novice",
             {{"default", {{"default", "OK"}}},
              {"actor", {{"default", kExplore}, {"rules", json::array({{{"respond", kDig}, {"trials", winners}}})}}}}}}}};
}

// Novice that only succeeds once the tip reached its context. Interaction
// beliefs carry the tip on the listed trials.
json learner_backends(const std::vector<int>& tipped) {
  return {{"default", {{"default", "OK"}}},
          {"conversationalist",
           {{"default", "OK"},
            {"rules", json::array({{{"match", {"Conversation:", "Previous beliefs:"}}, {"respond", kTip}, {"trials", tipped}}})}}},
          {"actor", {{"default", kExplore}, {"rules", json::array({{{"match", "dig it up"}, {"respond", kDig}}})}}}};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("culturecraft_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("spec validation rejects impossible configurations") {
  auto base = solo_spec(2, {0});
  CHECK_NOTHROW(spec_from_json(base));

  auto bad = base;
  bad["trials"] = 0;
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  bad = base;
  bad["comm_rounds"] = 2;
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  bad = base;
  bad["setting"] = "instructive_model";
  CHECK_THROWS_WITH_AS(spec_from_json(bad), "setting instructive_model requires backends for agent 'expert'", ConfigError);
  bad = base;
  bad["setting"] = "collaborative_primed";
  bad["priming"] = 0;
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  bad = base;
  bad["task"] = "mine_diamond";
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  bad = base;
  bad["flags"] = {{"telepathy", true}};
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  bad = base;
  bad.erase("backends");
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  bad = base;
  bad["backends"]["novice"]["actor"]["rules"] = json::array({{{"match", "x"}}});
  CHECK_THROWS_AS(spec_from_json(bad), ConfigError);
  CHECK_THROWS_AS(load_spec("/nonexistent/spec.json"), ConfigError);
  CHECK_THROWS_AS(setting_from_string("lonely"), ConfigError);
}

TEST_CASE("trial seeds come from the list first, then seed + index") {
  auto j = solo_spec(4, {});
  j["seed"] = 100;
  j["seeds"] = {7, 9};
  auto s = spec_from_json(j);
  CHECK(s.trial_seed(0) == 7);
  CHECK(s.trial_seed(1) == 9);
  CHECK(s.trial_seed(2) == 102);
}

TEST_CASE("a solo run with 9 of 24 scripted wins reports 0.375") {
  auto spec = spec_from_json(solo_spec(24, {0, 2, 4, 6, 8, 10, 12, 14, 16}));
  auto result = run_experiment(spec);
  REQUIRE(result.report.success_fraction.size() == 1);
  CHECK(result.report.success_fraction[0] == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(result.report.successes == 9);
  CHECK(result.report.trials_completed == 24);
  CHECK_FALSE(result.report.incomplete);
  CHECK(result.report.mean_prompting_iterations == doctest::Approx(1.0));
  for (const auto& t : result.trials) CHECK(t.success == (t.trial_index % 2 == 0 && t.trial_index <= 16));
}

TEST_CASE("instructive runs credit success to the round that enabled it") {
  json j = {{"run_id", "instr"},
            {"setting", "instructive_model"},
            {"task", "mine_dirt"},
            {"trials", 8},
            {"comm_rounds", 1},
            {"backends", {{"novice", learner_backends({0, 1, 2, 3, 4, 5})}, {"expert", {{"default", {{"default", "OK"}}}}}}}};
  auto result = run_experiment(spec_from_json(j));
  REQUIRE(result.report.success_fraction.size() == 2);
  CHECK(result.report.success_fraction[0] == doctest::Approx(0.0));
  CHECK(result.report.success_fraction[1] == doctest::Approx(0.75));
  CHECK(result.report.rounds_used == 8);
  for (const auto& t : result.trials) {
    if (t.success) CHECK(rounds_before_success(t) == 1);
    CHECK(t.events.at(1) == "round:0");
  }
}

TEST_CASE("the success curve counts trials that won within k rounds") {
  ExperimentSpec spec;
  spec.comm_rounds = 3;
  spec.trials = 4;
  auto trial = [](std::vector<std::string> events, int winning_attempt) {
    agent::TrialRecord t;
    t.events = std::move(events);
    for (const auto& e : t.events) {
      if (e.rfind("attempt:", 0) != 0) continue;
      agent::AttemptRecord a;
      a.index = std::stoi(e.substr(8));
      a.verdict.success = a.index == winning_attempt;
      t.attempts.push_back(a);
    }
    t.success = winning_attempt >= 0;
    return t;
  };
  std::vector<agent::TrialRecord> trials{
      trial({"attempt:0"}, 0),
      trial({"attempt:0", "round:0", "attempt:1", "round:1", "attempt:2"}, 2),
      trial({"attempt:0", "round:0", "attempt:1"}, 1),
      trial({"attempt:0", "round:0", "attempt:1", "round:1", "attempt:2", "round:2", "attempt:3"}, -1),
  };
  auto r = aggregate(spec, trials, false);
  CHECK(r.success_fraction == std::vector<double>{0.25, 0.5, 0.75, 0.75});
  CHECK(render_curve(r.success_fraction) == "round\tfraction\n0\t0.250000\n1\t0.500000\n2\t0.750000\n3\t0.750000\n");
}

TEST_CASE("outputs round-trip and the report can be recomputed from trial records") {
  auto dir = scratch("outputs");
  json j = {{"run_id", "rt"},
            {"setting", "instructive_model"},
            {"task", "mine_dirt"},
            {"trials", 5},
            {"comm_rounds", 2},
            {"backends", {{"novice", learner_backends({1, 3})}, {"expert", {{"default", {{"default", "OK"}}}}}}}};
  auto spec = spec_from_json(j);
  RunOptions opts;
  opts.run_dir = dir;
  auto result = run_experiment(spec, opts);
  for (const char* f : {"trials.jsonl", "report.json", "report.txt", "curve.tsv"}) CHECK(fs::exists(dir / f));
  CHECK(fs::exists(dir / "memory" / "trial-000" / "novice" / "snapshot.jsonl"));

  // Independent recount straight from the JSON lines.
  auto records = load_trial_records(dir);
  REQUIRE(records.size() == 5);
  std::vector<double> curve(3, 0.0);
  for (const auto& t : records) {
    if (t["outcome"] != "success") continue;
    int rounds = 0;
    for (const auto& ev : t["events"]) {
      const auto tag = ev.get<std::string>();
      if (tag.rfind("round:", 0) == 0) ++rounds;
      if (tag.rfind("attempt:", 0) == 0) {
        const int idx = std::stoi(tag.substr(8));
        bool won = false;
        for (const auto& a : t["attempts"]) won = won || (a["index"] == idx && a["verdict"]["success"] == true);
        if (won) break;
      }
    }
    for (int k = rounds; k < 3; ++k) curve[static_cast<std::size_t>(k)] += 0.2;
  }
  auto report = json::parse(slurp(dir / "report.json"));
  for (std::size_t k = 0; k < 3; ++k) CHECK(report["success_fraction"][k].get<double>() == doctest::Approx(curve[k]));
  CHECK(curve[1] == doctest::Approx(0.4));
  CHECK(slurp(dir / "report.txt").find("trials 5/5 | placement interleaved") != std::string::npos);

  const auto replay = render_replay(records[1], false);
  CHECK(replay.find("== trial-001 | task Mine 1 dirt | success") == 0);
  CHECK(replay.find("-- attempt 0\n[script]\nexplore\n") != std::string::npos);
  CHECK(replay.find("-- round 0\nnovice: Hey, can you help me with Mine 1 dirt?") != std::string::npos);
  CHECK(replay.find("[prompt]") == std::string::npos);
  CHECK(render_replay(records[1], true).find("[prompt]\nTask: Mine 1 dirt\n") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("serial and parallel runs write byte-identical results") {
  auto j = solo_spec(12, {1, 5, 7});
  j["max_actions"] = 3;
  auto spec = spec_from_json(j);
  auto a = scratch("serial");
  auto b = scratch("parallel");
  RunOptions serial;
  serial.run_dir = a;
  serial.workers = 1;
  RunOptions parallel;
  parallel.run_dir = b;
  parallel.workers = 4;
  run_experiment(spec, serial);
  run_experiment(spec, parallel);
  for (const char* f : {"trials.jsonl", "report.json", "curve.tsv"}) CHECK(slurp(a / f) == slurp(b / f));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a backend outage stops the run and marks the report incomplete") {
  auto j = solo_spec(10, {});
  j["backends"]["novice"]["actor"]["rules"] =
      json::array({{{"error", true}, {"transport", true}, {"trials", {4}}}});
  auto result = run_experiment(spec_from_json(j));
  CHECK(result.report.incomplete);
  CHECK(result.report.trials_completed == 4);
  CHECK(render_report(result.report).find("(INCOMPLETE)") != std::string::npos);
}

TEST_CASE("pool pairing is a seeded permutation") {
  auto p = pair_pool(8, 42);
  CHECK(p == pair_pool(8, 42));
  CHECK(p.size() == 4);
  std::vector<int> seen;
  for (auto [a, b] : p) {
    seen.push_back(a);
    seen.push_back(b);
  }
  std::sort(seen.begin(), seen.end());
  CHECK(seen == range(8));
  bool differs = false;
  for (std::uint64_t s = 0; s < 10 && !differs; ++s) differs = pair_pool(8, s) != p;
  CHECK(differs);
  CHECK_THROWS_AS(pair_pool(3, 1), ConfigError);
  CHECK_THROWS_AS(pair_pool(0, 1), ConfigError);
}

TEST_CASE("population curves rise when tips spread and stay flat without them") {
  json j = {{"run_id", "pop"},
            {"task", "mine_dirt"},
            {"trials", 1},
            {"pool_size", 6},
            {"priming", 0},
            {"population_rounds", 3},
            {"backends", {{"novice", learner_backends({0, 1, 2})}}}};
  auto spec = spec_from_json(j);
  auto r = run_population(spec);
  CHECK(r.curve == std::vector<double>{0.0, 0.5, 0.5, 0.5});
  CHECK(r.pairs == pair_pool(6, spec.seed ^ text::fnv1a("pop")));
  CHECK(run_population(spec).curve == r.curve);

  j["backends"]["novice"] = learner_backends({});
  auto flat = run_population(spec_from_json(j));
  CHECK(flat.curve == std::vector<double>(4, 0.0));
  CHECK(to_record(flat)["curve"].size() == 4);

  j["priming"] = 1;
  CHECK_THROWS_AS(run_population(spec_from_json(j)), ConfigError);
}

TEST_CASE("tech-tree cells use sample deviation and integer rounding") {
  CHECK(format_milestone_cell({5, 6, 7}, 3) == "6 ± 1 (3/3)");
  CHECK(format_milestone_cell({10, 13}, 3) == "12 ± 2 (2/3)");
  CHECK(format_milestone_cell({113}, 3) == "113 ± 0 (1/3)");
  CHECK(format_milestone_cell({}, 3) == "N/A (0/3)");

  agent::CurriculumRecord a, b;
  a.milestones[world::Milestone::wooden_tool] = 3;
  b.milestones[world::Milestone::wooden_tool] = 5;
  b.milestones[world::Milestone::stone_tool] = 9;
  a.items_seen = {"log", "wooden_plank"};
  b.items_seen = {"log", "stone"};
  auto table = report_tech_tree({a, b});
  CHECK(table.unique_items == 3);
  CHECK(table.unique_items_per_run == std::vector<std::size_t>{2, 2});
  CHECK(table.rows[0].cell == "4 ± 1 (2/2)");
  CHECK(table.rows[1].cell == "9 ± 0 (1/2)");
  CHECK(table.rows[2].cell == "N/A (0/2)");
  CHECK(render_tech_tree(table).find("unique items  3\n") != std::string::npos);
}

TEST_CASE("tech-tree runs through the JSON loader") {
  json actor_rules = json::array();
  auto rule = [&](const std::string& task, const std::string& script) {
    actor_rules.push_back({{"match", "Task: " + world::find_task(task).name + "\nGoal:"}, {"respond", "```\n" + script + "\n```"}});
  };
  rule("mine_wood", "mine log\nmine log\nmine log\nmine log\nmine log\nmine log\nmine log");
  rule("craft_crafting_table", "craft wooden_plank\ncraft wooden_plank\ncraft wooden_plank\ncraft wooden_plank\ncraft crafting_table");
  rule("craft_wooden_pickaxe", "place crafting_table\ncraft stick\ncraft stick\ncraft wooden_pickaxe");
  json j = {{"run_id", "tt"},
            {"curriculum", true},
            {"curriculum_runs", 2},
            {"curriculum_tasks", {"mine_wood", "craft_crafting_table", "craft_wooden_pickaxe"}},
            {"budget", 10},
            {"backends", {{"novice", {{"default", {{"default", "OK"}}}, {"actor", {{"default", kExplore}, {"rules", actor_rules}}}}}}}};
  auto runs = run_tech_tree(spec_from_json(j));
  REQUIRE(runs.size() == 2);
  auto table = report_tech_tree(runs);
  CHECK(table.rows[0].milestone == world::Milestone::wooden_tool);
  CHECK(table.rows[0].cell == "3 ± 0 (2/2)");
  CHECK(table.rows[1].cell == "N/A (0/2)");
  CHECK(runs[0].iterations_used == 3);
}
