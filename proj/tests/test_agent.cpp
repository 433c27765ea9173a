#include <doctest.h>

#include "culturecraft/agent.hpp"
#include "support.hpp"

using namespace culturecraft;
using namespace culturecraft::agent;
using testsupport::fenced;
using testsupport::Oracles;

namespace {

world::WorldState plains(std::uint64_t seed = 1) {
  auto w = world::WorldState::preset("plains", seed);
  w.add_agent("novice");
  return w;
}

// Reference schedule: attempt a, then a round after each failed attempt while
// rounds remain (interleaved placement skips the round after the last attempt).
std::vector<std::string> expected_schedule(int rounds, int attempts, Placement placement) {
  std::vector<std::string> out;
  int used = 0;
  for (int a = 0; a < attempts; ++a) {
    out.push_back("attempt:" + std::to_string(a));
    const bool room = placement == Placement::appended || a + 1 < attempts;
    if (used < rounds && room) out.push_back("round:" + std::to_string(used++));
  }
  return out;
}

}  // namespace

TEST_CASE("script extraction takes the first fenced block") {
  CHECK(extract_script("Sure:\n```\nmine dirt\n```\nthen ```\nexplore\n```") == "mine dirt");
  CHECK(extract_script("```text\nmine dirt\n```") == "mine dirt");
  CHECK(extract_script("  mine dirt  ") == "mine dirt");
  CHECK(extract_script("```\nmine dirt") == "mine dirt");
}

TEST_CASE("skill naming") {
  const auto& t = world::find_task("mine_wood");
  CHECK(skill_name(t, 2) == "mine_1_wood_log_2");
  auto s = world::parse_script("mine log\ncraft wooden_plank");
  CHECK(skill_description(t, *s.script) == "Mine 1 wood log. Steps: mine log; craft wooden_plank");
}

TEST_CASE("config validation") {
  Oracles o;
  auto c = testsupport::config("a", o);
  CHECK_NOTHROW(c.validate());
  c.max_actions = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = testsupport::config("a", o);
  c.bindings.actor = {};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = testsupport::config("a", o);
  c.flags.llm_critic = true;
  c.bindings.critic = {};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = testsupport::config("", o);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(agent_role_from_string("peer") == AgentRole::peer);
  CHECK(placement_from_string("appended") == Placement::appended);
  CHECK_THROWS(placement_from_string("sideways"));
}

TEST_CASE("a successful attempt commits a skill and no episode") {
  Oracles o;
  o.actor->on(gateway::always(), fenced("mine dirt"));
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains();
  const auto& task = world::find_task("mine_dirt");
  a.begin_trial(task, 0);
  auto rec = a.attempt_action(w, task, 0);
  CHECK(rec.verdict.success);
  CHECK(rec.executed);
  CHECK(rec.skill_name == "mine_1_dirt_0");
  CHECK_FALSE(rec.episode_id);
  CHECK(a.memory().skills.size() == 1);
  CHECK(a.memory().episodic.size() == 0);
  CHECK(w.tick == 1);
  CHECK(a.calls().actor == 1);
  const auto prompt = a.prompts(gateway::BackendRole::actor).at(0);
  CHECK(prompt.messages[0].content ==
        "You are novice, an agent in a crafting world. Write an action script that completes the task. Reply with "
        "the script inside a ``` fenced block.");
  CHECK(prompt.temperature == doctest::Approx(0.7));
}

TEST_CASE("parse errors become feedback without a world execution") {
  Oracles o;
  o.actor->on(gateway::always(), gateway::sequence({"```\nfly away\n```", fenced("mine dirt")}));
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains();
  const auto& task = world::find_task("mine_dirt");
  a.begin_trial(task, 0);
  auto bad = a.attempt_action(w, task, 0);
  CHECK_FALSE(bad.executed);
  REQUIRE(bad.parse_error);
  CHECK(*bad.parse_error == "line 1, column 1: unknown verb 'fly' (expected one of: mine, craft, smelt, place, "
                            "wait_until_day, explore)");
  CHECK(w.tick == 0);
  CHECK(bad.episode_id == "ep-000001");
  auto good = a.attempt_action(w, task, 1);
  CHECK(good.verdict.success);
  CHECK(good.context.find("Last feedback:\nTask 'Mine 1 dirt' not completed: Script error: line 1, column 1") !=
        std::string::npos);
  CHECK(good.context.find("Lessons from past failures:\n") != std::string::npos);
  CHECK(good.episodes_in_context == std::vector<std::string>{"ep-000001"});
}

TEST_CASE("an actor backend error is a recorded failure") {
  Oracles o;
  o.actor->fail_on(gateway::always());
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains();
  const auto& task = world::find_task("mine_dirt");
  a.begin_trial(task, 0);
  auto rec = a.attempt_action(w, task, 0);
  CHECK(rec.backend_error);
  CHECK_FALSE(rec.verdict.success);
  CHECK(rec.verdict.message.find("actor backend error") != std::string::npos);
  CHECK_FALSE(a.outage());
}

TEST_CASE("transport failure marks an outage and stops the trial") {
  Oracles o;
  o.actor->fail_on(gateway::always(), true);
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains();
  TrialOptions opts;
  auto rec = run_trial(a, nullptr, w, world::find_task("mine_dirt"), opts);
  CHECK(rec.outage);
  CHECK(rec.attempts.size() == 1);
}

TEST_CASE("context sections appear in a fixed order") {
  Oracles o;
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains();
  const auto& task = world::find_task("mine_wood");
  a.memory().skills.insert({"mine_1_dirt_0", "Mine 1 dirt. Steps: mine dirt", "mine dirt", {}, 0});
  a.memory().episodic.insert({"", "Mine 1 wood log", "", "craft wooden_axe", "station required", {}, {}, false});
  a.begin_trial(task, 0);
  const auto ctx = a.assemble_context(task, world::snapshot_percept(w, "novice"));
  std::vector<std::string> headers = {"Task: Mine 1 wood log\nGoal: hold at least 1 log.", "Beliefs:\n",
                                      "Semantic memory:\nhow to mine 1 wood log? OK",
                                      "Lessons from past failures:\nOK", "Relevant skills:\nmine_1_dirt_0: ",
                                      "Current observation:\nBiome: plains", "Action language:\n"};
  std::size_t pos = 0;
  for (const auto& h : headers) {
    auto at = ctx.find(h, pos);
    CHECK_MESSAGE(at != std::string::npos, h);
    if (at != std::string::npos) pos = at;
  }
}

TEST_CASE("schedule: attempts and rounds for every round count and placement") {
  for (auto placement : {Placement::interleaved, Placement::appended}) {
    for (int rounds = 0; rounds <= 7; ++rounds) {
      for (int max_actions : {1, 4, 8}) {
        Oracles on, oe;
        Agent novice(testsupport::config("novice", on, {}, max_actions, placement), testsupport::embedder());
        Agent expert(testsupport::config("expert", oe), testsupport::embedder());
        auto w = plains();
        w.add_agent("expert");
        TrialOptions opts;
        opts.comm_rounds = rounds;
        auto rec = run_trial(novice, rounds > 0 ? &expert : nullptr, w, world::find_task("craft_iron_pickaxe"), opts);
        CHECK_FALSE(rec.success);
        CHECK(rec.events == expected_schedule(rounds, max_actions, placement));
        CHECK(rec.attempts.size() == static_cast<std::size_t>(max_actions));
        CHECK(rec.prompting_iterations == max_actions);
        for (const auto& r : rec.rounds) CHECK(r.messages.size() == 6);
      }
    }
  }
  // Hand-written spot checks of the reference schedule itself.
  CHECK(expected_schedule(2, 4, Placement::interleaved) ==
        std::vector<std::string>{"attempt:0", "round:0", "attempt:1", "round:1", "attempt:2", "attempt:3"});
  CHECK(expected_schedule(7, 4, Placement::interleaved).size() == 7);
  CHECK(expected_schedule(7, 4, Placement::appended).size() == 8);
}

TEST_CASE("rounds without a partner are a configuration error") {
  Oracles o;
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains();
  TrialOptions opts;
  opts.comm_rounds = 1;
  CHECK_THROWS_AS(run_trial(a, nullptr, w, world::find_task("mine_dirt"), opts), std::invalid_argument);
}

TEST_CASE("a success stops the trial early") {
  Oracles on, oe;
  on.actor->on(gateway::always(), gateway::sequence({fenced("explore"), fenced("mine dirt")}));
  Agent novice(testsupport::config("novice", on), testsupport::embedder());
  Agent expert(testsupport::config("expert", oe), testsupport::embedder());
  auto w = plains();
  TrialOptions opts;
  opts.comm_rounds = 3;
  auto rec = run_trial(novice, &expert, w, world::find_task("mine_dirt"), opts);
  CHECK(rec.success);
  CHECK(rec.events == std::vector<std::string>{"attempt:0", "round:0", "attempt:1"});
  CHECK(rec.rounds.size() == 1);
}

TEST_CASE("flexible communication asks before acting when the decision is ASK") {
  Oracles on, oe;
  on.belief->on(gateway::system_contains("You decide whether to ask a partner"), gateway::sequence({"ASK", "ATTEMPT"}));
  Flags f;
  f.flexible_comm = true;
  Agent novice(testsupport::config("novice", on, f), testsupport::embedder());
  Agent expert(testsupport::config("expert", oe), testsupport::embedder());
  auto w = plains();
  TrialOptions opts;
  opts.comm_rounds = 2;
  auto rec = run_trial(novice, &expert, w, world::find_task("craft_iron_pickaxe"), opts);
  CHECK(rec.flexible);
  CHECK(rec.events ==
        std::vector<std::string>{"round:0", "attempt:0", "attempt:1", "round:1", "attempt:2", "attempt:3"});
  CHECK(rec.attempts[0].decision == comm::Decision::ask);
  CHECK(rec.attempts[1].decision == comm::Decision::attempt);
}

TEST_CASE("interaction answers overwrite the semantic entry with their source") {
  Oracles on, oe;
  on.conv->on(gateway::system_contains("create a set of beliefs that that can help"),
              "- How to mine 1 wood log? Punch a tree with your bare hands.\n- The expert is friendly.");
  Agent novice(testsupport::config("novice", on), testsupport::embedder());
  Agent expert(testsupport::config("expert", oe), testsupport::embedder());
  const auto& task = world::find_task("mine_wood");
  novice.begin_trial(task, 0);
  CHECK(novice.memory().semantic.get(task.canonical_question)->source == memory::Source::self_inference);
  comm::ChatTranscript t("novice", "expert");
  comm::run_round(novice, expert, t, task, 0);
  auto entry = novice.memory().semantic.get(task.canonical_question);
  REQUIRE(entry);
  CHECK(entry->answer == "Punch a tree with your bare hands.");
  CHECK(entry->source == memory::Source::communication);
  CHECK(entry->revision == 2);
  CHECK(novice.beliefs().task.back().answer == "Punch a tree with your bare hands.");
  CHECK(novice.beliefs().partners.at("expert").revision_history.size() == 1);
  // Same answer again: no new revision.
  comm::run_round(novice, expert, t, task, 0);
  CHECK(novice.memory().semantic.get(task.canonical_question)->revision == 2);
}

TEST_CASE("perspective taking happens only when enabled and the partner has spoken") {
  Oracles on, oe;
  Agent expert(testsupport::config("expert", oe), testsupport::embedder());
  Flags off;
  off.perspective_taking = false;
  Agent novice(testsupport::config("novice", on, off), testsupport::embedder());
  comm::ChatTranscript t("novice", "expert");
  comm::run_round(novice, expert, t, world::find_task("mine_dirt"), 0);
  auto count_perspective = [](const Agent& a) {
    int n = 0;
    for (const auto& r : a.prompts(gateway::BackendRole::conversationalist)) {
      n += r.messages.back().content.ends_with("Perspective Analysis: ") ? 1 : 0;
    }
    return n;
  };
  CHECK(count_perspective(novice) == 0);
  // The expert speaks at turns 1, 3, 5; the novice has spoken before each.
  CHECK(count_perspective(expert) == 3);
}

TEST_CASE("curriculum milestones follow the hand-traced schedule") {
  Oracles o;
  testsupport::script_tech_tree(*o.actor);
  const std::uint64_t seed = [] {
    for (std::uint64_t s = 0; s < 1000; ++s) {
      if (testsupport::iron_retries(s) == 0) return s;
    }
    return std::uint64_t{0};
  }();
  REQUIRE(testsupport::iron_retries(seed) == 0);
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains(seed);
  auto rec = run_curriculum(a, w, world::tech_tree_curriculum(), 40);
  CHECK(rec.milestones.at(world::Milestone::wooden_tool) == 3);
  CHECK(rec.milestones.at(world::Milestone::stone_tool) == 5);
  CHECK(rec.milestones.at(world::Milestone::iron_tool) == 10);
  CHECK(rec.iterations_used == 10);
  CHECK(rec.items_seen.count("iron_pickaxe"));
  // Skills persist: the second task's prompt lists the first task's skill.
  const auto prompts = a.prompts(gateway::BackendRole::actor);
  CHECK(prompts.at(1).messages[1].content.find("mine_1_wood_log_0: ") != std::string::npos);

  Agent b(testsupport::config("novice", o), testsupport::embedder());
  auto w2 = plains(seed);
  auto short_run = run_curriculum(b, w2, world::tech_tree_curriculum(), 4);
  CHECK(short_run.milestones.at(world::Milestone::wooden_tool) == 3);
  CHECK_FALSE(short_run.milestones.at(world::Milestone::stone_tool));
  CHECK(short_run.iterations_used == 4);
  CHECK_THROWS_AS(run_curriculum(b, w2, world::tech_tree_curriculum(), 0), std::invalid_argument);
}

TEST_CASE("iron search retries add one iteration each") {
  Oracles o;
  testsupport::script_tech_tree(*o.actor);
  std::uint64_t seed = 0;
  while (testsupport::iron_retries(seed) < 2) ++seed;
  const int k = testsupport::iron_retries(seed);
  Agent a(testsupport::config("novice", o), testsupport::embedder());
  auto w = plains(seed);
  auto rec = run_curriculum(a, w, world::tech_tree_curriculum(), 60);
  CHECK(rec.milestones.at(world::Milestone::iron_tool) == 10 + k);
}

TEST_CASE("records serialize the schedule") {
  Oracles o;
  Agent a(testsupport::config("novice", o, {}, 2), testsupport::embedder());
  auto w = plains();
  TrialOptions opts;
  opts.trial_id = "t-1";
  auto rec = run_trial(a, nullptr, w, world::find_task("mine_dirt"), opts);
  auto j = to_record(rec);
  CHECK(j["trial_id"] == "t-1");
  CHECK(j["outcome"] == "failure");
  CHECK(j["events"].size() == 2);
  CHECK(j["attempts"][0]["episode_id"] == "ep-000001");
  CHECK(j["placement"] == "interleaved");
}
