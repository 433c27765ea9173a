#pragma once

// Shared fixtures: scripted backends wired into agents.

#include <map>
#include <memory>
#include <string>

#include "culturecraft/agent.hpp"
#include "culturecraft/gateway.hpp"

namespace testsupport {

namespace cc = culturecraft;

inline std::string fenced(const std::string& script) { return "```\n" + script + "\n```"; }

/// One scripted oracle per role so tests can count and inspect calls.
struct Oracles {
  std::shared_ptr<cc::gateway::ScriptedOracle> actor = std::make_shared<cc::gateway::ScriptedOracle>(fenced("explore"));
  std::shared_ptr<cc::gateway::ScriptedOracle> belief = std::make_shared<cc::gateway::ScriptedOracle>("OK");
  std::shared_ptr<cc::gateway::ScriptedOracle> conv = std::make_shared<cc::gateway::ScriptedOracle>("Noted.");
  std::shared_ptr<cc::gateway::ScriptedOracle> critic = std::make_shared<cc::gateway::ScriptedOracle>("Looks fine.");

  cc::agent::Bindings bindings() const {
    using cc::gateway::BackendRole;
    cc::agent::Bindings b;
    b.actor = {actor, cc::gateway::default_settings(BackendRole::actor)};
    b.belief_former = {belief, cc::gateway::default_settings(BackendRole::belief_former)};
    b.conversationalist = {conv, cc::gateway::default_settings(BackendRole::conversationalist)};
    b.critic = {critic, cc::gateway::default_settings(BackendRole::critic)};
    return b;
  }
};

inline cc::agent::AgentConfig config(const std::string& id, const Oracles& o, cc::agent::Flags flags = {},
                                     int max_actions = 4,
                                     cc::agent::Placement placement = cc::agent::Placement::interleaved) {
  cc::agent::AgentConfig c;
  c.agent_id = id;
  c.bindings = o.bindings();
  c.flags = flags;
  c.max_actions = max_actions;
  c.placement = placement;
  return c;
}

inline std::shared_ptr<cc::gateway::LocalHashEmbedder> embedder() {
  return std::make_shared<cc::gateway::LocalHashEmbedder>();
}

/// Matches the actor system prompt of any agent.
inline cc::gateway::RequestMatcher actor_prompt(std::string needle) {
  return cc::gateway::contains(std::move(needle));
}

/// Matches the actor context of one task (its first line).
inline cc::gateway::RequestMatcher task_context(const cc::world::TaskSpec& task) {
  return cc::gateway::contains("Task: " + task.name + "\nGoal:");
}

/// A competent actor for the default tech-tree curriculum on plains: each task
/// is solved by one script, except mining iron, which explores until iron
/// shows up (one attempt per explore).
inline void script_tech_tree(cc::gateway::ScriptedOracle& actor) {
  const std::map<std::string, std::string> scripts = {
      {"mine_wood", "mine log\nmine log\nmine log\nmine log\nmine log\nmine log\nmine log"},
      {"craft_crafting_table",
       "craft wooden_plank\ncraft wooden_plank\ncraft wooden_plank\ncraft wooden_plank\ncraft crafting_table"},
      {"craft_wooden_pickaxe", "place crafting_table\ncraft stick\ncraft stick\ncraft wooden_pickaxe"},
      {"mine_stone", "mine stone\nmine stone\nmine stone\nmine stone\nmine stone\nmine stone\nmine stone\nmine stone"},
      {"craft_stone_pickaxe", "craft stone_pickaxe"},
      {"mine_more_stone", "mine stone\nmine stone\nmine stone"},
      {"craft_furnace", "craft furnace"},
      {"mine_iron_ores", "explore\nmine iron_ore\nmine iron_ore\nmine iron_ore"},
      {"smelt_iron", "place furnace\nsmelt iron_ore\nsmelt iron_ore\nsmelt iron_ore"},
      {"craft_iron_pickaxe", "craft iron_pickaxe"},
  };
  for (const auto& task : cc::world::tech_tree_curriculum()) actor.on(task_context(task), fenced(scripts.at(task.key)));
}

/// Ticks spent before the iron task under script_tech_tree: 7 + 5 + 4 + 8 + 1 + 3 + 1.
inline constexpr std::int64_t kTicksBeforeIron = 29;

/// Failed iron attempts before iron is reachable, computed straight from the
/// resource table: attempt k explores at tick 29 + 4k, setting roll = 30 + 4k.
inline int iron_retries(std::uint64_t seed, int limit = 100) {
  for (int k = 0; k < limit; ++k) {
    const std::int64_t roll = kTicksBeforeIron + 4 * k + 1;
    if (cc::world::reachable_resources(seed, "plains", cc::world::is_night(roll), roll).count("iron_ore")) return k;
  }
  return -1;
}

}  // namespace testsupport
