#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "culturecraft/harness.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::harness {

std::vector<std::pair<int, int>> pair_pool(int pool_size, std::uint64_t seed) {
  if (pool_size <= 0 || pool_size % 2 != 0) throw ConfigError("pool size must be positive and even");
  std::vector<int> order(static_cast<std::size_t>(pool_size));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < order.size(); i += 2) pairs.emplace_back(order[i], order[i + 1]);
  return pairs;
}

PopulationResult run_population(const PopulationOptions& o) {
  if (o.pool_size <= 0 || o.pool_size % 2 != 0) throw ConfigError("pool size must be positive and even");
  if (o.rounds < 0) throw ConfigError("population rounds must be >= 0");
  if (o.priming < 0) throw ConfigError("priming must be >= 0");
  if (o.priming > 0 && !o.make_expert) throw ConfigError("priming needs an expert");
  if (!o.make_agent) throw ConfigError("population needs an agent factory");

  const auto n = static_cast<std::size_t>(o.pool_size);
  std::vector<std::unique_ptr<agent::Agent>> pool;
  std::vector<world::WorldState> worlds;
  std::vector<int> next_attempt(n, 0);
  PopulationResult result;
  result.succeeded.assign(n, false);

  for (std::size_t i = 0; i < n; ++i) {
    pool.push_back(o.make_agent(static_cast<int>(i)));
    worlds.push_back(world::WorldState::preset(o.world, o.seed + i));
    worlds.back().add_agent(pool.back()->id());
  }

  auto fraction = [&] {
    const auto wins = std::count(result.succeeded.begin(), result.succeeded.end(), true);
    return static_cast<double>(wins) / static_cast<double>(n);
  };

  // Phase 1: priming with the expert (or one solo attempt when unprimed).
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_ptr<agent::Agent> expert = o.priming > 0 ? o.make_expert(static_cast<int>(i)) : nullptr;
    agent::TrialOptions opts;
    opts.trial_index = static_cast<int>(i);
    opts.trial_id = "priming-" + std::to_string(i);
    opts.seed = o.seed + i;
    opts.comm_rounds = o.priming;
    opts.max_attempts = o.priming + 1;
    opts.sink = o.sink;
    auto trial = agent::run_trial(*pool[i], expert.get(), worlds[i], o.task, opts);
    result.succeeded[i] = trial.success;
    result.outage = result.outage || trial.outage;
    next_attempt[i] = static_cast<int>(trial.attempts.size());
    result.priming_trials.push_back(std::move(trial));
  }
  result.curve.push_back(fraction());

  // Phase 2: fixed seeded pairs talk, then every unsolved agent tries again.
  result.pairs = pair_pool(o.pool_size, o.pairing_seed.value_or(o.seed));
  std::vector<comm::ChatTranscript> transcripts;
  for (const auto& [a, b] : result.pairs) transcripts.emplace_back(pool[a]->id(), pool[b]->id());

  for (int r = 0; r < o.rounds && !result.outage; ++r) {
    for (std::size_t p = 0; p < result.pairs.size(); ++p) {
      const auto [a, b] = result.pairs[p];
      if (result.succeeded[a] && result.succeeded[b]) continue;
      auto& initiator = result.succeeded[a] ? *pool[b] : *pool[a];
      auto& responder = result.succeeded[a] ? *pool[a] : *pool[b];
      const auto& w = worlds[static_cast<std::size_t>(&initiator == pool[a].get() ? a : b)];
      comm::run_round(initiator, responder, transcripts[p], o.task, w.tick, o.sink);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (result.succeeded[i]) continue;
      auto attempt = pool[i]->attempt_action(worlds[i], o.task, next_attempt[i]++);
      result.succeeded[i] = attempt.verdict.success;
      if (o.sink) o.sink("attempt", agent::to_record(attempt));
    }
    for (const auto& a : pool) result.outage = result.outage || a->outage();
    result.curve.push_back(fraction());
  }
  return result;
}

PopulationResult run_population(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.priming > 0 && !spec.agents.count("expert")) throw ConfigError("priming requires backends for 'expert'");
  auto embedder = std::make_shared<gateway::LocalHashEmbedder>();
  auto config_for = [&spec](const std::string& id, agent::AgentRole role, const AgentBackends& backends, int index) {
    agent::AgentConfig cfg;
    cfg.agent_id = id;
    cfg.role = role;
    cfg.bindings = make_bindings(backends, index);
    cfg.flags = spec.flags;
    cfg.max_actions = std::max(spec.max_actions, spec.priming + 1);
    cfg.placement = spec.placement;
    cfg.top_k = spec.top_k;
    cfg.belief_budget = spec.belief_budget;
    return cfg;
  };
  PopulationOptions o;
  o.task = world::find_task(spec.task);
  o.pool_size = spec.pool_size;
  o.priming = spec.priming;
  o.rounds = spec.population_rounds;
  o.seed = spec.seed;
  o.world = spec.world;
  // Pairs are fixed per run id.
  o.pairing_seed = spec.seed ^ text::fnv1a(spec.run_id);
  o.make_agent = [&](int i) {
    char id[16];
    std::snprintf(id, sizeof id, "agent-%02d", i);
    return std::make_unique<agent::Agent>(config_for(id, agent::AgentRole::peer, spec.agents.at("novice"), i),
                                          embedder);
  };
  if (spec.priming > 0) {
    o.make_expert = [&](int i) {
      return std::make_unique<agent::Agent>(config_for("expert", agent::AgentRole::expert, spec.agents.at("expert"), i),
                                            embedder);
    };
  }
  return run_population(o);
}

nlohmann::ordered_json to_record(const PopulationResult& r) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& [a, b] : r.pairs) pairs.push_back({a, b});
  nlohmann::ordered_json j;
  j["curve"] = r.curve;
  j["pairs"] = std::move(pairs);
  j["succeeded"] = r.succeeded;
  j["outage"] = r.outage;
  return j;
}

}  // namespace culturecraft::harness
