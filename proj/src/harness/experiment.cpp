#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "culturecraft/harness.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::harness {

namespace {

std::shared_ptr<gateway::EmbeddingProvider> make_embedder(const ExperimentSpec& spec) {
  if (spec.embedding == "openai") {
    return std::make_shared<gateway::RemoteEmbedder>(gateway::RemoteConfig::from_environment(), 1536);
  }
  return std::make_shared<gateway::LocalHashEmbedder>();
}

agent::AgentConfig agent_config(const ExperimentSpec& spec, const std::string& id, agent::AgentRole role,
                                const AgentBackends& backends, int trial_index) {
  agent::AgentConfig cfg;
  cfg.agent_id = id;
  cfg.role = role;
  cfg.bindings = make_bindings(backends, trial_index);
  cfg.flags = spec.flags;
  cfg.max_actions = spec.max_actions;
  cfg.placement = spec.placement;
  cfg.top_k = spec.top_k;
  cfg.belief_budget = spec.belief_budget;
  return cfg;
}

const AgentBackends& backends_for(const ExperimentSpec& spec, const std::string& name) {
  auto it = spec.agents.find(name);
  if (it != spec.agents.end()) return it->second;
  return spec.agents.at("novice");
}

std::string trial_dir_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial-%03d", i);
  return buf;
}

// Primes `who` with the expert in a scratch world.
void prime(const ExperimentSpec& spec, agent::Agent& who, int trial_index, std::uint64_t seed,
           const world::TaskSpec& task, const std::shared_ptr<gateway::EmbeddingProvider>& embedder) {
  auto world = world::WorldState::preset(spec.world, seed);
  world.add_agent(who.id());
  agent::Agent expert(agent_config(spec, "expert", agent::AgentRole::expert, spec.agents.at("expert"), trial_index),
                      embedder);
  agent::TrialOptions opts;
  opts.trial_index = trial_index;
  opts.trial_id = "priming-" + std::to_string(trial_index) + "-" + who.id();
  opts.seed = seed;
  opts.comm_rounds = spec.priming;
  opts.max_attempts = spec.priming + 1;
  agent::run_trial(who, &expert, world, task, opts);
}

agent::TrialRecord run_one(const ExperimentSpec& spec, int i, const RunOptions& options) {
  const auto& task = world::find_task(spec.task);
  const auto seed = spec.trial_seed(i);
  auto embedder = make_embedder(spec);
  auto world = world::WorldState::preset(spec.world, seed);

  agent::Agent novice(agent_config(spec, "novice", agent::AgentRole::novice, spec.agents.at("novice"), i), embedder);
  world.add_agent(novice.id());

  std::unique_ptr<agent::Agent> partner_agent;
  comm::Participant* partner = nullptr;
  switch (spec.setting) {
    case Setting::solo:
      break;
    case Setting::instructive_model:
      partner_agent = std::make_unique<agent::Agent>(
          agent_config(spec, "expert", agent::AgentRole::expert, spec.agents.at("expert"), i), embedder);
      break;
    case Setting::instructive_human:
      partner = options.human;
      break;
    case Setting::collaborative_peer:
    case Setting::collaborative_primed:
      partner_agent = std::make_unique<agent::Agent>(
          agent_config(spec, "peer", agent::AgentRole::peer, backends_for(spec, "peer"), i), embedder);
      break;
  }
  if (partner_agent) partner = partner_agent.get();
  if (spec.setting == Setting::collaborative_primed) {
    prime(spec, novice, i, seed, task, embedder);
    prime(spec, *partner_agent, i, seed, task, embedder);
  }

  std::optional<std::filesystem::path> memory_dir;
  if (options.run_dir) {
    memory_dir = *options.run_dir / "memory" / trial_dir_name(i);
    novice.memory().persist_to(*memory_dir / novice.id());
  }

  agent::TrialOptions opts;
  opts.trial_index = i;
  opts.trial_id = trial_dir_name(i);
  opts.seed = seed;
  opts.comm_rounds = spec.comm_rounds;
  opts.sink = options.sink;
  auto record = agent::run_trial(novice, partner, world, task, opts);

  if (options.sink) {
    options.sink("beliefs", {{"agent", novice.id()}, {"beliefs", beliefs::to_record(novice.beliefs())}});
  }
  if (memory_dir) {
    novice.memory().write_snapshot(*memory_dir / novice.id());
    if (partner_agent) partner_agent->memory().write_snapshot(*memory_dir / partner_agent->id());
  }
  return record;
}

}  // namespace

int rounds_before_success(const agent::TrialRecord& trial) {
  int rounds = 0;
  for (const auto& ev : trial.events) {
    if (ev.rfind("round:", 0) == 0) {
      ++rounds;
    } else if (ev.rfind("attempt:", 0) == 0) {
      const int a = std::stoi(ev.substr(8));
      for (const auto& att : trial.attempts) {
        if (att.index == a && att.verdict.success) return rounds;
      }
    }
  }
  return rounds;
}

MetricReport aggregate(const ExperimentSpec& spec, const std::vector<agent::TrialRecord>& trials, bool incomplete) {
  MetricReport r;
  r.run_id = spec.run_id;
  r.setting = spec.setting;
  r.task = spec.task;
  r.trials_requested = spec.trials;
  r.trials_completed = static_cast<int>(trials.size());
  r.incomplete = incomplete;
  r.comm_rounds = spec.comm_rounds;
  r.placement = spec.placement;
  r.success_fraction.assign(static_cast<std::size_t>(spec.comm_rounds) + 1, 0.0);
  long iterations = 0;
  for (const auto& t : trials) {
    iterations += t.prompting_iterations;
    r.rounds_used += static_cast<int>(t.rounds.size());
    for (const auto& round : t.rounds) r.force_closed_rounds += round.force_closed ? 1 : 0;
    if (!t.success) continue;
    ++r.successes;
    const int before = rounds_before_success(t);
    for (int k = before; k <= spec.comm_rounds; ++k) r.success_fraction[static_cast<std::size_t>(k)] += 1.0;
  }
  if (!trials.empty()) {
    for (auto& f : r.success_fraction) f /= static_cast<double>(trials.size());
    r.mean_prompting_iterations = static_cast<double>(iterations) / static_cast<double>(trials.size());
  }
  return r;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  if (spec.setting == Setting::instructive_human && !options.human) {
    throw ConfigError("instructive_human needs a human turn source (use the serve command)");
  }
  int workers = options.workers.value_or(spec.workers);
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (spec.setting == Setting::instructive_human) workers = 1;
  workers = std::min(workers, spec.trials);

  std::vector<std::optional<agent::TrialRecord>> slots(static_cast<std::size_t>(spec.trials));
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  auto work = [&] {
    while (!stop) {
      const int i = next++;
      if (i >= spec.trials) return;
      auto rec = run_one(spec, i, options);
      if (rec.outage) {
        spdlog::error("backend outage during trial {}; stopping the experiment", i);
        stop = true;
      }
      slots[static_cast<std::size_t>(i)] = std::move(rec);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  ExperimentResult result;
  bool incomplete = false;
  for (auto& slot : slots) {
    if (!slot || slot->outage) {
      incomplete = true;
      continue;
    }
    result.trials.push_back(std::move(*slot));
  }
  result.report = aggregate(spec, result.trials, incomplete);
  if (options.run_dir) write_outputs(*options.run_dir, spec, result);
  return result;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_record(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["setting"] = std::string(to_string(r.setting));
  j["task"] = r.task;
  j["trials_requested"] = r.trials_requested;
  j["trials_completed"] = r.trials_completed;
  j["incomplete"] = r.incomplete;
  j["comm_rounds"] = r.comm_rounds;
  j["placement"] = std::string(agent::to_string(r.placement));
  j["successes"] = r.successes;
  j["success_fraction"] = r.success_fraction;
  j["rounds_used"] = r.rounds_used;
  j["force_closed_rounds"] = r.force_closed_rounds;
  j["mean_prompting_iterations"] = r.mean_prompting_iterations;
  return j;
}

std::string render_report(const MetricReport& r) {
  char buf[128];
  std::string out = "run " + r.run_id + " | setting " + std::string(to_string(r.setting)) + " | task " + r.task + "\n";
  out += "trials " + std::to_string(r.trials_completed) + "/" + std::to_string(r.trials_requested) +
         (r.incomplete ? " (INCOMPLETE)" : "") + " | placement " + std::string(agent::to_string(r.placement)) + "\n";
  out += "round  success\n";
  for (std::size_t k = 0; k < r.success_fraction.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%5zu  %6.2f%%\n", k, 100.0 * r.success_fraction[k]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean prompting iterations %.2f | rounds used %d | force-closed %d\n",
                r.mean_prompting_iterations, r.rounds_used, r.force_closed_rounds);
  out += buf;
  return out;
}

std::string render_curve(const std::vector<double>& curve, std::string_view label) {
  std::string out = "round\t" + std::string(label) + "\n";
  char buf[64];
  for (std::size_t k = 0; k < curve.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", k, curve[k]);
    out += buf;
  }
  return out;
}

void write_outputs(const std::filesystem::path& dir, const ExperimentSpec&, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "trials.jsonl", std::ios::trunc);
    for (const auto& t : result.trials) out << agent::to_record(t).dump() << '\n';
  }
  std::ofstream(dir / "report.json", std::ios::trunc) << to_record(result.report).dump(2) << '\n';
  std::ofstream(dir / "report.txt", std::ios::trunc) << render_report(result.report);
  std::ofstream(dir / "curve.tsv", std::ios::trunc) << render_curve(result.report.success_fraction);
}

std::vector<nlohmann::json> load_trial_records(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "trials.jsonl";
  std::ifstream in(path);
  if (!in) throw ConfigError("no trials.jsonl in " + run_dir.string());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

std::string render_replay(const nlohmann::json& trial, bool prompts) {
  std::string out = "== " + trial.at("trial_id").get<std::string>() + " | task " + trial.at("task").get<std::string>() +
                    " | " + trial.at("outcome").get<std::string>() + " | prompting iterations " +
                    std::to_string(trial.at("prompting_iterations").get<int>()) + "\n";
  const auto& attempts = trial.at("attempts");
  const auto& rounds = trial.at("rounds");
  int next_round = 0;
  for (const auto& ev : trial.at("events")) {
    const auto tag = ev.get<std::string>();
    if (tag.rfind("attempt:", 0) == 0) {
      const int idx = std::stoi(tag.substr(8));
      for (const auto& a : attempts) {
        if (a.at("index").get<int>() != idx) continue;
        out += "\n-- attempt " + std::to_string(idx) + "\n";
        if (prompts) out += "[prompt]\n" + a.at("context").get<std::string>() + "\n";
        out += "[script]\n" + a.at("script").get<std::string>() + "\n";
        out += "[feedback] " + a.at("verdict").at("message").get<std::string>() + "\n";
      }
    } else if (tag.rfind("round:", 0) == 0 && next_round < static_cast<int>(rounds.size())) {
      const auto& r = rounds[static_cast<std::size_t>(next_round++)];
      out += "\n-- round " + std::to_string(r.at("round").get<int>()) + "\n";
      for (const auto& m : r.at("messages")) {
        out += m.at("sender").get<std::string>() + ": " + m.at("content").get<std::string>() + "\n";
      }
    }
  }
  return out;
}

}  // namespace culturecraft::harness
