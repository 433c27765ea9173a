#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "culturecraft/agent.hpp"
#include "culturecraft/comm.hpp"
#include "culturecraft/gateway.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::harness {

/// Invalid experiment configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Setting { solo, instructive_model, instructive_human, collaborative_peer, collaborative_primed };

std::string_view to_string(Setting s);
Setting setting_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Backend configuration

/// One scripted rule as written in a spec file. `trials` limits the rule to
/// the listed trial (or pool member) indices.
struct RuleSpec {
  std::vector<std::string> match;
  std::optional<std::string> system;
  std::vector<std::string> responses;
  bool error = false;
  bool transport = false;
  std::optional<std::vector<int>> trials;
};

struct BackendSpec {
  std::string type = "scripted";  // "scripted" | "openai"
  std::string default_response = "OK";
  std::vector<RuleSpec> rules;
  gateway::RemoteConfig remote;
  std::optional<double> temperature;
  std::optional<int> max_tokens;
};

/// Backends per role for one agent; "default" fills unspecified roles.
struct AgentBackends {
  std::map<std::string, BackendSpec> roles;
};

BackendSpec backend_spec_from_json(const nlohmann::json& j);
std::shared_ptr<gateway::ChatBackend> make_backend(const BackendSpec& spec, int trial_index);
/// Bindings for an agent in one trial, with per-role default settings.
agent::Bindings make_bindings(const AgentBackends& backends, int trial_index);

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentSpec {
  std::string run_id = "run";
  Setting setting = Setting::solo;
  std::string task = "mine_dirt";
  int trials = 24;
  int comm_rounds = 0;
  int priming = 1;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;
  std::string world = "plains";
  agent::Flags flags;
  agent::Placement placement = agent::Placement::interleaved;
  int max_actions = 4;
  std::size_t top_k = 5;
  std::size_t belief_budget = 600;
  int workers = 1;
  bool curriculum = false;
  int curriculum_runs = 3;
  int budget = agent::kDefaultCurriculumBudget;
  std::vector<std::string> curriculum_tasks;
  int pool_size = 0;
  int population_rounds = 7;
  std::string embedding = "local";
  std::map<std::string, AgentBackends> agents;  // "novice", "expert", "peer"

  /// Seed for trial i: seeds[i] when listed, else seed + i.
  std::uint64_t trial_seed(int i) const;
  /// Throws ConfigError.
  void validate() const;
};

ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Metrics

struct MetricReport {
  std::string run_id;
  Setting setting = Setting::solo;
  std::string task;
  int trials_requested = 0;
  int trials_completed = 0;
  bool incomplete = false;
  int comm_rounds = 0;
  agent::Placement placement = agent::Placement::interleaved;
  // success_fraction[r]: fraction of completed trials that succeeded after at
  // most r communication rounds.
  std::vector<double> success_fraction;
  int successes = 0;
  int rounds_used = 0;
  int force_closed_rounds = 0;
  double mean_prompting_iterations = 0.0;
};

/// Recomputes the report from raw trial records.
MetricReport aggregate(const ExperimentSpec& spec, const std::vector<agent::TrialRecord>& trials, bool incomplete);
/// Rounds that happened before the first successful attempt (or all rounds).
int rounds_before_success(const agent::TrialRecord& trial);

nlohmann::ordered_json to_record(const MetricReport& report);
std::string render_report(const MetricReport& report);
std::string render_curve(const std::vector<double>& curve, std::string_view label = "fraction");

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  std::optional<int> workers;  // overrides spec.workers
  std::optional<std::filesystem::path> run_dir;
  comm::EventSink sink;
  // Required for instructive_human.
  comm::HumanGate* human = nullptr;
};

struct ExperimentResult {
  MetricReport report;
  std::vector<agent::TrialRecord> trials;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// Writes trials.jsonl, report.json, report.txt and curve.tsv.
void write_outputs(const std::filesystem::path& dir, const ExperimentSpec& spec, const ExperimentResult& result);

/// Reads trials.jsonl from a run directory.
std::vector<nlohmann::json> load_trial_records(const std::filesystem::path& run_dir);
/// Re-renders one trial record: attempts and rounds in execution order, with
/// the full actor prompt of each attempt when `prompts` is set.
std::string render_replay(const nlohmann::json& trial, bool prompts);

// ---------------------------------------------------------------------------
// Population

/// Seeded pairing of pool members (Fisher-Yates over mt19937_64).
std::vector<std::pair<int, int>> pair_pool(int pool_size, std::uint64_t seed);

using AgentFactory = std::function<std::unique_ptr<agent::Agent>(int index)>;

struct PopulationOptions {
  world::TaskSpec task;
  int pool_size = 0;
  int priming = 1;
  int rounds = 7;
  std::uint64_t seed = 1;
  // Pairing permutation seed; defaults to `seed`.
  std::optional<std::uint64_t> pairing_seed;
  std::string world = "plains";
  AgentFactory make_agent;
  // Expert used for priming; may be empty when priming == 0.
  AgentFactory make_expert;
  comm::EventSink sink;
};

struct PopulationResult {
  // curve[0] is the post-priming baseline, curve[r] after peer round r.
  std::vector<double> curve;
  std::vector<std::pair<int, int>> pairs;
  std::vector<bool> succeeded;
  std::vector<agent::TrialRecord> priming_trials;
  bool outage = false;
};

PopulationResult run_population(const PopulationOptions& options);
PopulationResult run_population(const ExperimentSpec& spec);
nlohmann::ordered_json to_record(const PopulationResult& result);

// ---------------------------------------------------------------------------
// Tech tree

struct MilestoneRow {
  world::Milestone milestone;
  int reached = 0;
  int runs = 0;
  double mean = 0.0;
  double sd = 0.0;
  std::string cell;
};

struct TechTreeTable {
  std::vector<MilestoneRow> rows;
  std::vector<std::size_t> unique_items_per_run;
  std::size_t unique_items = 0;
};

/// "mean ± sd (n/runs)" with integer rounding, sample sd, sd 0 for one run,
/// "N/A (0/runs)" when unreached.
std::string format_milestone_cell(const std::vector<int>& iterations, int runs);
TechTreeTable report_tech_tree(const std::vector<agent::CurriculumRecord>& runs);
std::string render_tech_tree(const TechTreeTable& table);
nlohmann::ordered_json to_record(const TechTreeTable& table);

std::vector<agent::CurriculumRecord> run_tech_tree(const ExperimentSpec& spec);

}  // namespace culturecraft::harness
