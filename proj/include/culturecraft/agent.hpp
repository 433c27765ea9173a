#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "culturecraft/beliefs.hpp"
#include "culturecraft/comm.hpp"
#include "culturecraft/gateway.hpp"
#include "culturecraft/memory.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::agent {

enum class AgentRole { novice, expert, peer, human_expert };
enum class Placement { interleaved, appended };

std::string_view to_string(AgentRole r);
AgentRole agent_role_from_string(std::string_view s);
std::string_view to_string(Placement p);
Placement placement_from_string(std::string_view s);

struct Flags {
  bool perspective_taking = true;
  bool structured_tom = true;
  bool episodic_memory = true;
  bool semantic_memory = true;
  bool flexible_comm = false;
  bool llm_critic = false;
};

struct Bindings {
  gateway::RoleBinding actor;
  gateway::RoleBinding critic;
  gateway::RoleBinding belief_former;
  gateway::RoleBinding conversationalist;
};

struct AgentConfig {
  std::string agent_id;
  AgentRole role = AgentRole::novice;
  Bindings bindings;
  Flags flags;
  int max_actions = 4;
  Placement placement = Placement::interleaved;
  std::size_t top_k = memory::kDefaultTopK;
  std::size_t belief_budget = 600;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct AttemptRecord {
  int index = 0;
  std::string context;
  std::string completion;
  std::string script;
  std::optional<std::string> parse_error;
  bool executed = false;
  bool backend_error = false;
  world::ExecutionTrace trace;
  world::CriticVerdict verdict;
  world::Inventory inventory_after;
  std::int64_t tick_after = 0;
  std::optional<comm::Decision> decision;
  std::vector<std::string> episodes_in_context;
  std::optional<std::string> episode_id;
  std::optional<std::string> skill_name;
  std::optional<std::string> llm_critic_message;
};

struct TrialRecord {
  std::string trial_id;
  int trial_index = 0;
  std::string task;
  std::uint64_t seed = 0;
  int comm_rounds = 0;
  Placement placement = Placement::interleaved;
  bool flexible = false;
  std::vector<AttemptRecord> attempts;
  std::vector<comm::CommunicationRound> rounds;
  // "attempt:<i>" / "round:<r>" in execution order.
  std::vector<std::string> events;
  bool success = false;
  int prompting_iterations = 0;
  bool outage = false;
};

/// Records call counts per role for one agent.
struct CallCounts {
  std::size_t actor = 0;
  std::size_t critic = 0;
  std::size_t belief_former = 0;
  std::size_t conversationalist = 0;
};

class Agent : public comm::Participant {
 public:
  Agent(AgentConfig config, std::shared_ptr<gateway::EmbeddingProvider> embedder);

  const std::string& id() const override { return config_.agent_id; }
  const AgentConfig& config() const { return config_; }
  beliefs::BeliefSet& beliefs() { return beliefs_; }
  const beliefs::BeliefSet& beliefs() const { return beliefs_; }
  memory::MemoryBank& memory() { return memory_; }
  const memory::MemoryBank& memory() const { return memory_; }

  CallCounts calls() const;
  /// Prompts sent to one role, in order.
  std::vector<gateway::ChatRequest> prompts(gateway::BackendRole role) const;
  bool outage() const { return *outage_; }

  /// Forms task beliefs for a new trial.
  void begin_trial(const world::TaskSpec& task, int trial_index);
  std::string assemble_context(const world::TaskSpec& task, const world::Percept& percept);
  /// One actor call, parse, execute and judge. `world` is updated in place.
  AttemptRecord attempt_action(world::WorldState& world, const world::TaskSpec& task, int attempt_index);
  comm::Decision decide(const world::TaskSpec& task);

  void set_partner_is_human(bool human) { partner_is_human_ = human; }

  std::optional<std::string> respond(const comm::ChatTranscript& transcript, const world::TaskSpec& task,
                                     std::int64_t tick) override;
  void on_round_closed(const comm::ChatTranscript& transcript, const world::TaskSpec& task) override;

 private:
  std::string partner_of(const comm::ChatTranscript& transcript) const;
  void learn_from_interaction(const world::TaskSpec& task);
  void refresh_task_beliefs(const world::TaskSpec& task, bool reflect);

  AgentConfig config_;
  beliefs::BeliefSet beliefs_;
  memory::MemoryBank memory_;
  std::shared_ptr<bool> outage_;
  std::map<gateway::BackendRole, std::shared_ptr<gateway::ChatBackend>> observed_;
  int trial_index_ = 0;
  bool partner_is_human_ = false;
};

/// First ``` fenced block of a completion, else the whole completion.
std::string extract_script(const std::string& completion);
/// "<task name>. Steps: a; b; c"
std::string skill_description(const world::TaskSpec& task, const world::ActionScript& script);
std::string skill_name(const world::TaskSpec& task, int attempt_index);

struct TrialOptions {
  int trial_index = 0;
  std::string trial_id;
  std::uint64_t seed = 0;
  int comm_rounds = 0;
  // Caps attempts below the agent's max_actions (curriculum budgets).
  std::optional<int> max_attempts;
  // Shared transcript for multi-trial conversations; a fresh one otherwise.
  comm::ChatTranscript* transcript = nullptr;
  comm::EventSink sink;
};

/// Attempt / communication schedule for one task. Throws std::invalid_argument
/// when rounds are requested without a partner.
TrialRecord run_trial(Agent& agent, comm::Participant* partner, world::WorldState& world,
                      const world::TaskSpec& task, const TrialOptions& options);

struct CurriculumRecord {
  std::map<world::Milestone, std::optional<int>> milestones;
  std::set<std::string> items_seen;
  std::vector<TrialRecord> trials;
  int iterations_used = 0;
  int budget = 0;
};

inline constexpr int kDefaultCurriculumBudget = 160;

/// Runs the task sequence with memory and world persisting across tasks; each
/// task repeats until solved or the iteration budget runs out.
CurriculumRecord run_curriculum(Agent& agent, world::WorldState& world, const std::vector<world::TaskSpec>& tasks,
                                int budget = kDefaultCurriculumBudget, comm::Participant* partner = nullptr,
                                int comm_rounds = 0);

nlohmann::ordered_json to_record(const AttemptRecord& a);
nlohmann::ordered_json to_record(const TrialRecord& t);
nlohmann::ordered_json to_record(const CurriculumRecord& c);

}  // namespace culturecraft::agent
