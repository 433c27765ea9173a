#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "culturecraft/gateway.hpp"
#include "culturecraft/memory.hpp"
#include "culturecraft/transcript.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::beliefs {

inline constexpr std::size_t kCategoryCap = 24;

/// Causal template shared by the self-model and every partner model.
struct BigToMGraph {
  std::string context;
  std::string desire;
  std::string percept;
  std::string belief;
  std::optional<std::string> causal_event;
  std::string action;

  bool instantiated() const;
  std::string render() const;
  bool operator==(const BigToMGraph&) const = default;
};

/// Either a structured graph or, under the unstructured ablation, free text.
using PartnerState = std::variant<BigToMGraph, std::string>;

std::string render(const PartnerState& state);

struct PartnerSnapshot {
  int round = 0;
  PartnerState state;
};

struct PartnerModel {
  std::string partner_id;
  PartnerState graph;
  int last_updated_round = 0;
  std::vector<PartnerSnapshot> revision_history;

  static PartnerModel fresh(std::string partner_id, bool structured);
  bool structured() const { return std::holds_alternative<BigToMGraph>(graph); }
};

struct TaskBelief {
  std::string question;
  std::string answer;

  bool operator==(const TaskBelief&) const = default;
};

/// Exactly four belief categories. Each list is capped at kCategoryCap,
/// oldest entries evicted first.
struct BeliefSet {
  std::vector<std::string> perception;
  std::vector<TaskBelief> task;
  std::vector<std::string> interaction;
  std::map<std::string, PartnerModel> partners;

  void set_perception(std::vector<std::string> statements);
  void set_interaction(std::vector<std::string> statements);
  /// Task beliefs stay unique by (canonicalized) question.
  void upsert_task(TaskBelief belief);
  PartnerModel& partner(const std::string& id, bool structured);
  bool empty() const;
};

// ---------------------------------------------------------------------------
// Formation and update

/// Belief-former call over the rendered percept. Statements mentioning catalog
/// ids outside the percept are dropped; errors fall back to templates.
std::vector<std::string> form_perception_beliefs(const world::Percept& percept, const gateway::RoleBinding& backend);
std::vector<std::string> template_perception_beliefs(const world::Percept& percept);
/// Drops statements that mention known ids absent from the percept vocabulary.
std::vector<std::string> filter_entity_mentions(const std::vector<std::string>& statements,
                                                const world::Percept& percept);

/// Semantic entry verbatim when present (no call), else one belief-former
/// call. Errors yield an empty list.
std::vector<TaskBelief> form_task_beliefs(const world::TaskSpec& task, const memory::SemanticStore* semantic,
                                          const gateway::RoleBinding& backend);

/// Full rewrite of the interaction beliefs from transcript + prior.
std::vector<std::string> integrate_interaction_beliefs(const comm::ChatTranscript& transcript,
                                                       const std::vector<std::string>& prior,
                                                       const gateway::RoleBinding& backend);

PartnerModel update_partner_model(const PartnerModel& model, const comm::ChatTranscript& transcript,
                                  const gateway::RoleBinding& backend);
/// Parses "Field: value" lines or a JSON object into a graph; absent fields
/// keep their value from `prior` (or "unknown").
BigToMGraph parse_graph(const std::string& text, const BigToMGraph& prior);

/// Prompt texts, exposed so tests can capture them.
std::string interaction_system_prompt();
std::string partner_system_prompt();

/// Deterministic prompt rendering in fixed category order; drops whole
/// statements oldest-first from the heaviest category until within budget.
std::string render_belief_context(const BeliefSet& beliefs, std::size_t budget_tokens);

nlohmann::ordered_json to_record(const PartnerState& state);
nlohmann::ordered_json to_record(const PartnerModel& model);
nlohmann::ordered_json to_record(const BeliefSet& beliefs);

}  // namespace culturecraft::beliefs
