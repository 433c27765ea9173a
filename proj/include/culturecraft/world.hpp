#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace culturecraft::world {

/// Item id -> count. Counts are always positive; zero entries are erased.
using Inventory = std::map<std::string, int>;

int count_of(const Inventory& inventory, std::string_view item_or_tag);
void add_items(Inventory& inventory, const std::string& item, int n);
/// Signed difference after - before (zero entries omitted).
Inventory inventory_diff(const Inventory& before, const Inventory& after);
std::string render_inventory(const Inventory& inventory);

// ---------------------------------------------------------------------------
// Catalog

inline constexpr std::string_view kLogTag = "log";

bool is_known_id(std::string_view id);
bool is_resource(std::string_view id);
bool is_log(std::string_view id);
/// "log" and "wood_log" both name the any-log tag.
bool is_log_tag(std::string_view id);
const std::vector<std::string>& known_ids();
const std::vector<std::string>& known_biomes();

struct Recipe {
  std::string output;
  int output_count = 1;
  // Ingredient keys are item ids or the log tag.
  Inventory ingredients;
  std::optional<std::string> station;
};

const std::map<std::string, Recipe>& crafting_recipes();

struct SmeltingRecipe {
  std::string input;
  std::string output;
  std::string fuel;
};

const std::vector<SmeltingRecipe>& smelting_recipes();

/// Pickaxe tier needed to mine a resource (0 = bare hands).
int required_tool_tier(std::string_view resource);
/// Highest pickaxe tier held (0 = none).
int held_tool_tier(const Inventory& inventory);
std::string_view tool_for_tier(int tier);

enum class Milestone { wooden_tool, stone_tool, iron_tool };

std::string_view to_string(Milestone m);
std::optional<Milestone> milestone_from_string(std::string_view name);
std::string_view milestone_item(Milestone m);
inline constexpr Milestone kAllMilestones[] = {Milestone::wooden_tool, Milestone::stone_tool,
                                               Milestone::iron_tool};

// ---------------------------------------------------------------------------
// Action-script DSL

enum class Verb { mine, craft, smelt, place, wait_until_day, explore };

std::string_view to_string(Verb verb);

struct Primitive {
  Verb verb = Verb::explore;
  std::vector<std::string> args;
  int line = 0;

  std::string render() const;
  bool operator==(const Primitive& o) const { return verb == o.verb && args == o.args; }
};

inline constexpr std::size_t kMaxPrimitives = 8;

struct ActionScript {
  std::vector<Primitive> primitives;
  std::string source_text;

  /// Canonical one-primitive-per-line form.
  std::string render() const;
};

struct ParseError {
  int line = 1;
  int column = 1;
  std::string message;
  std::vector<std::string> expected;

  std::string to_string() const;
};

struct ParseResult {
  std::optional<ActionScript> script;
  std::optional<ParseError> error;

  explicit operator bool() const { return script.has_value(); }
};

ParseResult parse_script(std::string_view source);

/// Short reference of the DSL that goes into every action prompt.
std::string grammar_reminder();

// ---------------------------------------------------------------------------
// World state

inline constexpr std::int64_t kDayLength = 12;
inline constexpr std::int64_t kNightStart = 7;

bool is_night(std::int64_t tick);

struct AgentState {
  Inventory inventory;
  std::string locale = "spawn";
  std::string last_feedback;

  bool operator==(const AgentState&) const = default;
};

struct WorldState {
  std::uint64_t seed = 0;
  std::int64_t tick = 0;
  std::string biome = "plains";
  // Tick of the last explore; selects the seed-dependent part of `reachable`.
  std::int64_t roll = 0;
  std::map<std::string, AgentState> agents;
  std::map<std::string, std::set<std::string>> placed;

  WorldState() = default;
  WorldState(std::uint64_t seed, std::string biome, std::int64_t start_tick = 0);

  /// Named scenario presets: "plains", "plains_night", "dark_forest_night",
  /// "mountains".
  static WorldState preset(std::string_view name, std::uint64_t seed);

  void add_agent(const std::string& id, Inventory initial = {});
  const AgentState& agent(std::string_view id) const;
  AgentState& agent(std::string_view id);

  Inventory reachable() const;
  bool station_available(std::string_view agent_id, std::string_view station) const;

  bool operator==(const WorldState&) const = default;
};

/// Pure function of (seed, biome, day/night, roll).
Inventory reachable_resources(std::uint64_t seed, std::string_view biome, bool night,
                              std::int64_t roll);

struct StepOutcome {
  std::string primitive;
  bool ok = false;
  std::string message;
  std::int64_t tick_after = 0;
  Inventory delta;
};

struct ExecutionTrace {
  std::string agent_id;
  std::vector<StepOutcome> steps;

  std::size_t failures() const;
  std::string summary() const;
};

std::pair<WorldState, ExecutionTrace> execute(const WorldState& world, std::string_view agent_id,
                                              const ActionScript& script);

// ---------------------------------------------------------------------------
// Tasks and critic

struct Goal {
  // Satisfied when the agent holds at least `count` of `item` (item or tag).
  std::string item;
  int count = 1;
};

struct TaskSpec {
  std::string key;
  std::string name;
  Goal goal;
  std::string canonical_question;
  std::optional<Milestone> milestone;
};

/// Built-in tasks keyed by short name (mine_dirt, mine_wood, craft_wooden_pickaxe, ...).
const std::map<std::string, TaskSpec>& task_catalog();
/// Looks up a task by key or by display name (case-insensitive).
const TaskSpec& find_task(std::string_view key_or_name);
/// Default tech-tree curriculum from logs to the iron pickaxe.
std::vector<TaskSpec> tech_tree_curriculum();

struct CriticVerdict {
  bool success = false;
  std::string message;
  Inventory inventory_delta;
  std::optional<Milestone> milestone;
};

bool goal_holds(const Goal& goal, const Inventory& inventory);

CriticVerdict judge(const WorldState& before, const WorldState& after, std::string_view agent_id,
                    const TaskSpec& task, const ExecutionTrace& trace);

// ---------------------------------------------------------------------------
// Perception

enum class TimeOfDay { day, night };

struct Percept {
  std::string biome;
  TimeOfDay time_of_day = TimeOfDay::day;
  std::int64_t tick = 0;
  Inventory nearby_resources;
  Inventory inventory;
  std::optional<std::string> last_feedback;

  /// Identifiers the percept makes observable (biome, time, resources, items).
  std::set<std::string> vocabulary() const;
};

std::string_view to_string(TimeOfDay t);

/// Throws std::out_of_range for an unknown agent.
Percept snapshot_percept(const WorldState& world, std::string_view agent_id);
std::string render_percept(const Percept& percept);

// ---------------------------------------------------------------------------
// Records

nlohmann::ordered_json to_record(const WorldState& world);
nlohmann::ordered_json to_record(const ExecutionTrace& trace);
nlohmann::ordered_json to_record(const CriticVerdict& verdict);
nlohmann::ordered_json to_record(const Percept& percept);
nlohmann::ordered_json inventory_record(const Inventory& inventory);

}  // namespace culturecraft::world
