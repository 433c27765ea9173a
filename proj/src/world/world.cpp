#include <algorithm>

#include "culturecraft/text.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::world {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::string_view a, std::string_view b, std::int64_t roll) {
  std::uint64_t h = splitmix(seed);
  for (unsigned char c : a) h = splitmix(h ^ c);
  h = splitmix(h ^ 0xFF);
  for (unsigned char c : b) h = splitmix(h ^ c);
  return splitmix(h ^ static_cast<std::uint64_t>(roll));
}

std::vector<std::string> base_resources(std::string_view biome) {
  if (biome == "plains") return {"dirt", "oak_log", "stone"};
  if (biome == "forest") return {"dirt", "oak_log", "birch_log", "stone"};
  if (biome == "dark_forest") return {"dirt", "dark_oak_log", "stone"};
  if (biome == "mountains") return {"dirt", "stone", "iron_ore"};
  throw std::invalid_argument("unknown biome: " + std::string(biome));
}

bool biome_has_logs(std::string_view biome) {
  const auto base = base_resources(biome);
  return std::any_of(base.begin(), base.end(), [](const std::string& r) { return is_log(r); });
}

}  // namespace

bool is_night(std::int64_t tick) { return tick % kDayLength >= kNightStart; }

Inventory reachable_resources(std::uint64_t seed, std::string_view biome, bool night, std::int64_t roll) {
  auto resources = base_resources(biome);
  if (std::find(resources.begin(), resources.end(), "iron_ore") == resources.end() &&
      mix(seed, biome, "iron_ore", roll) % 3 == 0) {
    resources.push_back("iron_ore");
  }
  Inventory out;
  for (const auto& r : resources) {
    if (night && is_log(r)) continue;
    out[r] = 1 + static_cast<int>(mix(seed, biome, r, roll) % 4);
  }
  return out;
}

WorldState::WorldState(std::uint64_t seed_, std::string biome_, std::int64_t start_tick)
    : seed(seed_), tick(start_tick), biome(std::move(biome_)) {
  if (start_tick < 0) throw std::invalid_argument("start tick must be >= 0");
  base_resources(biome);  // validates the biome
}

WorldState WorldState::preset(std::string_view name, std::uint64_t seed) {
  if (name == "plains") return WorldState(seed, "plains", 0);
  if (name == "plains_night") return WorldState(seed, "plains", kNightStart);
  if (name == "dark_forest_night") return WorldState(seed, "dark_forest", kNightStart);
  if (name == "dark_forest") return WorldState(seed, "dark_forest", 0);
  if (name == "forest") return WorldState(seed, "forest", 0);
  if (name == "mountains") return WorldState(seed, "mountains", 0);
  throw std::invalid_argument("unknown world preset: " + std::string(name));
}

void WorldState::add_agent(const std::string& id, Inventory initial) {
  AgentState state;
  state.inventory = std::move(initial);
  agents[id] = std::move(state);
}

const AgentState& WorldState::agent(std::string_view id) const {
  auto it = agents.find(std::string(id));
  if (it == agents.end()) throw std::out_of_range("unknown agent: " + std::string(id));
  return it->second;
}

AgentState& WorldState::agent(std::string_view id) {
  auto it = agents.find(std::string(id));
  if (it == agents.end()) throw std::out_of_range("unknown agent: " + std::string(id));
  return it->second;
}

Inventory WorldState::reachable() const { return reachable_resources(seed, biome, is_night(tick), roll); }

bool WorldState::station_available(std::string_view agent_id, std::string_view station) const {
  auto it = placed.find(agent(agent_id).locale);
  return it != placed.end() && it->second.count(std::string(station)) > 0;
}

// ---------------------------------------------------------------------------

std::size_t ExecutionTrace::failures() const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const auto& s) { return !s.ok; }));
}

std::string ExecutionTrace::summary() const {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    lines.push_back(std::to_string(i + 1) + ". " + steps[i].primitive + ": " +
                    (steps[i].ok ? "ok" : "failed") + " - " + steps[i].message);
  }
  return text::join(lines, "\n");
}

namespace {

struct Step {
  bool ok;
  std::string message;
};

Step do_mine(WorldState& w, AgentState& agent, const std::string& target) {
  const auto reachable = w.reachable();
  std::string resource = target;
  if (is_log_tag(target)) {
    resource.clear();
    for (const auto& [r, n] : reachable) {
      if (is_log(r)) {
        resource = r;
        break;
      }
    }
    if (resource.empty()) {
      if (is_night(w.tick) && biome_has_logs(w.biome)) {
        return {false, "cannot find a log: resource unreachable at night"};
      }
      return {false, "no logs are reachable here; try explore"};
    }
  }
  if (!reachable.count(resource)) {
    if (is_log(resource) && is_night(w.tick)) {
      return {false, "cannot find " + resource + ": resource unreachable at night"};
    }
    return {false, resource + " is not reachable here; try explore"};
  }
  const int need = required_tool_tier(resource);
  if (held_tool_tier(agent.inventory) < need) {
    return {false, "tool required: " + std::string(tool_for_tier(need)) + " to mine " + resource};
  }
  add_items(agent.inventory, resource, 1);
  return {true, "mined 1 " + resource};
}

std::string consume_log(Inventory& inventory) {
  for (const auto& [item, n] : inventory) {
    if (is_log(item)) {
      std::string log = item;
      add_items(inventory, log, -1);
      return log;
    }
  }
  return {};
}

Step do_craft(WorldState& w, AgentState& agent, std::string_view agent_id, const std::string& item) {
  const auto& recipes = crafting_recipes();
  auto it = recipes.find(item);
  if (it == recipes.end()) {
    for (const auto& s : smelting_recipes()) {
      if (s.output == item) return {false, "no crafting recipe for " + item + "; it must be smelted from " + s.input};
    }
    if (is_resource(item) || is_log_tag(item)) {
      std::string tool_note = required_tool_tier(item) == 0 ? " (no tool needed)" : "";
      return {false, "no crafting recipe for " + item + "; it is mined directly" + tool_note};
    }
    return {false, "no crafting recipe for " + item};
  }
  const Recipe& recipe = it->second;
  if (recipe.station && !w.station_available(agent_id, *recipe.station)) {
    return {false, "station required: " + *recipe.station};
  }
  std::vector<std::string> missing;
  for (const auto& [ingredient, n] : recipe.ingredients) {
    int have = count_of(agent.inventory, ingredient);
    if (have < n) {
      missing.push_back(std::to_string(n) + " " + ingredient + " (have " + std::to_string(have) + ")");
    }
  }
  if (!missing.empty()) return {false, "missing ingredients: need " + text::join(missing, ", ")};
  for (const auto& [ingredient, n] : recipe.ingredients) {
    if (is_log_tag(ingredient)) {
      for (int i = 0; i < n; ++i) consume_log(agent.inventory);
    } else {
      add_items(agent.inventory, ingredient, -n);
    }
  }
  add_items(agent.inventory, recipe.output, recipe.output_count);
  return {true, "crafted " + std::to_string(recipe.output_count) + " " + recipe.output};
}

Step do_smelt(WorldState& w, AgentState& agent, std::string_view agent_id, const std::string& what) {
  const SmeltingRecipe* recipe = nullptr;
  for (const auto& s : smelting_recipes()) {
    if (s.input == what || s.output == what) recipe = &s;
  }
  if (!recipe) return {false, "no smelting recipe for " + what};
  if (!w.station_available(agent_id, "furnace")) return {false, "station required: furnace"};
  if (count_of(agent.inventory, recipe->input) < 1) {
    return {false, "missing ingredients: need 1 " + recipe->input + " (have 0)"};
  }
  if (count_of(agent.inventory, recipe->fuel) < 1) {
    return {false, "missing fuel: need 1 " + recipe->fuel + " (have 0)"};
  }
  add_items(agent.inventory, recipe->input, -1);
  add_items(agent.inventory, recipe->fuel, -1);
  add_items(agent.inventory, recipe->output, 1);
  return {true, "smelted 1 " + recipe->output};
}

Step do_place(WorldState& w, AgentState& agent, const std::string& station) {
  if (station != "crafting_table" && station != "furnace") return {false, station + " cannot be placed"};
  auto& here = w.placed[agent.locale];
  if (here.count(station)) return {false, station + " is already placed here"};
  if (count_of(agent.inventory, station) < 1) return {false, "no " + station + " in inventory"};
  add_items(agent.inventory, station, -1);
  here.insert(station);
  return {true, "placed " + station};
}

}  // namespace

std::pair<WorldState, ExecutionTrace> execute(const WorldState& world, std::string_view agent_id,
                                              const ActionScript& script) {
  WorldState w = world;
  ExecutionTrace trace;
  trace.agent_id = std::string(agent_id);
  w.agent(agent_id);  // throws for unknown agents before any mutation
  for (const auto& prim : script.primitives) {
    AgentState& agent = w.agent(agent_id);
    const Inventory before = agent.inventory;
    Step step{false, ""};
    switch (prim.verb) {
      case Verb::mine: step = do_mine(w, agent, prim.args.at(0)); break;
      case Verb::craft: step = do_craft(w, agent, agent_id, prim.args.at(0)); break;
      case Verb::smelt: step = do_smelt(w, agent, agent_id, prim.args.at(0)); break;
      case Verb::place: step = do_place(w, agent, prim.args.at(0)); break;
      case Verb::wait_until_day:
        step = {true, "waited until day"};
        break;
      case Verb::explore:
        step = {true, "explored the surroundings"};
        break;
    }
    if (prim.verb == Verb::wait_until_day) {
      w.tick = (w.tick / kDayLength + 1) * kDayLength;
    } else {
      w.tick += 1;
    }
    if (prim.verb == Verb::explore) w.roll = w.tick;
    trace.steps.push_back({prim.render(), step.ok, step.message, w.tick, inventory_diff(before, agent.inventory)});
  }
  return {std::move(w), std::move(trace)};
}

// ---------------------------------------------------------------------------

bool goal_holds(const Goal& goal, const Inventory& inventory) {
  return count_of(inventory, goal.item) >= goal.count;
}

CriticVerdict judge(const WorldState& before, const WorldState& after, std::string_view agent_id,
                    const TaskSpec& task, const ExecutionTrace& trace) {
  CriticVerdict v;
  const auto& inv_after = after.agent(agent_id).inventory;
  v.inventory_delta = inventory_diff(before.agent(agent_id).inventory, inv_after);
  const int have = count_of(inv_after, task.goal.item);
  const std::string progress = std::to_string(have) + "/" + std::to_string(task.goal.count) + " " + task.goal.item;
  v.success = goal_holds(task.goal, inv_after);
  if (v.success) {
    v.message = "Task '" + task.name + "' completed: inventory has " + progress + ".";
    v.milestone = task.milestone;
    return v;
  }
  std::string msg = "Task '" + task.name + "' not completed: inventory has " + progress + ".";
  bool mined_target = false;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    if (!s.ok) msg += " Step " + std::to_string(i + 1) + " '" + s.primitive + "' failed: " + s.message + ".";
    if (s.primitive.rfind("mine ", 0) == 0) {
      const auto target = s.primitive.substr(5);
      if (target == task.goal.item || (is_log_tag(task.goal.item) && (is_log(target) || is_log_tag(target)))) {
        mined_target = true;
      }
    }
  }
  const bool minable = is_resource(task.goal.item) || is_log_tag(task.goal.item);
  if (minable && !mined_target) {
    const int tier = required_tool_tier(task.goal.item);
    const std::string what = is_log_tag(task.goal.item) ? "A wood log" : task.goal.item;
    if (tier == 0) {
      msg += " " + what + " can be mined without any tool; no tool needed.";
    } else {
      msg += " " + what + " requires a " + std::string(tool_for_tier(tier)) + " to mine.";
    }
  } else if (trace.failures() == 0) {
    msg += " The script ran but did not obtain enough " + task.goal.item + ".";
  }
  v.message = std::move(msg);
  return v;
}

// ---------------------------------------------------------------------------

std::string_view to_string(TimeOfDay t) { return t == TimeOfDay::day ? "day" : "night"; }

std::set<std::string> Percept::vocabulary() const {
  std::set<std::string> vocab{biome, std::string(to_string(time_of_day))};
  for (const auto& [r, n] : nearby_resources) vocab.insert(r);
  for (const auto& [i, n] : inventory) vocab.insert(i);
  return vocab;
}

Percept snapshot_percept(const WorldState& world, std::string_view agent_id) {
  const auto& agent = world.agent(agent_id);
  Percept p;
  p.biome = world.biome;
  p.time_of_day = is_night(world.tick) ? TimeOfDay::night : TimeOfDay::day;
  p.tick = world.tick;
  p.nearby_resources = world.reachable();
  p.inventory = agent.inventory;
  if (!agent.last_feedback.empty()) p.last_feedback = agent.last_feedback;
  return p;
}

std::string render_percept(const Percept& p) {
  std::string out = "Biome: " + p.biome + "\n";
  out += "Time: " + std::string(to_string(p.time_of_day)) + " (tick " + std::to_string(p.tick) + ")\n";
  out += "Nearby resources: " + render_inventory(p.nearby_resources) + "\n";
  out += "Inventory: " + render_inventory(p.inventory);
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json inventory_record(const Inventory& inventory) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [item, n] : inventory) j[item] = n;
  return j;
}

nlohmann::ordered_json to_record(const WorldState& w) {
  nlohmann::ordered_json j;
  j["seed"] = w.seed;
  j["tick"] = w.tick;
  j["biome"] = w.biome;
  j["roll"] = w.roll;
  j["reachable"] = inventory_record(w.reachable());
  nlohmann::ordered_json agents = nlohmann::ordered_json::object();
  for (const auto& [id, a] : w.agents) {
    agents[id] = {{"inventory", inventory_record(a.inventory)}, {"locale", a.locale}, {"last_feedback", a.last_feedback}};
  }
  j["agents"] = std::move(agents);
  nlohmann::ordered_json placed = nlohmann::ordered_json::object();
  for (const auto& [locale, stations] : w.placed) placed[locale] = stations;
  j["placed"] = std::move(placed);
  return j;
}

nlohmann::ordered_json to_record(const ExecutionTrace& trace) {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"primitive", s.primitive}, {"ok", s.ok}, {"message", s.message},
                     {"tick_after", s.tick_after}, {"delta", inventory_record(s.delta)}});
  }
  return {{"agent", trace.agent_id}, {"steps", std::move(steps)}};
}

nlohmann::ordered_json to_record(const CriticVerdict& v) {
  nlohmann::ordered_json j;
  j["success"] = v.success;
  j["message"] = v.message;
  j["inventory_delta"] = inventory_record(v.inventory_delta);
  j["milestone"] = v.milestone ? nlohmann::ordered_json(std::string(to_string(*v.milestone))) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json to_record(const Percept& p) {
  nlohmann::ordered_json j;
  j["biome"] = p.biome;
  j["time_of_day"] = std::string(to_string(p.time_of_day));
  j["tick"] = p.tick;
  j["nearby_resources"] = inventory_record(p.nearby_resources);
  j["inventory"] = inventory_record(p.inventory);
  j["last_feedback"] = p.last_feedback ? nlohmann::ordered_json(*p.last_feedback) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace culturecraft::world
