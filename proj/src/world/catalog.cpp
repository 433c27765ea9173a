#include <algorithm>

#include "culturecraft/text.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::world {

namespace {

const std::vector<std::string> kResources = {"dirt", "oak_log", "birch_log", "dark_oak_log", "stone",
                                             "iron_ore"};
const std::vector<std::string> kLogs = {"birch_log", "dark_oak_log", "oak_log"};

}  // namespace

int count_of(const Inventory& inventory, std::string_view item_or_tag) {
  if (is_log_tag(item_or_tag)) {
    int total = 0;
    for (const auto& log : kLogs) {
      if (auto it = inventory.find(log); it != inventory.end()) total += it->second;
    }
    return total;
  }
  auto it = inventory.find(std::string(item_or_tag));
  return it == inventory.end() ? 0 : it->second;
}

void add_items(Inventory& inventory, const std::string& item, int n) {
  int& slot = inventory[item];
  slot += n;
  if (slot <= 0) inventory.erase(item);
}

Inventory inventory_diff(const Inventory& before, const Inventory& after) {
  Inventory diff;
  for (const auto& [item, n] : after) {
    int d = n - count_of(before, item);
    if (d != 0) diff[item] = d;
  }
  for (const auto& [item, n] : before) {
    if (!after.count(item)) diff[item] = -n;
  }
  return diff;
}

std::string render_inventory(const Inventory& inventory) {
  if (inventory.empty()) return "nothing";
  std::vector<std::string> parts;
  for (const auto& [item, n] : inventory) parts.push_back(item + " x" + std::to_string(n));
  return text::join(parts, ", ");
}

bool is_resource(std::string_view id) {
  return std::find(kResources.begin(), kResources.end(), id) != kResources.end();
}

bool is_log(std::string_view id) { return std::find(kLogs.begin(), kLogs.end(), id) != kLogs.end(); }

bool is_log_tag(std::string_view id) { return id == kLogTag || id == "wood_log"; }

const std::vector<std::string>& known_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> out = kResources;
    for (const auto& [item, recipe] : crafting_recipes()) out.push_back(item);
    for (const auto& r : smelting_recipes()) out.push_back(r.output);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }();
  return ids;
}

bool is_known_id(std::string_view id) {
  const auto& ids = known_ids();
  return is_log_tag(id) || std::binary_search(ids.begin(), ids.end(), id);
}

const std::vector<std::string>& known_biomes() {
  static const std::vector<std::string> biomes = {"plains", "forest", "dark_forest", "mountains"};
  return biomes;
}

const std::map<std::string, Recipe>& crafting_recipes() {
  static const std::map<std::string, Recipe> recipes = {
      {"wooden_plank", {"wooden_plank", 4, {{std::string(kLogTag), 1}}, std::nullopt}},
      {"stick", {"stick", 4, {{"wooden_plank", 2}}, std::nullopt}},
      {"crafting_table", {"crafting_table", 1, {{"wooden_plank", 4}}, std::nullopt}},
      {"wooden_pickaxe", {"wooden_pickaxe", 1, {{"wooden_plank", 3}, {"stick", 2}}, "crafting_table"}},
      {"wooden_axe", {"wooden_axe", 1, {{"wooden_plank", 3}, {"stick", 2}}, "crafting_table"}},
      {"stone_pickaxe", {"stone_pickaxe", 1, {{"stone", 3}, {"stick", 2}}, "crafting_table"}},
      {"furnace", {"furnace", 1, {{"stone", 8}}, "crafting_table"}},
      {"iron_pickaxe", {"iron_pickaxe", 1, {{"iron_ingot", 3}, {"stick", 2}}, "crafting_table"}},
  };
  return recipes;
}

const std::vector<SmeltingRecipe>& smelting_recipes() {
  static const std::vector<SmeltingRecipe> recipes = {{"iron_ore", "iron_ingot", "wooden_plank"}};
  return recipes;
}

int required_tool_tier(std::string_view resource) {
  if (resource == "stone") return 1;
  if (resource == "iron_ore") return 2;
  return 0;
}

int held_tool_tier(const Inventory& inventory) {
  if (count_of(inventory, "iron_pickaxe") > 0) return 3;
  if (count_of(inventory, "stone_pickaxe") > 0) return 2;
  if (count_of(inventory, "wooden_pickaxe") > 0) return 1;
  return 0;
}

std::string_view tool_for_tier(int tier) {
  switch (tier) {
    case 1: return "wooden_pickaxe";
    case 2: return "stone_pickaxe";
    case 3: return "iron_pickaxe";
    default: return "";
  }
}

std::string_view to_string(Milestone m) {
  switch (m) {
    case Milestone::wooden_tool: return "wooden_tool";
    case Milestone::stone_tool: return "stone_tool";
    case Milestone::iron_tool: return "iron_tool";
  }
  return "";
}

std::optional<Milestone> milestone_from_string(std::string_view name) {
  for (auto m : kAllMilestones) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

std::string_view milestone_item(Milestone m) {
  switch (m) {
    case Milestone::wooden_tool: return "wooden_pickaxe";
    case Milestone::stone_tool: return "stone_pickaxe";
    case Milestone::iron_tool: return "iron_pickaxe";
  }
  return "";
}

// ---------------------------------------------------------------------------

namespace {

TaskSpec make_task(std::string key, std::string name, std::string item, int count,
                   std::optional<Milestone> milestone = std::nullopt) {
  TaskSpec t;
  t.key = std::move(key);
  t.name = name;
  t.goal = {std::move(item), count};
  t.canonical_question = "How to " + text::lower(name.substr(0, 1)) + name.substr(1) + "?";
  t.milestone = milestone;
  return t;
}

}  // namespace

const std::map<std::string, TaskSpec>& task_catalog() {
  static const std::map<std::string, TaskSpec> tasks = [] {
    std::vector<TaskSpec> list = {
        make_task("mine_dirt", "Mine 1 dirt", "dirt", 1),
        make_task("mine_wood", "Mine 1 wood log", std::string(kLogTag), 1),
        make_task("mine_stone", "Mine 3 stone", "stone", 3),
        make_task("mine_more_stone", "Mine 8 stone", "stone", 8),
        make_task("mine_iron", "Mine 1 iron ore", "iron_ore", 1),
        make_task("mine_iron_ores", "Mine 3 iron ore", "iron_ore", 3),
        make_task("craft_planks", "Craft 4 wooden planks", "wooden_plank", 4),
        make_task("craft_sticks", "Craft 4 sticks", "stick", 4),
        make_task("craft_crafting_table", "Craft 1 crafting table", "crafting_table", 1),
        make_task("craft_wooden_pickaxe", "Craft 1 wooden pickaxe", "wooden_pickaxe", 1,
                  Milestone::wooden_tool),
        make_task("craft_stone_pickaxe", "Craft 1 stone pickaxe", "stone_pickaxe", 1,
                  Milestone::stone_tool),
        make_task("craft_furnace", "Craft 1 furnace", "furnace", 1),
        make_task("smelt_iron", "Smelt 3 iron ingots", "iron_ingot", 3),
        make_task("craft_iron_pickaxe", "Craft 1 iron pickaxe", "iron_pickaxe", 1, Milestone::iron_tool),
    };
    std::map<std::string, TaskSpec> out;
    for (auto& t : list) out.emplace(t.key, std::move(t));
    return out;
  }();
  return tasks;
}

const TaskSpec& find_task(std::string_view key_or_name) {
  const auto& tasks = task_catalog();
  if (auto it = tasks.find(std::string(key_or_name)); it != tasks.end()) return it->second;
  const auto wanted = text::canonicalize(key_or_name);
  for (const auto& [key, task] : tasks) {
    if (text::canonicalize(task.name) == wanted) return task;
  }
  throw std::out_of_range("unknown task: " + std::string(key_or_name));
}

std::vector<TaskSpec> tech_tree_curriculum() {
  std::vector<TaskSpec> out;
  for (const char* key : {"mine_wood", "craft_crafting_table", "craft_wooden_pickaxe", "mine_stone",
                          "craft_stone_pickaxe", "mine_more_stone", "craft_furnace", "mine_iron_ores",
                          "smelt_iron", "craft_iron_pickaxe"}) {
    out.push_back(find_task(key));
  }
  return out;
}

}  // namespace culturecraft::world
