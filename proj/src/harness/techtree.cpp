#include <cmath>
#include <numeric>
#include <set>

#include "culturecraft/harness.hpp"

namespace culturecraft::harness {

std::string format_milestone_cell(const std::vector<int>& iterations, int runs) {
  const auto n = iterations.size();
  const std::string count = "(" + std::to_string(n) + "/" + std::to_string(runs) + ")";
  if (n == 0) return "N/A " + count;
  const double mean = std::accumulate(iterations.begin(), iterations.end(), 0.0) / static_cast<double>(n);
  double sd = 0.0;
  if (n > 1) {
    double ss = 0.0;
    for (int x : iterations) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return std::to_string(std::lround(mean)) + " ± " + std::to_string(std::lround(sd)) + " " + count;
}

TechTreeTable report_tech_tree(const std::vector<agent::CurriculumRecord>& runs) {
  TechTreeTable table;
  const int total = static_cast<int>(runs.size());
  std::set<std::string> all_items;
  for (const auto& run : runs) {
    table.unique_items_per_run.push_back(run.items_seen.size());
    all_items.insert(run.items_seen.begin(), run.items_seen.end());
  }
  table.unique_items = all_items.size();
  for (auto m : world::kAllMilestones) {
    std::vector<int> its;
    for (const auto& run : runs) {
      auto it = run.milestones.find(m);
      if (it != run.milestones.end() && it->second) its.push_back(*it->second);
    }
    MilestoneRow row;
    row.milestone = m;
    row.reached = static_cast<int>(its.size());
    row.runs = total;
    if (!its.empty()) {
      row.mean = std::accumulate(its.begin(), its.end(), 0.0) / static_cast<double>(its.size());
      if (its.size() > 1) {
        double ss = 0.0;
        for (int x : its) ss += (x - row.mean) * (x - row.mean);
        row.sd = std::sqrt(ss / static_cast<double>(its.size() - 1));
      }
    }
    row.cell = format_milestone_cell(its, total);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string render_tech_tree(const TechTreeTable& table) {
  std::string out = "milestone     iterations\n";
  for (const auto& row : table.rows) {
    std::string name(world::to_string(row.milestone));
    name.resize(14, ' ');
    out += name + row.cell + "\n";
  }
  out += "unique items  " + std::to_string(table.unique_items) + "\n";
  return out;
}

nlohmann::ordered_json to_record(const TechTreeTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"milestone", std::string(world::to_string(r.milestone))},
                    {"reached", r.reached},
                    {"runs", r.runs},
                    {"mean", r.mean},
                    {"sd", r.sd},
                    {"cell", r.cell}});
  }
  nlohmann::ordered_json j;
  j["rows"] = std::move(rows);
  j["unique_items"] = t.unique_items;
  j["unique_items_per_run"] = t.unique_items_per_run;
  return j;
}

std::vector<agent::CurriculumRecord> run_tech_tree(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<world::TaskSpec> tasks;
  if (spec.curriculum_tasks.empty()) {
    tasks = world::tech_tree_curriculum();
  } else {
    for (const auto& t : spec.curriculum_tasks) tasks.push_back(world::find_task(t));
  }
  std::vector<agent::CurriculumRecord> out;
  for (int r = 0; r < spec.curriculum_runs; ++r) {
    auto embedder = std::make_shared<gateway::LocalHashEmbedder>();
    auto world = world::WorldState::preset(spec.world, spec.trial_seed(r));
    agent::AgentConfig cfg;
    cfg.agent_id = "novice";
    cfg.bindings = make_bindings(spec.agents.at("novice"), r);
    cfg.flags = spec.flags;
    cfg.max_actions = spec.max_actions;
    cfg.placement = spec.placement;
    cfg.top_k = spec.top_k;
    cfg.belief_budget = spec.belief_budget;
    agent::Agent novice(cfg, embedder);
    world.add_agent(novice.id());
    std::unique_ptr<agent::Agent> expert;
    if (spec.comm_rounds > 0 && spec.agents.count("expert")) {
      auto ecfg = cfg;
      ecfg.agent_id = "expert";
      ecfg.role = agent::AgentRole::expert;
      ecfg.bindings = make_bindings(spec.agents.at("expert"), r);
      expert = std::make_unique<agent::Agent>(ecfg, embedder);
    }
    out.push_back(agent::run_curriculum(novice, world, tasks, spec.budget, expert.get(),
                                        expert ? spec.comm_rounds : 0));
  }
  return out;
}

}  // namespace culturecraft::harness
