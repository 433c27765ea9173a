// Thin Python surface over the core library. Structured results cross the
// boundary as JSON text and are decoded by the pure-Python package.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "culturecraft/harness.hpp"
#include "culturecraft/text.hpp"
#include "culturecraft/world.hpp"

namespace py = pybind11;
namespace cc = culturecraft;
using nlohmann::ordered_json;

namespace {

std::string parse_script(const std::string& source) {
  auto parsed = cc::world::parse_script(source);
  if (!parsed) throw py::value_error(parsed.error->to_string());
  ordered_json out;
  out["primitives"] = ordered_json::array();
  for (const auto& p : parsed.script->primitives) {
    out["primitives"].push_back(
        {{"verb", cc::world::to_string(p.verb)}, {"args", p.args}, {"line", p.line}, {"text", p.render()}});
  }
  out["canonical"] = parsed.script->render();
  return out.dump();
}

std::string simulate(const std::string& source, const std::string& world, std::uint64_t seed,
                     const std::map<std::string, int>& inventory) {
  auto parsed = cc::world::parse_script(source);
  if (!parsed) throw py::value_error(parsed.error->to_string());
  auto state = cc::world::WorldState::preset(world, seed);
  state.add_agent("agent", inventory);
  auto [after, trace] = cc::world::execute(state, "agent", *parsed.script);
  return ordered_json{{"trace", cc::world::to_record(trace)}, {"world", cc::world::to_record(after)}}.dump();
}

std::string tasks() {
  ordered_json out = ordered_json::array();
  for (const auto& [key, t] : cc::world::task_catalog()) {
    out.push_back({{"key", key},
                   {"name", t.name},
                   {"goal", {{"item", t.goal.item}, {"count", t.goal.count}}},
                   {"question", t.canonical_question},
                   {"milestone", t.milestone ? ordered_json(cc::world::to_string(*t.milestone)) : ordered_json()}});
  }
  return out.dump();
}

cc::harness::ExperimentSpec spec_of(const std::string& spec_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(spec_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw py::value_error(std::string("spec is not valid JSON: ") + e.what());
  }
  return cc::harness::spec_from_json(j);
}

std::string run_experiment(const std::string& spec_json, std::optional<std::string> run_dir,
                           std::optional<int> workers) {
  const auto spec = spec_of(spec_json);
  cc::harness::RunOptions opts;
  opts.workers = workers;
  if (run_dir) opts.run_dir = *run_dir;
  cc::harness::ExperimentResult result;
  {
    py::gil_scoped_release unlocked;
    result = cc::harness::run_experiment(spec, opts);
    if (run_dir) cc::harness::write_outputs(*run_dir, spec, result);
  }
  ordered_json trials = ordered_json::array();
  for (const auto& t : result.trials) trials.push_back(cc::agent::to_record(t));
  return ordered_json{{"report", cc::harness::to_record(result.report)},
                      {"text", cc::harness::render_report(result.report)},
                      {"trials", std::move(trials)}}
      .dump();
}

std::string run_population(const std::string& spec_json) {
  const auto spec = spec_of(spec_json);
  cc::harness::PopulationResult result;
  {
    py::gil_scoped_release unlocked;
    result = cc::harness::run_population(spec);
  }
  return cc::harness::to_record(result).dump();
}

std::string run_tech_tree(const std::string& spec_json) {
  const auto spec = spec_of(spec_json);
  std::vector<cc::agent::CurriculumRecord> runs;
  {
    py::gil_scoped_release unlocked;
    runs = cc::harness::run_tech_tree(spec);
  }
  const auto table = cc::harness::report_tech_tree(runs);
  return ordered_json{{"table", cc::harness::to_record(table)}, {"text", cc::harness::render_tech_tree(table)}}.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the culturecraft simulator";
  m.def("parse_script", &parse_script, py::arg("source"));
  m.def("simulate", &simulate, py::arg("source"), py::arg("world") = "plains", py::arg("seed") = 1,
        py::arg("inventory") = std::map<std::string, int>{});
  m.def("tasks", &tasks);
  m.def("run_experiment", &run_experiment, py::arg("spec"), py::arg("run_dir") = std::nullopt,
        py::arg("workers") = std::nullopt);
  m.def("run_population", &run_population, py::arg("spec"));
  m.def("run_tech_tree", &run_tech_tree, py::arg("spec"));
  m.def("pair_pool", &cc::harness::pair_pool, py::arg("pool_size"), py::arg("seed"));
  m.def("format_milestone_cell", &cc::harness::format_milestone_cell, py::arg("iterations"), py::arg("runs"));
  m.def("fnv1a", &cc::text::fnv1a, py::arg("text"));
}
