// culturecraft command line: experiments, curricula, populations, replay,
// serve mode and memory dumps. Exit codes: 0 ok, 2 config error, 3 outage.

#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "culturecraft/harness.hpp"
#include "culturecraft/serve.hpp"

namespace cc = culturecraft;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitOutage = 3;

std::atomic<bool> g_interrupted{false};

// Serialized event writer for <run_dir>/events.jsonl.
struct EventLog {
  std::mutex mu;
  std::ofstream out;
  void write(std::string_view event, const nlohmann::ordered_json& data) {
    nlohmann::ordered_json e;
    e["event"] = std::string(event);
    e["data"] = data;
    std::lock_guard lock(mu);
    out << e.dump() << '\n';
  }
};

fs::path run_dir_for(const fs::path& out, const cc::harness::ExperimentSpec& spec) { return out / spec.run_id; }

int cmd_run(const fs::path& spec_path, const fs::path& out, std::optional<int> workers, bool events) {
  const auto spec = cc::harness::load_spec(spec_path);
  if (spec.setting == cc::harness::Setting::instructive_human) {
    throw cc::harness::ConfigError("instructive_human runs need a live expert; use the serve command");
  }
  const auto dir = run_dir_for(out, spec);
  fs::create_directories(dir);
  cc::harness::RunOptions opts;
  opts.workers = workers;
  opts.run_dir = dir;
  EventLog log;
  if (events) {
    log.out.open(dir / "events.jsonl", std::ios::trunc);
    opts.sink = [&log](std::string_view e, const nlohmann::ordered_json& d) { log.write(e, d); };
  }
  const auto result = cc::harness::run_experiment(spec, opts);
  std::cout << cc::harness::render_report(result.report);
  std::cout << "outputs in " << dir.string() << "\n";
  return result.report.incomplete ? kExitOutage : kExitOk;
}

int cmd_population(const fs::path& spec_path, const fs::path& out) {
  const auto spec = cc::harness::load_spec(spec_path);
  const auto result = cc::harness::run_population(spec);
  const auto dir = run_dir_for(out, spec);
  fs::create_directories(dir);
  std::ofstream(dir / "population.json", std::ios::trunc) << cc::harness::to_record(result).dump(2) << '\n';
  const auto curve = cc::harness::render_curve(result.curve, "fraction_succeeded");
  std::ofstream(dir / "population_curve.tsv", std::ios::trunc) << curve;
  std::cout << curve;
  return result.outage ? kExitOutage : kExitOk;
}

int cmd_techtree(const fs::path& spec_path, const fs::path& out) {
  const auto spec = cc::harness::load_spec(spec_path);
  const auto runs = cc::harness::run_tech_tree(spec);
  const auto table = cc::harness::report_tech_tree(runs);
  const auto dir = run_dir_for(out, spec);
  fs::create_directories(dir);
  {
    std::ofstream rec(dir / "curricula.jsonl", std::ios::trunc);
    for (const auto& r : runs) rec << cc::agent::to_record(r).dump() << '\n';
  }
  std::ofstream(dir / "techtree.json", std::ios::trunc) << cc::harness::to_record(table).dump(2) << '\n';
  const auto text = cc::harness::render_tech_tree(table);
  std::ofstream(dir / "techtree.txt", std::ios::trunc) << text;
  std::cout << text;
  for (const auto& r : runs) {
    for (const auto& t : r.trials) {
      if (t.outage) return kExitOutage;
    }
  }
  return kExitOk;
}

int cmd_replay(const fs::path& run_dir, const std::string& trial, bool prompts) {
  const auto trials = cc::harness::load_trial_records(run_dir);
  bool found = false;
  for (const auto& t : trials) {
    if (!trial.empty() && t.at("trial_id") != trial && std::to_string(t.at("trial_index").get<int>()) != trial) {
      continue;
    }
    found = true;
    std::cout << cc::harness::render_replay(t, prompts) << "\n";
  }
  if (!found) throw cc::harness::ConfigError("no trial '" + trial + "' in " + run_dir.string());
  return kExitOk;
}

int cmd_dump_memory(const fs::path& dir, const std::string& store) {
  if (!fs::is_directory(dir)) throw cc::harness::ConfigError("not a memory directory: " + dir.string());
  auto bank = cc::memory::MemoryBank::load(dir, std::make_shared<cc::gateway::LocalHashEmbedder>());
  std::vector<std::string> stores = {"episodic", "semantic", "skills"};
  if (!store.empty()) stores = {store};
  for (const auto& s : stores) {
    for (const auto& line : cc::memory::dump_records(bank, s)) std::cout << line << '\n';
  }
  return kExitOk;
}

void wait_for_interrupt() {
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

int cmd_serve(const std::optional<fs::path>& spec_path, const std::optional<fs::path>& run_dir, const fs::path& out,
              const std::string& host, int port, bool exit_when_done) {
  if (spec_path.has_value() == run_dir.has_value()) {
    throw cc::harness::ConfigError("serve needs exactly one of --spec or --run-dir");
  }
  if (run_dir) {
    auto state = cc::serve::SessionState::from_event_log(*run_dir / "events.jsonl", run_dir->filename().string());
    cc::serve::Server server(*state);
    std::cout << "inspecting " << run_dir->string() << " on port " << server.start(host, port) << std::endl;
    if (!exit_when_done) wait_for_interrupt();
    return kExitOk;
  }

  const auto spec = cc::harness::load_spec(*spec_path);
  if (spec.setting != cc::harness::Setting::instructive_human) {
    throw cc::harness::ConfigError("serve --spec expects an instructive_human experiment");
  }
  const auto dir = run_dir_for(out, spec);
  fs::create_directories(dir);
  cc::serve::SessionState state(spec.run_id);
  cc::comm::HumanGate gate("expert");
  EventLog log;
  log.out.open(dir / "events.jsonl", std::ios::trunc);
  auto live = state.sink();
  gate.set_on_await([&live](const nlohmann::ordered_json& turn) { live("awaiting_human", turn); });
  cc::serve::Server server(state, &gate);
  std::cout << "serving " << spec.run_id << " on port " << server.start(host, port) << std::endl;

  cc::harness::RunOptions opts;
  opts.run_dir = dir;
  opts.human = &gate;
  opts.sink = [&](std::string_view e, const nlohmann::ordered_json& d) {
    log.write(e, d);
    live(e, d);
  };
  std::atomic<bool> done{false};
  cc::harness::ExperimentResult result;
  std::thread runner([&] {
    result = cc::harness::run_experiment(spec, opts);
    state.finish();
    done = true;
  });
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!done && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  if (!done) gate.cancel();
  runner.join();
  std::cout << cc::harness::render_report(result.report);
  if (!exit_when_done && !g_interrupted) wait_for_interrupt();
  return result.report.incomplete ? kExitOutage : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"culturecraft: cultural-learning agents in a crafting world"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  fs::path spec_path, out_dir = "runs", run_dir, mem_dir;
  std::optional<int> workers;
  bool events = false;
  auto* run = app.add_subcommand("run", "run an experiment spec");
  run->add_option("spec", spec_path, "experiment spec (JSON)")->required();
  run->add_option("--out", out_dir, "parent directory for run outputs");
  run->add_option("--workers", workers, "parallel trials (overrides the experiment file)");
  run->add_flag("--events", events, "also write events.jsonl");

  auto* population = app.add_subcommand("population", "run a primed collaborative population");
  population->add_option("spec", spec_path)->required();
  population->add_option("--out", out_dir);

  auto* techtree = app.add_subcommand("techtree", "run curriculum repetitions and report milestones");
  techtree->add_option("spec", spec_path)->required();
  techtree->add_option("--out", out_dir);

  std::string trial;
  bool prompts = false;
  auto* replay = app.add_subcommand("replay", "re-render trials from a run directory");
  replay->add_option("run_dir", run_dir)->required();
  replay->add_option("--trial", trial, "trial id or index (all when omitted)");
  replay->add_flag("--prompts", prompts, "include full actor prompts");

  std::optional<fs::path> serve_spec, serve_dir;
  std::string host = "127.0.0.1";
  int port = 8765;
  bool exit_when_done = false;
  auto* serve = app.add_subcommand("serve", "live human-expert session or run inspection over HTTP");
  serve->add_option("--spec", serve_spec, "instructive_human experiment to run live");
  serve->add_option("--run-dir", serve_dir, "inspect a finished run (needs events.jsonl)");
  serve->add_option("--out", out_dir);
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_flag("--exit-when-done", exit_when_done, "stop serving once the experiment finishes");

  std::string store;
  auto* dump = app.add_subcommand("dump-memory", "print memory store records as JSON lines");
  dump->add_option("dir", mem_dir, "agent memory directory")->required();
  dump->add_option("--store", store)->check(CLI::IsMember({"episodic", "semantic", "skills"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) return cmd_run(spec_path, out_dir, workers, events);
    if (*population) return cmd_population(spec_path, out_dir);
    if (*techtree) return cmd_techtree(spec_path, out_dir);
    if (*replay) return cmd_replay(run_dir, trial, prompts);
    if (*serve) return cmd_serve(serve_spec, serve_dir, out_dir, host, port, exit_when_done);
    if (*dump) return cmd_dump_memory(mem_dir, store);
  } catch (const cc::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
