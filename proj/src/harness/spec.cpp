#include <fstream>

#include "culturecraft/harness.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::harness {

using nlohmann::json;

std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::solo: return "solo";
    case Setting::instructive_model: return "instructive_model";
    case Setting::instructive_human: return "instructive_human";
    case Setting::collaborative_peer: return "collaborative_peer";
    case Setting::collaborative_primed: return "collaborative_primed";
  }
  return "";
}

Setting setting_from_string(std::string_view s) {
  for (auto v : {Setting::solo, Setting::instructive_model, Setting::instructive_human, Setting::collaborative_peer,
                 Setting::collaborative_primed}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown setting: " + std::string(s));
}

namespace {

std::vector<std::string> string_or_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  if (j.is_array()) return j.get<std::vector<std::string>>();
  throw ConfigError("expected a string or a list of strings");
}

RuleSpec rule_from_json(const json& j) {
  RuleSpec r;
  if (j.contains("match")) r.match = string_or_list(j["match"]);
  if (j.contains("system")) r.system = j["system"].get<std::string>();
  if (j.contains("respond")) r.responses = string_or_list(j["respond"]);
  if (j.contains("responses")) r.responses = string_or_list(j["responses"]);
  r.error = j.value("error", false);
  r.transport = j.value("transport", false);
  if (j.contains("trials")) r.trials = j["trials"].get<std::vector<int>>();
  if (!r.error && r.responses.empty()) throw ConfigError("scripted rule needs 'respond' or 'error'");
  return r;
}

AgentBackends agent_backends_from_json(const json& j) {
  AgentBackends out;
  for (const auto& [role, spec] : j.items()) {
    if (role != "default" && role != "actor" && role != "critic" && role != "belief_former" &&
        role != "conversationalist") {
      throw ConfigError("unknown backend role: " + role);
    }
    out.roles[role] = backend_spec_from_json(spec);
  }
  return out;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

BackendSpec backend_spec_from_json(const json& j) {
  BackendSpec b;
  try {
    b.type = j.value("type", "scripted");
    if (b.type == "scripted") {
      b.default_response = j.value("default", "OK");
      for (const auto& r : j.value("rules", json::array())) b.rules.push_back(rule_from_json(r));
    } else if (b.type == "openai") {
      read(j, "base_url", b.remote.base_url);
      read(j, "model", b.remote.model_id);
      if (j.contains("api_key_env")) {
        if (const char* key = std::getenv(j["api_key_env"].get<std::string>().c_str())) b.remote.api_key = key;
      }
      if (j.contains("timeout_ms")) b.remote.timeout = std::chrono::milliseconds(j["timeout_ms"].get<int>());
      read(j, "retries", b.remote.retries);
    } else {
      throw ConfigError("unknown backend type: " + b.type);
    }
    if (j.contains("temperature")) b.temperature = j["temperature"].get<double>();
    if (j.contains("max_tokens")) b.max_tokens = j["max_tokens"].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad backend config: ") + e.what());
  }
  return b;
}

std::shared_ptr<gateway::ChatBackend> make_backend(const BackendSpec& spec, int trial_index) {
  if (spec.type == "openai") {
    return std::make_shared<gateway::RemoteChatBackend>(gateway::RemoteConfig::from_environment(spec.remote));
  }
  auto oracle = std::make_shared<gateway::ScriptedOracle>(spec.default_response);
  for (const auto& rule : spec.rules) {
    if (rule.trials && std::find(rule.trials->begin(), rule.trials->end(), trial_index) == rule.trials->end()) continue;
    auto body = rule.match.empty() ? gateway::always() : gateway::contains_all(rule.match);
    gateway::RequestMatcher matcher = body;
    if (rule.system) {
      auto sys = gateway::system_contains(*rule.system);
      matcher = [body, sys](const gateway::ChatRequest& r) { return sys(r) && body(r); };
    }
    if (rule.error) {
      oracle->fail_on(matcher, rule.transport);
    } else if (rule.responses.size() == 1) {
      oracle->on(matcher, rule.responses.front());
    } else {
      oracle->on(matcher, gateway::sequence(rule.responses));
    }
  }
  return oracle;
}

agent::Bindings make_bindings(const AgentBackends& backends, int trial_index) {
  agent::Bindings b;
  auto bind = [&](gateway::BackendRole role, gateway::RoleBinding& out) {
    auto it = backends.roles.find(std::string(gateway::to_string(role)));
    if (it == backends.roles.end()) {
      if (role == gateway::BackendRole::critic) return;
      it = backends.roles.find("default");
      if (it == backends.roles.end()) return;
    }
    out.backend = make_backend(it->second, trial_index);
    out.settings = gateway::default_settings(role);
    if (it->second.type == "openai") out.settings.model_id = gateway::RemoteConfig::from_environment(it->second.remote).model_id;
    if (it->second.temperature) out.settings.temperature = *it->second.temperature;
    if (it->second.max_tokens) out.settings.max_tokens = *it->second.max_tokens;
  };
  bind(gateway::BackendRole::actor, b.actor);
  bind(gateway::BackendRole::critic, b.critic);
  bind(gateway::BackendRole::belief_former, b.belief_former);
  bind(gateway::BackendRole::conversationalist, b.conversationalist);
  return b;
}

// ---------------------------------------------------------------------------

std::uint64_t ExperimentSpec::trial_seed(int i) const {
  if (i >= 0 && static_cast<std::size_t>(i) < seeds.size()) return seeds[static_cast<std::size_t>(i)];
  return seed + static_cast<std::uint64_t>(i);
}

void ExperimentSpec::validate() const {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (comm_rounds < 0) throw ConfigError("comm_rounds must be >= 0");
  if (max_actions < 1) throw ConfigError("max_actions must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (budget < 1) throw ConfigError("budget must be >= 1");
  if (curriculum_runs < 1) throw ConfigError("curriculum_runs must be >= 1");
  if (priming < 0) throw ConfigError("priming must be >= 0");
  if (setting == Setting::collaborative_primed && priming < 1) {
    throw ConfigError("collaborative_primed requires priming >= 1");
  }
  if (setting == Setting::solo && comm_rounds > 0) throw ConfigError("solo setting cannot have communication rounds");
  if (embedding != "local" && embedding != "openai") throw ConfigError("embedding must be 'local' or 'openai'");
  try {
    (void)world::WorldState::preset(world, 0);
    if (!curriculum) (void)world::find_task(task);
    for (const auto& t : curriculum_tasks) (void)world::find_task(t);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!agents.count("novice")) throw ConfigError("backends for agent 'novice' are required");
  if ((setting == Setting::instructive_model || setting == Setting::collaborative_primed) && !agents.count("expert")) {
    throw ConfigError("setting " + std::string(to_string(setting)) + " requires backends for agent 'expert'");
  }
}

ExperimentSpec spec_from_json(const json& j) {
  ExperimentSpec s;
  try {
    read(j, "run_id", s.run_id);
    if (j.contains("setting")) s.setting = setting_from_string(j["setting"].get<std::string>());
    read(j, "task", s.task);
    read(j, "trials", s.trials);
    read(j, "comm_rounds", s.comm_rounds);
    read(j, "priming", s.priming);
    read(j, "seed", s.seed);
    read(j, "seeds", s.seeds);
    read(j, "world", s.world);
    read(j, "max_actions", s.max_actions);
    read(j, "top_k", s.top_k);
    read(j, "belief_budget", s.belief_budget);
    read(j, "workers", s.workers);
    read(j, "curriculum", s.curriculum);
    read(j, "curriculum_runs", s.curriculum_runs);
    read(j, "budget", s.budget);
    read(j, "curriculum_tasks", s.curriculum_tasks);
    read(j, "pool_size", s.pool_size);
    read(j, "population_rounds", s.population_rounds);
    read(j, "embedding", s.embedding);
    if (j.contains("placement")) s.placement = agent::placement_from_string(j["placement"].get<std::string>());
    if (j.contains("flags")) {
      const auto& f = j["flags"];
      for (const auto& [key, value] : f.items()) {
        bool v = value.get<bool>();
        if (key == "perspective_taking") s.flags.perspective_taking = v;
        else if (key == "structured_tom") s.flags.structured_tom = v;
        else if (key == "episodic_memory") s.flags.episodic_memory = v;
        else if (key == "semantic_memory") s.flags.semantic_memory = v;
        else if (key == "flexible_comm") s.flags.flexible_comm = v;
        else if (key == "llm_critic") s.flags.llm_critic = v;
        else throw ConfigError("unknown flag: " + key);
      }
    }
    if (j.contains("backends")) {
      for (const auto& [name, cfg] : j["backends"].items()) s.agents[name] = agent_backends_from_json(cfg);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("spec file is not valid JSON: " + path.string());
  return spec_from_json(j);
}

}  // namespace culturecraft::harness
