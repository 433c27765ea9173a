#include <algorithm>

#include <spdlog/spdlog.h>

#include "culturecraft/agent.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::agent {

using gateway::BackendRole;
using gateway::Message;
using gateway::Role;

namespace {

// Forwards to the configured backend, counting calls per role and noticing
// transport outages.
class ObservedBackend : public gateway::ChatBackend {
 public:
  ObservedBackend(std::shared_ptr<gateway::ChatBackend> inner, std::shared_ptr<bool> outage)
      : inner_(std::move(inner)), outage_(std::move(outage)) {}

 protected:
  gateway::ChatResponse dispatch(const gateway::ChatRequest& request) override {
    auto response = inner_->complete(request);
    if (response.transport_failure) *outage_ = true;
    return response;
  }

 private:
  std::shared_ptr<gateway::ChatBackend> inner_;
  std::shared_ptr<bool> outage_;
};

// Case-insensitive search on a whitespace-collapsed copy that keeps case.
std::optional<std::string> answer_after_question(const std::string& statement, const std::string& question) {
  std::string collapsed;
  for (char c : text::trim(statement)) {
    bool space = std::isspace(static_cast<unsigned char>(c));
    if (space && (collapsed.empty() || collapsed.back() == ' ')) continue;
    collapsed.push_back(space ? ' ' : c);
  }
  const auto lowered = text::lower(collapsed);
  const auto needle = text::canonicalize(question);
  auto pos = lowered.find(needle);
  if (pos == std::string::npos) return std::nullopt;
  std::string rest = collapsed.substr(pos + needle.size());
  auto is_sep = [](char c) { return c == ' ' || c == ':' || c == '-' || c == '=' || c == '>' || c == '"' || c == '\''; };
  while (!rest.empty() && is_sep(rest.front())) rest.erase(rest.begin());
  while (!rest.empty() && (rest.back() == '"' || rest.back() == '\'' || rest.back() == ' ')) rest.pop_back();
  if (rest.empty()) return std::nullopt;
  return rest;
}

std::string fence(const std::string& script) { return "```\n" + script + "\n```"; }

}  // namespace

std::string_view to_string(AgentRole r) {
  switch (r) {
    case AgentRole::novice: return "novice";
    case AgentRole::expert: return "expert";
    case AgentRole::peer: return "peer";
    case AgentRole::human_expert: return "human_expert";
  }
  return "";
}

AgentRole agent_role_from_string(std::string_view s) {
  for (auto r : {AgentRole::novice, AgentRole::expert, AgentRole::peer, AgentRole::human_expert}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown agent role: " + std::string(s));
}

std::string_view to_string(Placement p) { return p == Placement::appended ? "appended" : "interleaved"; }

Placement placement_from_string(std::string_view s) {
  if (s == "interleaved") return Placement::interleaved;
  if (s == "appended") return Placement::appended;
  throw std::invalid_argument("unknown placement: " + std::string(s));
}

void AgentConfig::validate() const {
  if (agent_id.empty()) throw std::invalid_argument("agent_id must be set");
  if (max_actions < 1) throw std::invalid_argument("max_actions must be >= 1");
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (belief_budget < 1) throw std::invalid_argument("belief_budget must be >= 1");
  if (role == AgentRole::human_expert) {
    if (bindings.actor) throw std::invalid_argument("a human expert has no actor backend");
    return;
  }
  if (!bindings.actor) throw std::invalid_argument(agent_id + ": actor backend required");
  if (!bindings.belief_former) throw std::invalid_argument(agent_id + ": belief_former backend required");
  if (!bindings.conversationalist) throw std::invalid_argument(agent_id + ": conversationalist backend required");
  if (flags.llm_critic && !bindings.critic) throw std::invalid_argument(agent_id + ": llm_critic needs a critic backend");
}

// ---------------------------------------------------------------------------

Agent::Agent(AgentConfig config, std::shared_ptr<gateway::EmbeddingProvider> embedder)
    : config_(std::move(config)), memory_(std::move(embedder)), outage_(std::make_shared<bool>(false)) {
  config_.validate();
  if (config_.role == AgentRole::human_expert) throw std::invalid_argument("human experts are driven by a HumanGate");
  auto wrap = [&](BackendRole role, gateway::RoleBinding& binding) {
    if (!binding) return;
    auto observed = std::make_shared<ObservedBackend>(binding.backend, outage_);
    observed_[role] = observed;
    binding.backend = observed;
  };
  wrap(BackendRole::actor, config_.bindings.actor);
  wrap(BackendRole::critic, config_.bindings.critic);
  wrap(BackendRole::belief_former, config_.bindings.belief_former);
  wrap(BackendRole::conversationalist, config_.bindings.conversationalist);
}

CallCounts Agent::calls() const {
  auto n = [&](BackendRole r) {
    auto it = observed_.find(r);
    return it == observed_.end() ? std::size_t{0} : it->second->call_count();
  };
  return {n(BackendRole::actor), n(BackendRole::critic), n(BackendRole::belief_former),
          n(BackendRole::conversationalist)};
}

std::vector<gateway::ChatRequest> Agent::prompts(BackendRole role) const {
  auto it = observed_.find(role);
  return it == observed_.end() ? std::vector<gateway::ChatRequest>{} : it->second->call_log();
}

void Agent::begin_trial(const world::TaskSpec& task, int trial_index) {
  trial_index_ = trial_index;
  refresh_task_beliefs(task, true);
}

// With semantic memory the stored answer wins and a self-inferred answer is
// persisted. Without it, `reflect` decides whether an existing belief is kept.
void Agent::refresh_task_beliefs(const world::TaskSpec& task, bool reflect) {
  const memory::SemanticStore* semantic = config_.flags.semantic_memory ? &memory_.semantic : nullptr;
  const bool known = semantic && semantic->get(task.canonical_question).has_value();
  if (!semantic && !reflect) {
    const auto key = text::canonicalize(task.canonical_question);
    for (const auto& t : beliefs_.task) {
      if (text::canonicalize(t.question) == key) return;
    }
  }
  for (auto& b : beliefs::form_task_beliefs(task, semantic, config_.bindings.belief_former)) {
    if (semantic && !known) memory_.semantic.put(b.question, b.answer, memory::Source::self_inference);
    beliefs_.upsert_task(std::move(b));
  }
}

std::string Agent::assemble_context(const world::TaskSpec& task, const world::Percept& percept) {
  std::vector<std::string> sections;
  sections.push_back("Task: " + task.name + "\nGoal: hold at least " + std::to_string(task.goal.count) + " " +
                     task.goal.item + ".");

  auto rendered = beliefs::render_belief_context(beliefs_, config_.belief_budget);
  if (!rendered.empty()) sections.push_back("Beliefs:\n" + rendered);

  if (config_.flags.semantic_memory) {
    if (auto entry = memory_.semantic.get(task.canonical_question)) {
      sections.push_back("Semantic memory:\n" + entry->question + " " + entry->answer);
    }
  }

  if (config_.flags.episodic_memory && memory_.episodic.size() > 0) {
    auto episodes = memory_.episodic.retrieve(task.name, config_.top_k);
    sections.push_back("Lessons from past failures:\n" + memory::summarize(episodes, config_.bindings.belief_former));
  }

  auto skills = memory_.skills.retrieve(task.name, config_.top_k);
  if (!skills.empty()) {
    std::string s = "Relevant skills:";
    for (const auto& skill : skills) s += "\n" + skill.name + ": " + skill.description + "\n" + fence(skill.script);
    sections.push_back(std::move(s));
  }

  sections.push_back("Current observation:\n" + world::render_percept(percept));
  if (percept.last_feedback && !percept.last_feedback->empty()) {
    sections.push_back("Last feedback:\n" + *percept.last_feedback);
  }
  sections.push_back("Action language:\n" + world::grammar_reminder());
  return text::join(sections, "\n\n");
}

std::string extract_script(const std::string& completion) {
  auto open = completion.find("```");
  if (open == std::string::npos) return text::trim(completion);
  auto body = completion.find('\n', open);
  if (body == std::string::npos) return text::trim(completion);
  auto close = completion.find("```", body + 1);
  if (close == std::string::npos) return text::trim(completion.substr(body + 1));
  return text::trim(completion.substr(body + 1, close - body - 1));
}

std::string skill_description(const world::TaskSpec& task, const world::ActionScript& script) {
  std::vector<std::string> steps;
  for (const auto& p : script.primitives) steps.push_back(p.render());
  return task.name + ". Steps: " + text::join(steps, "; ");
}

std::string skill_name(const world::TaskSpec& task, int attempt_index) {
  return text::slug(task.name) + "_" + std::to_string(attempt_index);
}

AttemptRecord Agent::attempt_action(world::WorldState& world, const world::TaskSpec& task, int attempt_index) {
  AttemptRecord rec;
  rec.index = attempt_index;
  const auto percept = world::snapshot_percept(world, id());
  beliefs_.set_perception(beliefs::form_perception_beliefs(percept, config_.bindings.belief_former));

  if (config_.flags.episodic_memory && memory_.episodic.size() > 0) {
    for (const auto& e : memory_.episodic.retrieve(task.name, config_.top_k)) rec.episodes_in_context.push_back(e.episode_id);
  }
  rec.context = assemble_context(task, percept);

  auto response = config_.bindings.actor.ask({
      {Role::system, "You are " + id() + ", an agent in a crafting world. Write an action script that completes the "
                     "task. Reply with the script inside a ``` fenced block."},
      {Role::user, rec.context},
  });

  auto fail_without_execution = [&](const std::string& reason) {
    rec.verdict.success = false;
    rec.verdict.message = "Task '" + task.name + "' not completed: " + reason;
    world.agent(id()).last_feedback = rec.verdict.message;
  };

  if (!response.ok()) {
    rec.backend_error = true;
    rec.completion = response.content;
    fail_without_execution("actor backend error: " + response.content);
  } else {
    rec.completion = response.content;
    rec.script = extract_script(response.content);
    auto parsed = world::parse_script(rec.script);
    if (!parsed) {
      rec.parse_error = parsed.error->to_string();
      fail_without_execution("Script error: " + *rec.parse_error);
    } else {
      const world::WorldState before = world;
      auto [after, trace] = world::execute(world, id(), *parsed.script);
      rec.executed = true;
      rec.trace = std::move(trace);
      rec.verdict = world::judge(before, after, id(), task, rec.trace);
      world = std::move(after);
      std::string feedback = rec.verdict.message;
      if (config_.flags.llm_critic) {
        auto critic = config_.bindings.critic.ask({
            {Role::system, "You are a critic judging whether an agent in a crafting world completed its task. Explain "
                           "briefly what went wrong or confirm success."},
            {Role::user, "Task: " + task.name + "\nExecution:\n" + rec.trace.summary() + "\nInventory: " +
                             world::render_inventory(world.agent(id()).inventory) + "\nRule check: " +
                             rec.verdict.message},
        });
        if (critic.ok()) {
          rec.llm_critic_message = critic.content;
          feedback += "\nCritic: " + critic.content;
        }
      }
      world.agent(id()).last_feedback = feedback;
      if (rec.verdict.success) {
        memory::Skill skill;
        skill.name = skill_name(task, attempt_index);
        skill.description = skill_description(task, *parsed.script);
        skill.script = parsed.script->render();
        try {
          memory_.skills.insert(std::move(skill));
          rec.skill_name = skill_name(task, attempt_index);
        } catch (const memory::SkillRejected& e) {
          spdlog::warn("skill not stored: {}", e.what());
        }
      }
    }
  }

  if (!rec.verdict.success && config_.flags.episodic_memory) {
    memory::Episode ep;
    ep.task = task.name;
    ep.context_snapshot = rec.context;
    ep.action_script = rec.script.empty() ? "(no script)" : rec.script;
    ep.critic_message = rec.verdict.message;
    ep.created_at = {trial_index_, attempt_index, world.tick};
    rec.episode_id = memory_.episodic.insert(std::move(ep));
  }
  rec.inventory_after = world.agent(id()).inventory;
  rec.tick_after = world.tick;
  return rec;
}

comm::Decision Agent::decide(const world::TaskSpec& task) {
  return comm::decide(task, beliefs::render_belief_context(beliefs_, config_.belief_budget),
                      config_.bindings.belief_former);
}

std::string Agent::partner_of(const comm::ChatTranscript& transcript) const {
  const auto& [a, b] = transcript.participants();
  return a == id() ? b : a;
}

std::optional<std::string> Agent::respond(const comm::ChatTranscript& transcript, const world::TaskSpec& task,
                                          std::int64_t) {
  const auto partner = partner_of(transcript);
  comm::ReplyContext ctx;
  ctx.responder_id = id();
  ctx.partner_id = partner;
  ctx.task = &task;
  ctx.beliefs = &beliefs_;
  ctx.belief_budget = config_.belief_budget;
  if (config_.flags.perspective_taking && transcript.messages_from(partner) > 0) {
    const auto& model = beliefs_.partner(partner, config_.flags.structured_tom);
    ctx.perspective = comm::take_perspective(id(), model, transcript, config_.bindings.conversationalist);
  }
  auto response = config_.bindings.conversationalist.ask(comm::reply_prompt(ctx, transcript));
  if (!response.ok()) return std::nullopt;
  return response.content;
}

void Agent::on_round_closed(const comm::ChatTranscript& transcript, const world::TaskSpec& task) {
  const auto partner = partner_of(transcript);
  beliefs_.set_interaction(
      beliefs::integrate_interaction_beliefs(transcript, beliefs_.interaction, config_.bindings.conversationalist));
  if (transcript.messages_from(partner) > 0) {
    auto& model = beliefs_.partner(partner, config_.flags.structured_tom);
    model = beliefs::update_partner_model(model, transcript, config_.bindings.conversationalist);
  }
  learn_from_interaction(task);
}

void Agent::learn_from_interaction(const world::TaskSpec& task) {
  for (auto it = beliefs_.interaction.rbegin(); config_.flags.semantic_memory && it != beliefs_.interaction.rend();
       ++it) {
    if (auto answer = answer_after_question(*it, task.canonical_question)) {
      auto current = memory_.semantic.get(task.canonical_question);
      if (!current || current->answer != *answer) {
        memory_.semantic.put(task.canonical_question, *answer,
                             partner_is_human_ ? memory::Source::human : memory::Source::communication);
      }
      break;
    }
  }
  refresh_task_beliefs(task, false);
}

// ---------------------------------------------------------------------------

namespace {

// Snapshots of an agent's beliefs and memory for live subscribers.
void publish_state(const Agent& agent, const comm::EventSink& sink) {
  if (!sink) return;
  sink("beliefs", {{"agent", agent.id()}, {"beliefs", beliefs::to_record(agent.beliefs())}});
  nlohmann::ordered_json mem;
  mem["agent"] = agent.id();
  for (const char* store : {"episodic", "semantic", "skills"}) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& line : memory::dump_records(agent.memory(), store)) {
      rows.push_back(nlohmann::ordered_json::parse(line));
    }
    mem[store] = std::move(rows);
  }
  sink("memory", mem);
}

}  // namespace

TrialRecord run_trial(Agent& agent, comm::Participant* partner, world::WorldState& world, const world::TaskSpec& task,
                      const TrialOptions& options) {
  if (options.comm_rounds < 0) throw std::invalid_argument("comm_rounds must be >= 0");
  if (options.comm_rounds > 0 && !partner) {
    throw std::invalid_argument("communication rounds requested but no partner configured");
  }
  const auto& cfg = agent.config();
  TrialRecord rec;
  rec.trial_id = options.trial_id.empty() ? "trial-" + std::to_string(options.trial_index) : options.trial_id;
  rec.trial_index = options.trial_index;
  rec.task = task.name;
  rec.seed = options.seed;
  rec.comm_rounds = options.comm_rounds;
  rec.placement = cfg.placement;
  rec.flexible = cfg.flags.flexible_comm;

  std::optional<comm::ChatTranscript> local;
  comm::ChatTranscript* transcript = options.transcript;
  if (!transcript && partner) {
    local.emplace(agent.id(), partner->id());
    transcript = &*local;
  }
  const std::size_t first_round = transcript ? transcript->rounds().size() : 0;
  if (auto* human = dynamic_cast<comm::HumanGate*>(partner)) {
    (void)human;
    agent.set_partner_is_human(true);
  }

  const auto actor_before = agent.calls().actor;
  int rounds_used = 0;
  auto run_one_round = [&] {
    comm::run_round(agent, *partner, *transcript, task, world.tick, options.sink);
    rec.events.push_back("round:" + std::to_string(rounds_used));
    ++rounds_used;
    publish_state(agent, options.sink);
    if (auto* other = dynamic_cast<Agent*>(partner)) publish_state(*other, options.sink);
  };

  if (options.sink) {
    options.sink("trial_start", {{"trial_id", rec.trial_id}, {"trial_index", rec.trial_index}, {"task", task.name},
                                 {"agent", agent.id()}, {"partner", partner ? partner->id() : std::string()}});
  }

  agent.begin_trial(task, options.trial_index);
  const int max_attempts = std::min(cfg.max_actions, options.max_attempts.value_or(cfg.max_actions));
  for (int a = 0; a < max_attempts && !agent.outage(); ++a) {
    std::optional<comm::Decision> decision;
    if (cfg.flags.flexible_comm && partner && rounds_used < options.comm_rounds) {
      decision = agent.decide(task);
      if (*decision == comm::Decision::ask) run_one_round();
    }
    auto attempt = agent.attempt_action(world, task, a);
    attempt.decision = decision;
    const bool success = attempt.verdict.success;
    rec.attempts.push_back(std::move(attempt));
    rec.events.push_back("attempt:" + std::to_string(a));
    if (options.sink) {
      options.sink("attempt", to_record(rec.attempts.back()));
      options.sink("world", world::to_record(world));
      publish_state(agent, options.sink);
    }
    if (success) {
      rec.success = true;
      break;
    }
    if (agent.outage() || cfg.flags.flexible_comm || !partner || rounds_used >= options.comm_rounds) continue;
    const bool last = a == max_attempts - 1;
    if (cfg.placement == Placement::appended || !last) run_one_round();
  }

  rec.prompting_iterations = static_cast<int>(agent.calls().actor - actor_before);
  rec.outage = agent.outage();
  if (auto* other = dynamic_cast<Agent*>(partner)) rec.outage = rec.outage || other->outage();
  if (transcript) {
    for (std::size_t i = first_round; i < transcript->rounds().size(); ++i) rec.rounds.push_back(transcript->rounds()[i]);
  }
  if (options.sink) {
    options.sink("trial_end", {{"trial_id", rec.trial_id}, {"success", rec.success}, {"outage", rec.outage}});
  }
  return rec;
}

CurriculumRecord run_curriculum(Agent& agent, world::WorldState& world, const std::vector<world::TaskSpec>& tasks,
                                int budget, comm::Participant* partner, int comm_rounds) {
  if (budget < 1) throw std::invalid_argument("curriculum budget must be >= 1");
  CurriculumRecord rec;
  rec.budget = budget;
  for (auto m : world::kAllMilestones) rec.milestones[m] = std::nullopt;
  for (const auto& [item, n] : world.agent(agent.id()).inventory) rec.items_seen.insert(item);

  auto note_inventory = [&](const world::Inventory& inv, int iteration) {
    for (const auto& [item, n] : inv) rec.items_seen.insert(item);
    for (auto m : world::kAllMilestones) {
      if (!rec.milestones[m] && world::count_of(inv, world::milestone_item(m)) > 0) rec.milestones[m] = iteration;
    }
  };

  int trial_index = 0;
  for (const auto& task : tasks) {
    bool solved = false;
    while (!solved && rec.iterations_used < budget && !agent.outage()) {
      TrialOptions opts;
      opts.trial_index = trial_index;
      opts.trial_id = "curriculum-" + std::to_string(trial_index);
      opts.seed = world.seed;
      opts.comm_rounds = partner ? comm_rounds : 0;
      opts.max_attempts = budget - rec.iterations_used;
      ++trial_index;
      auto trial = run_trial(agent, partner, world, task, opts);
      int iteration = rec.iterations_used;
      for (const auto& a : trial.attempts) {
        ++iteration;
        note_inventory(a.inventory_after, iteration);
      }
      rec.iterations_used += trial.prompting_iterations;
      solved = trial.success;
      rec.trials.push_back(std::move(trial));
    }
    if (!solved) break;
  }
  return rec;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_record(const AttemptRecord& a) {
  nlohmann::ordered_json j;
  j["index"] = a.index;
  j["context"] = a.context;
  j["completion"] = a.completion;
  j["script"] = a.script;
  j["parse_error"] = a.parse_error ? nlohmann::ordered_json(*a.parse_error) : nlohmann::ordered_json(nullptr);
  j["executed"] = a.executed;
  j["backend_error"] = a.backend_error;
  j["trace"] = world::to_record(a.trace);
  j["verdict"] = world::to_record(a.verdict);
  j["inventory_after"] = world::inventory_record(a.inventory_after);
  j["tick_after"] = a.tick_after;
  j["decision"] = a.decision ? nlohmann::ordered_json(std::string(comm::to_string(*a.decision)))
                             : nlohmann::ordered_json(nullptr);
  j["episodes_in_context"] = a.episodes_in_context;
  j["episode_id"] = a.episode_id ? nlohmann::ordered_json(*a.episode_id) : nlohmann::ordered_json(nullptr);
  j["skill"] = a.skill_name ? nlohmann::ordered_json(*a.skill_name) : nlohmann::ordered_json(nullptr);
  j["llm_critic"] = a.llm_critic_message ? nlohmann::ordered_json(*a.llm_critic_message) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json to_record(const TrialRecord& t) {
  nlohmann::ordered_json attempts = nlohmann::ordered_json::array();
  for (const auto& a : t.attempts) attempts.push_back(to_record(a));
  nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
  for (const auto& r : t.rounds) rounds.push_back(comm::to_record(r));
  nlohmann::ordered_json j;
  j["trial_id"] = t.trial_id;
  j["trial_index"] = t.trial_index;
  j["task"] = t.task;
  j["seed"] = t.seed;
  j["comm_rounds"] = t.comm_rounds;
  j["placement"] = std::string(to_string(t.placement));
  j["flexible"] = t.flexible;
  j["events"] = t.events;
  j["outcome"] = t.success ? "success" : "failure";
  j["prompting_iterations"] = t.prompting_iterations;
  j["outage"] = t.outage;
  j["attempts"] = std::move(attempts);
  j["rounds"] = std::move(rounds);
  return j;
}

nlohmann::ordered_json to_record(const CurriculumRecord& c) {
  nlohmann::ordered_json milestones = nlohmann::ordered_json::object();
  for (const auto& [m, it] : c.milestones) {
    milestones[std::string(world::to_string(m))] = it ? nlohmann::ordered_json(*it) : nlohmann::ordered_json(nullptr);
  }
  nlohmann::ordered_json j;
  j["budget"] = c.budget;
  j["iterations_used"] = c.iterations_used;
  j["milestones"] = std::move(milestones);
  j["items_seen"] = c.items_seen;
  j["trials"] = c.trials.size();
  return j;
}

}  // namespace culturecraft::agent
