#include <algorithm>
#include <cctype>

#include <spdlog/spdlog.h>

#include "culturecraft/beliefs.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::beliefs {

using gateway::Message;
using gateway::Role;

namespace {

template <typename T>
void cap(std::vector<T>& items) {
  if (items.size() > kCategoryCap) items.erase(items.begin(), items.end() - kCategoryCap);
}

std::string or_unknown(const std::string& value, const std::string& prior) {
  if (!text::trim(value).empty()) return text::trim(value);
  return prior.empty() ? "unknown" : prior;
}

bool is_none(std::string_view s) {
  const auto c = text::canonicalize(s);
  return c.empty() || c == "none" || c == "n/a" || c == "unknown" || c == "null";
}

// Lower-cased identifier tokens with spaced ids ("dark oak log") joined up.
std::vector<std::string> entity_tokens(std::string_view statement) {
  std::string s = text::lower(statement);
  std::vector<std::string> ids = world::known_ids();
  ids.insert(ids.end(), world::known_biomes().begin(), world::known_biomes().end());
  std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& id : ids) {
    if (id.find('_') == std::string::npos) continue;
    std::string spaced = id;
    std::replace(spaced.begin(), spaced.end(), '_', ' ');
    for (auto pos = s.find(spaced); pos != std::string::npos; pos = s.find(spaced, pos + id.size())) {
      s.replace(pos, spaced.size(), id);
    }
  }
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      cur.push_back(c);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

bool is_entity(const std::string& token) {
  if (token == "day" || token == "night") return true;
  const auto& biomes = world::known_biomes();
  if (std::find(biomes.begin(), biomes.end(), token) != biomes.end()) return true;
  const auto& ids = world::known_ids();
  return std::binary_search(ids.begin(), ids.end(), token);
}

std::string bullet_list(const std::vector<std::string>& items) {
  if (items.empty()) return "none";
  std::vector<std::string> lines;
  for (const auto& s : items) lines.push_back("- " + s);
  return text::join(lines, "\n");
}

}  // namespace

// ---------------------------------------------------------------------------

bool BigToMGraph::instantiated() const {
  return !context.empty() && !desire.empty() && !percept.empty() && !belief.empty() && !action.empty();
}

std::string BigToMGraph::render() const {
  if (!instantiated()) return "(no information yet)";
  std::string out = "Context: " + context + "\nDesire: " + desire + "\nPercept: " + percept + "\nBelief: " + belief;
  if (causal_event) out += "\nCausal event: " + *causal_event;
  out += "\nAction: " + action;
  return out;
}

std::string render(const PartnerState& state) {
  if (const auto* g = std::get_if<BigToMGraph>(&state)) return g->render();
  const auto& free = std::get<std::string>(state);
  return free.empty() ? "(no information yet)" : free;
}

PartnerModel PartnerModel::fresh(std::string partner_id, bool structured) {
  PartnerModel m;
  m.partner_id = std::move(partner_id);
  if (structured) {
    m.graph = BigToMGraph{};
  } else {
    m.graph = std::string{};
  }
  return m;
}

void BeliefSet::set_perception(std::vector<std::string> statements) {
  perception = std::move(statements);
  cap(perception);
}

void BeliefSet::set_interaction(std::vector<std::string> statements) {
  interaction = std::move(statements);
  cap(interaction);
}

void BeliefSet::upsert_task(TaskBelief belief) {
  const auto key = text::canonicalize(belief.question);
  auto it = std::find_if(task.begin(), task.end(),
                         [&](const TaskBelief& t) { return text::canonicalize(t.question) == key; });
  if (it != task.end()) task.erase(it);
  task.push_back(std::move(belief));
  cap(task);
}

PartnerModel& BeliefSet::partner(const std::string& id, bool structured) {
  auto it = partners.find(id);
  if (it == partners.end()) it = partners.emplace(id, PartnerModel::fresh(id, structured)).first;
  return it->second;
}

bool BeliefSet::empty() const {
  return perception.empty() && task.empty() && interaction.empty() && partners.empty();
}

// ---------------------------------------------------------------------------

std::vector<std::string> template_perception_beliefs(const world::Percept& p) {
  std::vector<std::string> out{
      "I am in the " + p.biome + " biome.",
      "It is " + std::string(world::to_string(p.time_of_day)) + " (tick " + std::to_string(p.tick) + ").",
  };
  if (!p.nearby_resources.empty()) out.push_back("Nearby resources: " + world::render_inventory(p.nearby_resources) + ".");
  if (!p.inventory.empty()) out.push_back("My inventory holds " + world::render_inventory(p.inventory) + ".");
  return out;
}

std::vector<std::string> filter_entity_mentions(const std::vector<std::string>& statements,
                                                const world::Percept& percept) {
  const auto vocab = percept.vocabulary();
  std::vector<std::string> out;
  for (const auto& s : statements) {
    std::string unknown;
    for (const auto& token : entity_tokens(s)) {
      if (is_entity(token) && !vocab.count(token)) {
        unknown = token;
        break;
      }
    }
    if (unknown.empty()) {
      out.push_back(s);
    } else {
      spdlog::warn("dropping perception belief mentioning '{}' which is not perceived: {}", unknown, s);
    }
  }
  return out;
}

std::vector<std::string> form_perception_beliefs(const world::Percept& percept, const gateway::RoleBinding& backend) {
  std::vector<Message> prompt{
      {Role::system,
       "You turn raw observations from a crafting world into beliefs. Write one short factual statement per line "
       "about where you are, the time of day, the resources nearby and what you carry. Mention only things present "
       "in the observation."},
      {Role::user, "Observation:\n" + world::render_percept(percept)},
  };
  auto response = backend.ask(std::move(prompt));
  if (!response.ok()) {
    spdlog::warn("perception belief call failed, using templates: {}", response.content);
    return template_perception_beliefs(percept);
  }
  auto statements = filter_entity_mentions(text::parse_bullets(response.content), percept);
  if (statements.empty()) return template_perception_beliefs(percept);
  cap(statements);
  return statements;
}

std::vector<TaskBelief> form_task_beliefs(const world::TaskSpec& task, const memory::SemanticStore* semantic,
                                          const gateway::RoleBinding& backend) {
  if (text::trim(task.name).empty() || text::trim(task.canonical_question).empty()) {
    throw std::invalid_argument("task must have a name and a canonical question");
  }
  if (semantic) {
    if (auto entry = semantic->get(task.canonical_question)) return {{task.canonical_question, entry->answer}};
  }
  auto response = backend.ask({
      {Role::system,
       "You are an agent in a crafting world reflecting on your upcoming task. State in one or two sentences what "
       "you believe is required to complete it."},
      {Role::user, "Task: " + task.name + "\nQuestion: " + task.canonical_question},
  });
  if (!response.ok()) {
    spdlog::warn("task belief call failed: {}", response.content);
    return {};
  }
  return {{task.canonical_question, text::trim(response.content)}};
}

std::string interaction_system_prompt() {
  return "You are a Minecraft agent.\n\n"
         "You just had a conversation with another agent based on a task you are trying to solve.\n\n"
         "Based on the contents of the conversation and the previous beliefs, you have to create a set of beliefs "
         "that that can help you complete the task.";
}

std::string partner_system_prompt() {
  return "You are a Minecraft agent.\n\n"
         "You just had a conversation with another agent based on a task you are trying to solve.\n\n"
         "Based on the contents of the conversation and the previous beliefs, you have to create a set of beliefs "
         "that represent your perception of the other agent.";
}

std::vector<std::string> integrate_interaction_beliefs(const comm::ChatTranscript& transcript,
                                                       const std::vector<std::string>& prior,
                                                       const gateway::RoleBinding& backend) {
  if (transcript.empty()) throw std::invalid_argument("cannot integrate beliefs from an empty transcript");
  auto response = backend.ask({
      {Role::system, interaction_system_prompt()},
      {Role::user, "Conversation:\n" + transcript.render() + "\n\nPrevious beliefs:\n" + bullet_list(prior) +
                       "\n\nWrite the new set of beliefs, one per line."},
  });
  if (!response.ok()) {
    spdlog::warn("interaction belief call failed, keeping prior beliefs: {}", response.content);
    return prior;
  }
  auto beliefs = text::parse_bullets(response.content);
  if (beliefs.empty()) return prior;
  cap(beliefs);
  return beliefs;
}

BigToMGraph parse_graph(const std::string& raw, const BigToMGraph& prior) {
  std::map<std::string, std::string> fields;
  const auto trimmed = text::trim(raw);
  bool parsed_json = false;
  if (!trimmed.empty() && trimmed.front() == '{') {
    auto j = nlohmann::json::parse(trimmed, nullptr, false);
    if (j.is_object()) {
      parsed_json = true;
      for (const auto& [k, v] : j.items()) {
        auto key = text::canonicalize(k);
        std::replace(key.begin(), key.end(), '_', ' ');
        fields[key] = v.is_string() ? v.get<std::string>() : (v.is_null() ? "" : v.dump());
      }
    }
  }
  if (!parsed_json) {
    for (const auto& line : text::parse_bullets(raw)) {
      auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto key = text::canonicalize(line.substr(0, colon));
      std::replace(key.begin(), key.end(), '_', ' ');
      key.erase(std::remove(key.begin(), key.end(), '*'), key.end());
      fields[text::trim(key)] = text::trim(line.substr(colon + 1));
    }
  }
  BigToMGraph g;
  g.context = or_unknown(fields["context"], prior.context);
  g.desire = or_unknown(fields["desire"], prior.desire);
  g.percept = or_unknown(fields["percept"], prior.percept);
  g.belief = or_unknown(fields["belief"], prior.belief);
  g.action = or_unknown(fields["action"], prior.action);
  if (auto it = fields.find("causal event"); it != fields.end()) {
    if (!is_none(it->second)) g.causal_event = text::trim(it->second);
  } else {
    g.causal_event = prior.causal_event;
  }
  return g;
}

PartnerModel update_partner_model(const PartnerModel& model, const comm::ChatTranscript& transcript,
                                  const gateway::RoleBinding& backend) {
  if (transcript.messages_from(model.partner_id) == 0) {
    throw std::invalid_argument("transcript holds no message from partner " + model.partner_id);
  }
  std::string instructions;
  if (model.structured()) {
    instructions =
        "Describe " + model.partner_id + " using exactly these fields, one per line:\n"
        "Context: <the situation they are in>\n"
        "Desire: <what they want>\n"
        "Percept: <what they perceive>\n"
        "Belief: <what they believe>\n"
        "Causal event: <a change in the world the conversation reports, or none>\n"
        "Action: <what they are doing or will do>";
  } else {
    instructions = "Describe your perception of " + model.partner_id + " in one short paragraph.";
  }
  auto response = backend.ask({
      {Role::system, partner_system_prompt()},
      {Role::user, "Conversation:\n" + transcript.render() + "\n\nPrevious beliefs about " + model.partner_id +
                       ":\n" + render(model.graph) + "\n\n" + instructions},
  });
  if (!response.ok()) {
    spdlog::warn("partner model update for {} failed, keeping model: {}", model.partner_id, response.content);
    return model;
  }
  PartnerModel next = model;
  if (model.structured()) {
    next.graph = parse_graph(response.content, std::get<BigToMGraph>(model.graph));
  } else {
    next.graph = text::trim(response.content);
  }
  next.last_updated_round = model.last_updated_round + 1;
  next.revision_history.push_back({next.last_updated_round, next.graph});
  return next;
}

// ---------------------------------------------------------------------------

std::string render_belief_context(const BeliefSet& beliefs, std::size_t budget_tokens) {
  if (budget_tokens == 0) throw std::invalid_argument("belief budget must be positive");
  struct Category {
    const char* header;
    std::vector<std::string> items;
  };
  std::vector<Category> cats{{"Perception beliefs:", beliefs.perception}, {"Task beliefs:", {}},
                             {"Interaction beliefs:", beliefs.interaction}, {"Partner beliefs:", {}}};
  for (const auto& t : beliefs.task) cats[1].items.push_back(t.question + " " + t.answer);
  for (const auto& [id, m] : beliefs.partners) {
    if (m.revision_history.empty()) continue;
    std::string r = render(m.graph);
    std::replace(r.begin(), r.end(), '\n', ' ');
    cats[3].items.push_back(id + ": " + r);
  }

  auto render_all = [&] {
    std::vector<std::string> sections;
    for (const auto& c : cats) {
      if (c.items.empty()) continue;
      std::string s = c.header;
      for (const auto& item : c.items) s += "\n- " + item;
      sections.push_back(std::move(s));
    }
    return text::join(sections, "\n\n");
  };

  while (true) {
    auto out = render_all();
    if (text::estimate_tokens(out) <= budget_tokens) return out;
    std::size_t heaviest = 0;
    std::size_t heaviest_tokens = 0;
    for (std::size_t i = 0; i < cats.size(); ++i) {
      std::size_t t = 0;
      for (const auto& item : cats[i].items) t += text::estimate_tokens(item);
      if (t > heaviest_tokens) {
        heaviest = i;
        heaviest_tokens = t;
      }
    }
    if (cats[heaviest].items.empty()) return "";
    cats[heaviest].items.erase(cats[heaviest].items.begin());
  }
}

nlohmann::ordered_json to_record(const PartnerState& state) {
  if (const auto* g = std::get_if<BigToMGraph>(&state)) {
    nlohmann::ordered_json j;
    j["context"] = g->context;
    j["desire"] = g->desire;
    j["percept"] = g->percept;
    j["belief"] = g->belief;
    j["causal_event"] = g->causal_event ? nlohmann::ordered_json(*g->causal_event) : nlohmann::ordered_json(nullptr);
    j["action"] = g->action;
    return j;
  }
  return {{"free_text", std::get<std::string>(state)}};
}

nlohmann::ordered_json to_record(const PartnerModel& m) {
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  for (const auto& s : m.revision_history) history.push_back({{"round", s.round}, {"graph", to_record(s.state)}});
  nlohmann::ordered_json j;
  j["partner_id"] = m.partner_id;
  j["structured"] = m.structured();
  j["last_updated_round"] = m.last_updated_round;
  j["graph"] = to_record(m.graph);
  j["revision_history"] = std::move(history);
  return j;
}

nlohmann::ordered_json to_record(const BeliefSet& b) {
  nlohmann::ordered_json task = nlohmann::ordered_json::array();
  for (const auto& t : b.task) task.push_back({{"question", t.question}, {"answer", t.answer}});
  nlohmann::ordered_json partners = nlohmann::ordered_json::object();
  for (const auto& [id, m] : b.partners) partners[id] = to_record(m);
  nlohmann::ordered_json j;
  j["perception"] = b.perception;
  j["task"] = std::move(task);
  j["interaction"] = b.interaction;
  j["partners"] = std::move(partners);
  return j;
}

}  // namespace culturecraft::beliefs
