#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

#include "culturecraft/memory.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::memory {

namespace {

void append_line(const std::optional<std::filesystem::path>& path, const nlohmann::ordered_json& record) {
  if (!path) return;
  std::ofstream out(*path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path->string());
  out << record.dump() << '\n';
}

nlohmann::ordered_json embedding_record(const gateway::EmbeddingVector& v) {
  return nlohmann::ordered_json(v.values);
}

gateway::EmbeddingVector embedding_from(const nlohmann::json& j) {
  gateway::EmbeddingVector v;
  v.values = j.get<std::vector<double>>();
  return v;
}

std::vector<nlohmann::json> read_lines(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace

std::vector<std::size_t> rank_by_similarity(const gateway::EmbeddingVector& query,
                                            const std::vector<const gateway::EmbeddingVector*>& items,
                                            std::size_t k) {
  std::vector<double> scores(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) scores[i] = gateway::cosine_similarity(query, *items[i]);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > k) order.resize(k);
  return order;
}

// ---------------------------------------------------------------------------

std::string Episode::embedding_text() const { return task + "\n" + critic_message + "\n" + action_script; }

EpisodicStore::EpisodicStore(std::shared_ptr<gateway::EmbeddingProvider> embedder) : embedder_(std::move(embedder)) {
  if (!embedder_) throw std::invalid_argument("episodic store needs an embedding provider");
}

std::string EpisodicStore::insert(Episode episode) {
  if (episode.success) throw std::invalid_argument("episodic memory only stores failed attempts");
  if (episode.task.empty() || episode.action_script.empty() || episode.critic_message.empty()) {
    throw std::invalid_argument("episode task, action script and critic message must be non-empty");
  }
  char id[16];
  std::snprintf(id, sizeof id, "ep-%06zu", episodes_.size() + 1);
  episode.episode_id = id;
  episode.embedding = embedder_->embed(episode.embedding_text());
  episodes_.push_back(std::move(episode));
  append_line(log_path_, to_record(episodes_.back()));
  return episodes_.back().episode_id;
}

std::vector<Episode> EpisodicStore::retrieve(std::string_view task, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (episodes_.empty()) return {};
  const auto query = embedder_->embed(task);
  std::vector<const gateway::EmbeddingVector*> items;
  for (const auto& e : episodes_) items.push_back(&e.embedding);
  std::vector<Episode> out;
  for (auto i : rank_by_similarity(query, items, k)) out.push_back(episodes_[i]);
  return out;
}

void EpisodicStore::attach_log(const std::filesystem::path& path) { log_path_ = path; }

void EpisodicStore::restore(Episode episode) { episodes_.push_back(std::move(episode)); }

std::string combine_episodes(const std::vector<Episode>& episodes) {
  std::string out;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    out += "\n\nEpisode " + std::to_string(i + 1) + "\nTask: " + e.task + "\nAction script:\n" + e.action_script +
           "\nCritic message: " + e.critic_message;
  }
  return out;
}

std::vector<gateway::Message> summary_prompt(const std::vector<Episode>& episodes) {
  return {
      {gateway::Role::system,
       "You are a helpful assistant tasked with summarizing past experience episodes and pointing out the causes "
       "of failure. Create a concise summary."},
      {gateway::Role::user, "Please summarize these episodes and why they failed:" + combine_episodes(episodes)},
  };
}

std::string fallback_summary(const std::vector<Episode>& episodes) {
  std::vector<std::string> lines;
  for (const auto& e : episodes) lines.push_back("- " + e.task + ": " + e.critic_message);
  return text::join(lines, "\n");
}

std::string summarize(const std::vector<Episode>& episodes, const gateway::RoleBinding& backend) {
  if (episodes.empty()) throw std::invalid_argument("nothing to summarize");
  auto response = backend.ask(summary_prompt(episodes), kSummaryMaxTokens);
  if (!response.ok()) {
    spdlog::warn("episode summary failed, using fallback: {}", response.content);
    return fallback_summary(episodes);
  }
  return response.content;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Source s) {
  switch (s) {
    case Source::self_inference: return "self_inference";
    case Source::communication: return "communication";
    case Source::human: return "human";
  }
  return "";
}

Source source_from_string(std::string_view s) {
  if (s == "self_inference") return Source::self_inference;
  if (s == "communication") return Source::communication;
  if (s == "human") return Source::human;
  throw std::invalid_argument("unknown semantic source: " + std::string(s));
}

std::optional<SemanticEntry> SemanticStore::get(std::string_view question) const {
  auto it = latest_.find(text::canonicalize(question));
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

SemanticEntry SemanticStore::put(std::string_view question, std::string_view answer, Source source) {
  const auto key = text::canonicalize(question);
  const auto value = text::trim(answer);
  if (key.empty() || value.empty()) throw std::invalid_argument("semantic question and answer must be non-empty");
  SemanticEntry entry{key, value, source, 1};
  if (auto it = latest_.find(key); it != latest_.end()) entry.revision = it->second.revision + 1;
  latest_[key] = entry;
  log_.push_back(entry);
  append_line(log_path_, to_record(entry));
  return entry;
}

std::vector<std::pair<int, std::string>> SemanticStore::history(std::string_view question) const {
  const auto key = text::canonicalize(question);
  std::vector<std::pair<int, std::string>> out;
  for (const auto& e : log_) {
    if (e.question == key) out.emplace_back(e.revision, e.answer);
  }
  return out;
}

std::vector<SemanticEntry> SemanticStore::entries() const {
  std::vector<SemanticEntry> out;
  for (const auto& [k, e] : latest_) out.push_back(e);
  return out;
}

void SemanticStore::attach_log(const std::filesystem::path& path) { log_path_ = path; }

void SemanticStore::restore(const SemanticEntry& entry) {
  auto it = latest_.find(entry.question);
  if (it == latest_.end() || it->second.revision < entry.revision) latest_[entry.question] = entry;
  log_.push_back(entry);
}

// ---------------------------------------------------------------------------

SkillLibrary::SkillLibrary(std::shared_ptr<gateway::EmbeddingProvider> embedder) : embedder_(std::move(embedder)) {
  if (!embedder_) throw std::invalid_argument("skill library needs an embedding provider");
}

void SkillLibrary::insert(Skill skill) {
  if (skill.name.empty() || skill.description.empty()) {
    throw SkillRejected("skill name and description must be non-empty", std::nullopt);
  }
  auto parsed = world::parse_script(skill.script);
  if (!parsed) throw SkillRejected("skill script does not parse: " + parsed.error->to_string(), parsed.error);
  skill.embedding = embedder_->embed(skill.description);
  auto it = std::find_if(skills_.begin(), skills_.end(), [&](const Skill& s) { return s.name == skill.name; });
  if (it != skills_.end()) {
    *it = std::move(skill);
    append_line(log_path_, to_record(*it));
  } else {
    skills_.push_back(std::move(skill));
    append_line(log_path_, to_record(skills_.back()));
  }
}

std::vector<Skill> SkillLibrary::retrieve(std::string_view task, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (skills_.empty()) return {};
  const auto query = embedder_->embed(task);
  std::vector<const gateway::EmbeddingVector*> items;
  for (const auto& s : skills_) items.push_back(&s.embedding);
  std::vector<Skill> out;
  for (auto i : rank_by_similarity(query, items, k)) {
    skills_[i].uses += 1;
    out.push_back(skills_[i]);
  }
  return out;
}

const Skill* SkillLibrary::find(std::string_view name) const {
  for (const auto& s : skills_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void SkillLibrary::attach_log(const std::filesystem::path& path) { log_path_ = path; }

void SkillLibrary::restore(Skill skill) {
  auto it = std::find_if(skills_.begin(), skills_.end(), [&](const Skill& s) { return s.name == skill.name; });
  if (it != skills_.end()) {
    *it = std::move(skill);
  } else {
    skills_.push_back(std::move(skill));
  }
}

// ---------------------------------------------------------------------------

MemoryBank::MemoryBank(std::shared_ptr<gateway::EmbeddingProvider> embedder_)
    : embedder(embedder_), episodic(embedder_), skills(embedder_) {}

void MemoryBank::persist_to(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  episodic.attach_log(dir / "episodic.log");
  semantic.attach_log(dir / "semantic.log");
  skills.attach_log(dir / "skills.log");
}

void MemoryBank::write_snapshot(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "snapshot.jsonl", std::ios::trunc);
  for (const char* store : {"episodic", "semantic", "skills"}) {
    for (const auto& line : dump_records(*this, store)) out << line << '\n';
  }
}

MemoryBank MemoryBank::load(const std::filesystem::path& dir, std::shared_ptr<gateway::EmbeddingProvider> embedder) {
  MemoryBank bank(std::move(embedder));
  auto load_record = [&bank](const nlohmann::json& j) {
    const auto store = j.at("store").get<std::string>();
    if (store == "episodic") {
      bank.episodic.restore(episode_from_record(j));
    } else if (store == "semantic") {
      bank.semantic.restore(semantic_from_record(j));
    } else if (store == "skills") {
      bank.skills.restore(skill_from_record(j));
    }
  };
  if (std::filesystem::exists(dir / "snapshot.jsonl")) {
    for (const auto& j : read_lines(dir / "snapshot.jsonl")) load_record(j);
    return bank;
  }
  for (const char* name : {"episodic.log", "semantic.log", "skills.log"}) {
    if (std::filesystem::exists(dir / name)) {
      for (const auto& j : read_lines(dir / name)) load_record(j);
    }
  }
  return bank;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_record(const Episode& e) {
  nlohmann::ordered_json j;
  j["store"] = "episodic";
  j["episode_id"] = e.episode_id;
  j["task"] = e.task;
  j["context_snapshot"] = e.context_snapshot;
  j["action_script"] = e.action_script;
  j["critic_message"] = e.critic_message;
  j["created_at"] = {{"trial", e.created_at.trial}, {"attempt", e.created_at.attempt}, {"tick", e.created_at.tick}};
  j["embedding"] = embedding_record(e.embedding);
  return j;
}

nlohmann::ordered_json to_record(const SemanticEntry& e) {
  nlohmann::ordered_json j;
  j["store"] = "semantic";
  j["question"] = e.question;
  j["answer"] = e.answer;
  j["source"] = std::string(to_string(e.source));
  j["revision"] = e.revision;
  return j;
}

nlohmann::ordered_json to_record(const Skill& s) {
  nlohmann::ordered_json j;
  j["store"] = "skills";
  j["name"] = s.name;
  j["description"] = s.description;
  j["script"] = s.script;
  j["uses"] = s.uses;
  j["embedding"] = embedding_record(s.embedding);
  return j;
}

Episode episode_from_record(const nlohmann::json& j) {
  Episode e;
  e.episode_id = j.at("episode_id").get<std::string>();
  e.task = j.at("task").get<std::string>();
  e.context_snapshot = j.value("context_snapshot", "");
  e.action_script = j.at("action_script").get<std::string>();
  e.critic_message = j.at("critic_message").get<std::string>();
  const auto& at = j.at("created_at");
  e.created_at = {at.at("trial").get<int>(), at.at("attempt").get<int>(), at.at("tick").get<std::int64_t>()};
  e.embedding = embedding_from(j.at("embedding"));
  return e;
}

SemanticEntry semantic_from_record(const nlohmann::json& j) {
  return {j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
          source_from_string(j.at("source").get<std::string>()), j.at("revision").get<int>()};
}

Skill skill_from_record(const nlohmann::json& j) {
  Skill s;
  s.name = j.at("name").get<std::string>();
  s.description = j.at("description").get<std::string>();
  s.script = j.at("script").get<std::string>();
  s.uses = j.value("uses", 0);
  s.embedding = embedding_from(j.at("embedding"));
  return s;
}

std::vector<std::string> dump_records(const MemoryBank& bank, std::string_view store) {
  std::vector<std::string> out;
  if (store == "episodic") {
    for (const auto& e : bank.episodic.episodes()) out.push_back(to_record(e).dump());
  } else if (store == "semantic") {
    for (const auto& e : bank.semantic.entries()) out.push_back(to_record(e).dump());
  } else if (store == "skills") {
    for (const auto& s : bank.skills.skills()) out.push_back(to_record(s).dump());
  } else {
    throw std::invalid_argument("unknown store: " + std::string(store));
  }
  return out;
}

}  // namespace culturecraft::memory
