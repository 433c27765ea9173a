#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "culturecraft/gateway.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::memory {

inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr int kSummaryMaxTokens = 200;

/// Where in a run something happened.
struct Coordinates {
  int trial = 0;
  int attempt = 0;
  std::int64_t tick = 0;

  auto operator<=>(const Coordinates&) const = default;
};

// ---------------------------------------------------------------------------
// Episodic

struct Episode {
  std::string episode_id;
  std::string task;
  std::string context_snapshot;
  std::string action_script;
  std::string critic_message;
  gateway::EmbeddingVector embedding;
  Coordinates created_at;
  // Stores only accept failures; a success flag makes insert throw.
  bool success = false;

  std::string embedding_text() const;
};

/// Index ordering shared by episodic and skill retrieval: descending cosine,
/// ties broken by insertion order (older first). Returns at most k indices.
std::vector<std::size_t> rank_by_similarity(const gateway::EmbeddingVector& query,
                                            const std::vector<const gateway::EmbeddingVector*>& items,
                                            std::size_t k);

class EpisodicStore {
 public:
  explicit EpisodicStore(std::shared_ptr<gateway::EmbeddingProvider> embedder);

  /// Embeds and stores a failure episode; returns its id ("ep-000001", ...).
  std::string insert(Episode episode);
  std::vector<Episode> retrieve(std::string_view task, std::size_t k = kDefaultTopK) const;

  std::size_t size() const { return episodes_.size(); }
  const std::vector<Episode>& episodes() const { return episodes_; }

  void attach_log(const std::filesystem::path& path);
  /// Restores a stored episode (embedding included) without re-embedding.
  void restore(Episode episode);

 private:
  std::shared_ptr<gateway::EmbeddingProvider> embedder_;
  std::vector<Episode> episodes_;
  std::optional<std::filesystem::path> log_path_;
};

/// The exact summarization prompt pair for a list of episodes.
std::vector<gateway::Message> summary_prompt(const std::vector<Episode>& episodes);
std::string combine_episodes(const std::vector<Episode>& episodes);
/// Deterministic bullet list used when the backend fails.
std::string fallback_summary(const std::vector<Episode>& episodes);
/// One backend call; fallback on error. Throws std::invalid_argument on an empty list.
std::string summarize(const std::vector<Episode>& episodes, const gateway::RoleBinding& backend);

// ---------------------------------------------------------------------------
// Semantic

enum class Source { self_inference, communication, human };

std::string_view to_string(Source s);
Source source_from_string(std::string_view s);

struct SemanticEntry {
  std::string question;
  std::string answer;
  Source source = Source::self_inference;
  int revision = 1;
};

class SemanticStore {
 public:
  std::optional<SemanticEntry> get(std::string_view question) const;
  /// Overwrites any entry for the canonicalized question; revision + 1.
  SemanticEntry put(std::string_view question, std::string_view answer, Source source);
  /// Every (revision, answer) ever written for the question, oldest first.
  std::vector<std::pair<int, std::string>> history(std::string_view question) const;
  std::vector<SemanticEntry> entries() const;
  std::size_t size() const { return latest_.size(); }

  void attach_log(const std::filesystem::path& path);
  void restore(const SemanticEntry& entry);

 private:
  std::map<std::string, SemanticEntry> latest_;
  std::vector<SemanticEntry> log_;
  std::optional<std::filesystem::path> log_path_;
};

// ---------------------------------------------------------------------------
// Procedural

struct Skill {
  std::string name;
  std::string description;
  std::string script;
  gateway::EmbeddingVector embedding;
  int uses = 0;
};

class SkillRejected : public std::invalid_argument {
 public:
  SkillRejected(const std::string& what, std::optional<world::ParseError> diagnostics)
      : std::invalid_argument(what), diagnostics_(std::move(diagnostics)) {}
  const std::optional<world::ParseError>& diagnostics() const { return diagnostics_; }

 private:
  std::optional<world::ParseError> diagnostics_;
};

class SkillLibrary {
 public:
  explicit SkillLibrary(std::shared_ptr<gateway::EmbeddingProvider> embedder);

  /// Validates the script, embeds the description and stores the skill,
  /// replacing one with the same name in place.
  void insert(Skill skill);
  /// Ranked by description similarity; bumps `uses` on returned skills.
  std::vector<Skill> retrieve(std::string_view task, std::size_t k = kDefaultTopK);
  const Skill* find(std::string_view name) const;

  std::size_t size() const { return skills_.size(); }
  const std::vector<Skill>& skills() const { return skills_; }

  void attach_log(const std::filesystem::path& path);
  void restore(Skill skill);

 private:
  std::shared_ptr<gateway::EmbeddingProvider> embedder_;
  std::vector<Skill> skills_;
  std::optional<std::filesystem::path> log_path_;
};

// ---------------------------------------------------------------------------
// Per-agent bundle and persistence

struct MemoryBank {
  explicit MemoryBank(std::shared_ptr<gateway::EmbeddingProvider> embedder);

  std::shared_ptr<gateway::EmbeddingProvider> embedder;
  EpisodicStore episodic;
  SemanticStore semantic;
  SkillLibrary skills;

  /// Starts append-only logging to dir/{episodic,semantic,skills}.log.
  void persist_to(const std::filesystem::path& dir);
  /// Writes the compacted dir/snapshot.jsonl.
  void write_snapshot(const std::filesystem::path& dir) const;
  /// Loads snapshot.jsonl if present, else replays the append logs.
  static MemoryBank load(const std::filesystem::path& dir, std::shared_ptr<gateway::EmbeddingProvider> embedder);
};

nlohmann::ordered_json to_record(const Episode& e);
nlohmann::ordered_json to_record(const SemanticEntry& e);
nlohmann::ordered_json to_record(const Skill& s);
Episode episode_from_record(const nlohmann::json& j);
SemanticEntry semantic_from_record(const nlohmann::json& j);
Skill skill_from_record(const nlohmann::json& j);

/// Store dumps as JSON lines; `store` is "episodic", "semantic" or "skills".
std::vector<std::string> dump_records(const MemoryBank& bank, std::string_view store);

}  // namespace culturecraft::memory
