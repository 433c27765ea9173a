#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace culturecraft::gateway {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  // Concatenation of every message body; what scripted matchers look at.
  std::string joined_content() const;
  bool operator==(const ChatRequest&) const = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  // Set when a remote backend gave up after exhausting its retries.
  bool transport_failure = false;

  bool ok() const { return finish_reason != FinishReason::error; }

  static ChatResponse error(std::string diagnostic, bool transport = false);
};

/// Thrown for requests that violate ChatRequest invariants. Raised before any
/// dispatch so a malformed request never reaches a backend or its call log.
class InvalidRequest : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void validate(const ChatRequest& request);

/// A chat-completion backend. `complete` validates, dispatches and appends the
/// request to the call log; transport problems come back as error responses.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  ChatResponse complete(const ChatRequest& request);

  std::size_t call_count() const;
  std::vector<ChatRequest> call_log() const;

 protected:
  virtual ChatResponse dispatch(const ChatRequest& request) = 0;

 private:
  mutable std::mutex log_mutex_;
  std::vector<ChatRequest> log_;
};

// ---------------------------------------------------------------------------
// Scripted oracle

using RequestMatcher = std::function<bool(const ChatRequest&)>;
using ResponseTemplate = std::function<std::string(const ChatRequest&)>;

/// Matches when any message content contains every needle.
RequestMatcher contains_all(std::vector<std::string> needles);
RequestMatcher contains(std::string needle);
/// Matches on the system message only.
RequestMatcher system_contains(std::string needle);
RequestMatcher always();

struct ScriptRule {
  RequestMatcher matcher;
  ResponseTemplate response;
  // Error rules simulate backend failure (transport=true mimics an outage).
  bool error = false;
  bool transport = false;
};

ResponseTemplate fixed(std::string text);
/// Cycles through `texts` on successive matches of this rule.
ResponseTemplate sequence(std::vector<std::string> texts);

/// Deterministic table-driven mock. First matching rule wins; identical
/// request sequences produce identical response sequences.
class ScriptedOracle : public ChatBackend {
 public:
  explicit ScriptedOracle(std::string default_response = "OK");

  ScriptedOracle& on(RequestMatcher matcher, ResponseTemplate response);
  ScriptedOracle& on(RequestMatcher matcher, std::string response);
  ScriptedOracle& fail_on(RequestMatcher matcher, bool transport = false);

 protected:
  ChatResponse dispatch(const ChatRequest& request) override;

 private:
  std::mutex rules_mutex_;
  std::vector<ScriptRule> rules_;
  std::string default_response_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible wire format and remote backend

std::string serialize_chat_request(const ChatRequest& request);
/// Parses a chat-completions body. Malformed bodies yield an error response
/// carrying an excerpt of the raw body.
ChatResponse parse_chat_response(std::string_view body);

struct RemoteConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model_id;
  std::chrono::milliseconds timeout{60000};
  int retries = 2;
  std::chrono::milliseconds backoff{500};

  /// Fills unset fields from CULTURECRAFT_BASE_URL, CULTURECRAFT_API_KEY
  /// (falling back to OPENAI_API_KEY) and CULTURECRAFT_MODEL.
  static RemoteConfig from_environment();
  static RemoteConfig from_environment(RemoteConfig base);
};

class RemoteChatBackend : public ChatBackend {
 public:
  explicit RemoteChatBackend(RemoteConfig config);

  const RemoteConfig& config() const { return config_; }

 protected:
  ChatResponse dispatch(const ChatRequest& request) override;

 private:
  RemoteConfig config_;
};

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  /// Throws EmbeddingError on empty text or backend failure.
  virtual EmbeddingVector embed(std::string_view text) = 0;
};

/// Hashed bag of words plus boundary-marked character trigrams, L2-normalized.
class LocalHashEmbedder : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 256;

  explicit LocalHashEmbedder(std::size_t dimension = kDefaultDimension);

  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) override;

 private:
  std::size_t dimension_;
};

std::string serialize_embedding_request(const std::string& model_id,
                                        std::string_view text);
EmbeddingVector parse_embedding_response(std::string_view body);

class RemoteEmbedder : public EmbeddingProvider {
 public:
  RemoteEmbedder(RemoteConfig config, std::size_t dimension);

  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) override;

 private:
  RemoteConfig config_;
  std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// Per-role bindings

enum class BackendRole { actor, critic, belief_former, conversationalist };

std::string_view to_string(BackendRole role);

struct RoleSettings {
  std::string model_id = "scripted";
  double temperature = 0.0;
  int max_tokens = 512;
};

/// Temperature defaults: 0.0 for critic and belief formation, 0.7 for action
/// generation and conversation.
RoleSettings default_settings(BackendRole role);

struct RoleBinding {
  std::shared_ptr<ChatBackend> backend;
  RoleSettings settings;

  explicit operator bool() const { return backend != nullptr; }
  ChatResponse ask(std::vector<Message> messages,
                   std::optional<int> max_tokens = std::nullopt) const;
};

}  // namespace culturecraft::gateway
