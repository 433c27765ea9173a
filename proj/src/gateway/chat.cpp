#include <algorithm>

#include "culturecraft/gateway.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::gateway {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw std::invalid_argument("unknown chat role: " + std::string(name));
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

std::string ChatRequest::joined_content() const {
  std::string out;
  for (const auto& m : messages) {
    out += m.content;
    out += '\n';
  }
  return out;
}

ChatResponse ChatResponse::error(std::string diagnostic, bool transport) {
  ChatResponse r;
  r.content = std::move(diagnostic);
  r.finish_reason = FinishReason::error;
  r.transport_failure = transport;
  return r;
}

void validate(const ChatRequest& request) {
  if (request.messages.empty()) throw InvalidRequest("chat request has no messages");
  if (request.messages.front().role == Role::assistant) {
    throw InvalidRequest("first chat message must be a system or user message");
  }
  if (request.model_id.empty()) throw InvalidRequest("chat request has no model id");
  if (!(request.temperature >= 0.0)) throw InvalidRequest("temperature must be >= 0");
  if (request.max_tokens <= 0) throw InvalidRequest("max_tokens must be positive");
}

ChatResponse ChatBackend::complete(const ChatRequest& request) {
  validate(request);
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back(request);
  }
  ChatResponse response;
  try {
    response = dispatch(request);
  } catch (const std::exception& e) {
    response = ChatResponse::error(std::string("backend exception: ") + e.what());
  }
  if (response.ok() && response.content.empty()) {
    response = ChatResponse::error("backend returned empty content");
  }
  return response;
}

std::size_t ChatBackend::call_count() const {
  std::lock_guard lock(log_mutex_);
  return log_.size();
}

std::vector<ChatRequest> ChatBackend::call_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

// ---------------------------------------------------------------------------

RequestMatcher contains_all(std::vector<std::string> needles) {
  return [needles = std::move(needles)](const ChatRequest& request) {
    const auto text = request.joined_content();
    return std::all_of(needles.begin(), needles.end(),
                       [&](const std::string& n) { return text::contains(text, n); });
  };
}

RequestMatcher contains(std::string needle) { return contains_all({std::move(needle)}); }

RequestMatcher system_contains(std::string needle) {
  return [needle = std::move(needle)](const ChatRequest& request) {
    return request.messages.front().role == Role::system &&
           text::contains(request.messages.front().content, needle);
  };
}

RequestMatcher always() {
  return [](const ChatRequest&) { return true; };
}

ResponseTemplate fixed(std::string text) {
  return [text = std::move(text)](const ChatRequest&) { return text; };
}

ResponseTemplate sequence(std::vector<std::string> texts) {
  if (texts.empty()) throw std::invalid_argument("sequence needs at least one response");
  auto cursor = std::make_shared<std::size_t>(0);
  return [texts = std::move(texts), cursor](const ChatRequest&) {
    const auto& out = texts[*cursor % texts.size()];
    ++*cursor;
    return out;
  };
}

ScriptedOracle::ScriptedOracle(std::string default_response)
    : default_response_(std::move(default_response)) {}

ScriptedOracle& ScriptedOracle::on(RequestMatcher matcher, ResponseTemplate response) {
  std::lock_guard lock(rules_mutex_);
  rules_.push_back({std::move(matcher), std::move(response), false, false});
  return *this;
}

ScriptedOracle& ScriptedOracle::on(RequestMatcher matcher, std::string response) {
  return on(std::move(matcher), fixed(std::move(response)));
}

ScriptedOracle& ScriptedOracle::fail_on(RequestMatcher matcher, bool transport) {
  std::lock_guard lock(rules_mutex_);
  rules_.push_back({std::move(matcher), nullptr, true, transport});
  return *this;
}

ChatResponse ScriptedOracle::dispatch(const ChatRequest& request) {
  std::lock_guard lock(rules_mutex_);
  std::string content = default_response_;
  for (auto& rule : rules_) {
    if (!rule.matcher(request)) continue;
    if (rule.error) {
      return ChatResponse::error(rule.transport ? "scripted transport outage"
                                                : "scripted backend error",
                                 rule.transport);
    }
    content = rule.response(request);
    break;
  }
  ChatResponse response;
  response.content = std::move(content);
  response.usage.prompt_tokens = static_cast<int>(text::estimate_tokens(request.joined_content()));
  response.usage.completion_tokens = static_cast<int>(text::estimate_tokens(response.content));
  if (response.usage.completion_tokens > request.max_tokens) {
    response.finish_reason = FinishReason::length;
  }
  return response;
}

// ---------------------------------------------------------------------------

std::string_view to_string(BackendRole role) {
  switch (role) {
    case BackendRole::actor: return "actor";
    case BackendRole::critic: return "critic";
    case BackendRole::belief_former: return "belief_former";
    case BackendRole::conversationalist: return "conversationalist";
  }
  return "actor";
}

RoleSettings default_settings(BackendRole role) {
  RoleSettings s;
  switch (role) {
    case BackendRole::actor:
    case BackendRole::conversationalist:
      s.temperature = 0.7;
      break;
    case BackendRole::critic:
    case BackendRole::belief_former:
      s.temperature = 0.0;
      break;
  }
  return s;
}

ChatResponse RoleBinding::ask(std::vector<Message> messages, std::optional<int> max_tokens) const {
  if (!backend) return ChatResponse::error("no backend bound for this role");
  ChatRequest request;
  request.model_id = settings.model_id;
  request.messages = std::move(messages);
  request.temperature = settings.temperature;
  request.max_tokens = max_tokens.value_or(settings.max_tokens);
  return backend->complete(request);
}

}  // namespace culturecraft::gateway
