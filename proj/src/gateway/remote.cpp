#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "culturecraft/gateway.hpp"

namespace culturecraft::gateway {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kExcerptBytes = 200;

std::string excerpt(std::string_view body) {
  if (body.size() <= kExcerptBytes) return std::string(body);
  return std::string(body.substr(0, kExcerptBytes)) + "...";
}

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.scheme_host_port = url;
  } else {
    e.scheme_host_port = url.substr(0, path_start);
    e.path_prefix = url.substr(path_start);
  }
  while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
  return e;
}

struct PostResult {
  bool transport_ok = false;
  int status = 0;
  std::string body;
  std::string diagnostic;
};

// POST with R retries and exponential backoff. Retries on transport errors,
// 429 and 5xx; other statuses are returned to the caller immediately.
PostResult post_with_retries(const RemoteConfig& config, const std::string& path,
                             const std::string& body) {
  const auto endpoint = split_url(config.base_url);
  PostResult result;
  auto delay = config.backoff;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(endpoint.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);
    auto res = client.Post(endpoint.path_prefix + path, headers, body, "application/json");
    if (!res) {
      result.transport_ok = false;
      result.diagnostic = "transport error: " + httplib::to_string(res.error());
      spdlog::warn("remote POST {} failed (attempt {}): {}", path, attempt + 1, result.diagnostic);
      continue;
    }
    result.transport_ok = true;
    result.status = res->status;
    result.body = res->body;
    if (res->status == 429 || res->status >= 500) {
      result.diagnostic = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
      spdlog::warn("remote POST {} returned {} (attempt {})", path, res->status, attempt + 1);
      result.transport_ok = false;
      continue;
    }
    return result;
  }
  return result;
}

}  // namespace

std::string serialize_chat_request(const ChatRequest& request) {
  ordered_json j;
  j["model"] = request.model_id;
  j["messages"] = ordered_json::array();
  for (const auto& m : request.messages) {
    ordered_json msg;
    msg["role"] = std::string(to_string(m.role));
    msg["content"] = m.content;
    j["messages"].push_back(std::move(msg));
  }
  j["temperature"] = request.temperature;
  j["max_tokens"] = request.max_tokens;
  if (request.seed) j["seed"] = *request.seed;
  return j.dump();
}

ChatResponse parse_chat_response(std::string_view body) {
  auto parsed = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    return ChatResponse::error("malformed completion payload: " + excerpt(body));
  }
  if (parsed.contains("error")) {
    return ChatResponse::error("remote error: " + excerpt(parsed["error"].dump()));
  }
  const auto choices = parsed.find("choices");
  if (choices == parsed.end() || !choices->is_array() || choices->empty()) {
    return ChatResponse::error("malformed completion payload (no choices): " + excerpt(body));
  }
  const auto& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    return ChatResponse::error("malformed completion payload (no message content): " + excerpt(body));
  }
  ChatResponse response;
  response.content = first["message"]["content"].get<std::string>();
  const std::string reason = first.value("finish_reason", std::string("stop"));
  response.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
  if (parsed.contains("usage") && parsed["usage"].is_object()) {
    response.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
    response.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0);
  }
  if (response.content.empty()) {
    return ChatResponse::error("remote returned empty content: " + excerpt(body));
  }
  return response;
}

RemoteConfig RemoteConfig::from_environment() { return from_environment(RemoteConfig{}); }

RemoteConfig RemoteConfig::from_environment(RemoteConfig base) {
  if (const char* url = std::getenv("CULTURECRAFT_BASE_URL"); url && *url) base.base_url = url;
  if (base.api_key.empty()) {
    if (const char* key = std::getenv("CULTURECRAFT_API_KEY"); key && *key) {
      base.api_key = key;
    } else if (const char* okey = std::getenv("OPENAI_API_KEY"); okey && *okey) {
      base.api_key = okey;
    }
  }
  if (const char* model = std::getenv("CULTURECRAFT_MODEL"); model && *model && base.model_id.empty()) {
    base.model_id = model;
  }
  return base;
}

RemoteChatBackend::RemoteChatBackend(RemoteConfig config) : config_(std::move(config)) {}

ChatResponse RemoteChatBackend::dispatch(const ChatRequest& request) {
  ChatRequest wire = request;
  if (!config_.model_id.empty()) wire.model_id = config_.model_id;
  auto result = post_with_retries(config_, "/chat/completions", serialize_chat_request(wire));
  if (!result.transport_ok) return ChatResponse::error(result.diagnostic, /*transport=*/true);
  if (result.status != 200) {
    return ChatResponse::error("HTTP " + std::to_string(result.status) + ": " + excerpt(result.body));
  }
  return parse_chat_response(result.body);
}

// ---------------------------------------------------------------------------

std::string serialize_embedding_request(const std::string& model_id, std::string_view text) {
  ordered_json j;
  j["model"] = model_id;
  j["input"] = std::string(text);
  return j.dump();
}

EmbeddingVector parse_embedding_response(std::string_view body) {
  auto parsed = nlohmann::json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array() ||
      parsed["data"].empty() || !parsed["data"][0].contains("embedding")) {
    throw EmbeddingError("malformed embedding payload: " + excerpt(body));
  }
  EmbeddingVector v;
  for (const auto& x : parsed["data"][0]["embedding"]) v.values.push_back(x.get<double>());
  if (v.values.empty()) throw EmbeddingError("empty embedding in payload");
  return v;
}

RemoteEmbedder::RemoteEmbedder(RemoteConfig config, std::size_t dimension)
    : config_(std::move(config)), dimension_(dimension) {}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) {
  if (text.empty()) throw EmbeddingError("cannot embed empty text");
  auto result = post_with_retries(config_, "/embeddings", serialize_embedding_request(config_.model_id, text));
  if (!result.transport_ok) throw EmbeddingError(result.diagnostic);
  if (result.status != 200) {
    throw EmbeddingError("HTTP " + std::to_string(result.status) + ": " + excerpt(result.body));
  }
  auto v = parse_embedding_response(result.body);
  if (v.dimension() != dimension_) {
    throw EmbeddingError("embedding dimension " + std::to_string(v.dimension()) +
                         " does not match declared " + std::to_string(dimension_));
  }
  return v;
}

}  // namespace culturecraft::gateway
