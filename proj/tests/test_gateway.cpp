#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "culturecraft/gateway.hpp"

using namespace culturecraft::gateway;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(CULTURECRAFT_FIXTURES) + "/wire/" + name, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

ChatRequest golden_request() {
  ChatRequest r;
  r.model_id = "gpt-4";
  r.messages = {{Role::system, "You are a helpful assistant."},
                {Role::user, "How to mine 1 wood log?\nAnswer \"briefly\"."}};
  r.temperature = 0.7;
  r.max_tokens = 200;
  return r;
}

// A throwaway OpenAI-compatible server on a free loopback port.
struct Loopback {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  Loopback() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Loopback() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  RemoteConfig config(int retries = 2) const {
    RemoteConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.api_key = "test-key";
    c.model_id = "gpt-4";
    c.retries = retries;
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
  }
};

}  // namespace

TEST_CASE("request serialization matches the golden wire bytes") {
  CHECK(serialize_chat_request(golden_request()) == read_fixture("chat_request.json"));

  ChatRequest seeded;
  seeded.model_id = "mistral-7b";
  seeded.messages = {{Role::user, "Perspective Analysis: "}};
  seeded.temperature = 0.0;
  seeded.max_tokens = 512;
  seeded.seed = 42;
  CHECK(serialize_chat_request(seeded) == read_fixture("chat_request_seed.json"));
  CHECK(serialize_embedding_request("text-embedding-ada-002", "Mine 1 dirt") ==
        read_fixture("embedding_request.json"));
}

TEST_CASE("response parsing of golden bodies") {
  auto ok = parse_chat_response(read_fixture("chat_response.json"));
  CHECK(ok.ok());
  CHECK(ok.content == "Punch a tree with your bare hands.");
  CHECK(ok.finish_reason == FinishReason::stop);
  CHECK(ok.usage.prompt_tokens == 21);
  CHECK(ok.usage.completion_tokens == 9);

  auto cut = parse_chat_response(read_fixture("chat_response_length.json"));
  CHECK(cut.ok());
  CHECK(cut.finish_reason == FinishReason::length);

  auto err = parse_chat_response(read_fixture("chat_response_error.json"));
  CHECK_FALSE(err.ok());
  CHECK(err.content.find("overloaded") != std::string::npos);

  auto junk = parse_chat_response("<html>bad gateway</html>");
  CHECK_FALSE(junk.ok());
  CHECK(junk.content.find("<html>bad gateway</html>") != std::string::npos);

  auto e = parse_embedding_response(read_fixture("embedding_response.json"));
  CHECK(e.values == std::vector<double>{0.6, 0.8, 0.0});
  CHECK_THROWS_AS(parse_embedding_response("{}"), EmbeddingError);
}

TEST_CASE("invalid requests are rejected before dispatch") {
  ScriptedOracle oracle;
  ChatRequest r = golden_request();
  r.messages.clear();
  CHECK_THROWS_AS(oracle.complete(r), InvalidRequest);
  r = golden_request();
  r.messages.front().role = Role::assistant;
  CHECK_THROWS_AS(oracle.complete(r), InvalidRequest);
  r = golden_request();
  r.temperature = -0.1;
  CHECK_THROWS_AS(oracle.complete(r), InvalidRequest);
  r = golden_request();
  r.max_tokens = 0;
  CHECK_THROWS_AS(oracle.complete(r), InvalidRequest);
  CHECK(oracle.call_count() == 0);
}

TEST_CASE("scripted oracle: first match wins, sequences cycle, errors are flagged") {
  ScriptedOracle oracle("default");
  oracle.on(contains("wood"), "wood rule")
      .on(contains("log"), "log rule")
      .on(contains("seq"), sequence({"a", "b"}))
      .fail_on(contains("boom"))
      .fail_on(contains("outage"), true);
  auto ask = [&](const std::string& text) {
    ChatRequest r;
    r.model_id = "m";
    r.messages = {{Role::user, text}};
    return oracle.complete(r);
  };
  CHECK(ask("wood log").content == "wood rule");
  CHECK(ask("a log").content == "log rule");
  CHECK(ask("seq").content == "a");
  CHECK(ask("seq").content == "b");
  CHECK(ask("seq").content == "a");
  CHECK(ask("other").content == "default");
  auto err = ask("boom");
  CHECK_FALSE(err.ok());
  CHECK_FALSE(err.transport_failure);
  CHECK(ask("outage").transport_failure);
  CHECK(oracle.call_count() == 8);
  CHECK(oracle.call_log()[0].messages[0].content == "wood log");
}

TEST_CASE("identical request sequences give identical responses") {
  auto run = [] {
    ScriptedOracle oracle;
    oracle.on(contains("x"), sequence({"1", "2", "3"}));
    std::vector<std::string> out;
    for (int i = 0; i < 7; ++i) {
      ChatRequest r;
      r.model_id = "m";
      r.messages = {{Role::user, i % 2 ? "x" : "y"}};
      out.push_back(oracle.complete(r).content);
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("role bindings apply per-role defaults") {
  CHECK(default_settings(BackendRole::actor).temperature == doctest::Approx(0.7));
  CHECK(default_settings(BackendRole::conversationalist).temperature == doctest::Approx(0.7));
  CHECK(default_settings(BackendRole::critic).temperature == doctest::Approx(0.0));
  CHECK(default_settings(BackendRole::belief_former).temperature == doctest::Approx(0.0));

  auto oracle = std::make_shared<ScriptedOracle>("hi");
  RoleBinding b{oracle, default_settings(BackendRole::actor)};
  CHECK(b.ask({{Role::user, "q"}}, 64).content == "hi");
  CHECK(oracle->call_log()[0].max_tokens == 64);
  CHECK(oracle->call_log()[0].temperature == doctest::Approx(0.7));

  RoleBinding unbound;
  CHECK_FALSE(unbound.ask({{Role::user, "q"}}).ok());
}

TEST_CASE("local embeddings are deterministic, normalized and similarity-aware") {
  LocalHashEmbedder e;
  auto a = e.embed("Mine 1 wood log");
  CHECK(a.dimension() == LocalHashEmbedder::kDefaultDimension);
  CHECK(a == e.embed("Mine 1 wood log"));
  double norm = 0;
  for (double x : a.values) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  const double close = cosine_similarity(a, e.embed("Mine 3 wood logs"));
  const double far = cosine_similarity(a, e.embed("Smelt 3 iron ingots"));
  CHECK(close > far);
  CHECK_THROWS_AS(e.embed(""), EmbeddingError);
  CHECK_THROWS(cosine_similarity(a, LocalHashEmbedder(8).embed("x")));
}

TEST_CASE("remote backend sends golden bytes and retries on 5xx") {
  Loopback lb;
  std::atomic<int> hits{0};
  std::string seen_body, seen_auth, seen_path;
  lb.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      res.set_content("busy", "text/plain");
      return;
    }
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    seen_path = req.path;
    res.set_content(read_fixture("chat_response.json"), "application/json");
  });
  lb.start();

  RemoteChatBackend backend(lb.config());
  auto response = backend.complete(golden_request());
  REQUIRE(response.ok());
  CHECK(response.content == "Punch a tree with your bare hands.");
  CHECK(hits == 2);
  CHECK(seen_body == read_fixture("chat_request.json"));
  CHECK(seen_auth == "Bearer test-key");
  CHECK(seen_path == "/v1/chat/completions");
}

TEST_CASE("remote backend reports an outage after exhausting retries") {
  Loopback lb;
  std::atomic<int> hits{0};
  lb.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  lb.start();
  RemoteChatBackend backend(lb.config(2));
  auto r = backend.complete(golden_request());
  CHECK_FALSE(r.ok());
  CHECK(r.transport_failure);
  CHECK(hits == 3);
}

TEST_CASE("remote backend does not retry client errors and keeps a body excerpt") {
  Loopback lb;
  std::atomic<int> hits{0};
  lb.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content(std::string(500, 'x'), "text/plain");
  });
  lb.start();
  RemoteChatBackend backend(lb.config(3));
  auto r = backend.complete(golden_request());
  CHECK_FALSE(r.ok());
  CHECK_FALSE(r.transport_failure);
  CHECK(hits == 1);
  CHECK(r.content.find("HTTP 400") == 0);
  CHECK(r.content.size() < 300);
}

TEST_CASE("unreachable endpoint is a transport failure") {
  RemoteConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.model_id = "m";
  c.retries = 1;
  c.backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(200);
  RemoteChatBackend backend(c);
  auto r = backend.complete(golden_request());
  CHECK(r.transport_failure);
}

TEST_CASE("remote embedder checks the declared dimension") {
  Loopback lb;
  lb.server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(read_fixture("embedding_response.json"), "application/json");
  });
  lb.start();
  auto cfg = lb.config();
  cfg.model_id = "text-embedding-ada-002";
  CHECK(RemoteEmbedder(cfg, 3).embed("Mine 1 dirt").values.size() == 3);
  CHECK_THROWS_AS(RemoteEmbedder(cfg, 1536).embed("Mine 1 dirt"), EmbeddingError);
}
