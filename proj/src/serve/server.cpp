#include "culturecraft/serve.hpp"

#include <fstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace culturecraft::serve {

using nlohmann::ordered_json;

SessionState::SessionState(std::string run_id) : run_id_(std::move(run_id)) {}

std::uint64_t SessionState::publish(std::string_view event, const ordered_json& data) {
  std::uint64_t seq;
  {
    std::lock_guard lock(mu_);
    seq = ++seq_;
    ordered_json e;
    e["event"] = std::string(event);
    e["seq"] = seq;
    e["data"] = data;
    log_.push_back(std::move(e));
    fold(event, data);
  }
  cv_.notify_all();
  return seq;
}

comm::EventSink SessionState::sink() {
  return [this](std::string_view event, const ordered_json& data) { publish(event, data); };
}

void SessionState::fold(std::string_view event, const ordered_json& data) {
  if (event == "trial_start") {
    current_trial_ = data.value("trial_id", std::string());
    ++trials_started_;
    transcripts_[current_trial_] = ordered_json::array();
    current_round_ = nullptr;
  } else if (event == "round_open") {
    current_round_ = {{"round", data["round"]},
                      {"initiator", data["initiator"]},
                      {"responder", data["responder"]},
                      {"state", "open"},
                      {"force_closed", false},
                      {"messages", ordered_json::array()}};
  } else if (event == "message") {
    if (current_round_.is_null()) return;
    current_round_["messages"].push_back(data);
  } else if (event == "round_closed") {
    if (current_round_.is_null()) return;
    current_round_["state"] = "closed";
    current_round_["force_closed"] = data.value("force_closed", false);
    transcripts_[current_trial_].push_back(current_round_);
    current_round_ = nullptr;
  } else if (event == "beliefs") {
    beliefs_[data.value("agent", std::string())] = data["beliefs"];
  } else if (event == "memory") {
    memory_[data.value("agent", std::string())] = data;
  } else if (event == "world") {
    world_ = data;
  } else if (event == "attempt") {
    last_attempt_ = data;
  } else if (event == "run_finished") {
    finished_ = true;
  }
}

ordered_json SessionState::state() const {
  std::lock_guard lock(mu_);
  ordered_json j;
  j["run_id"] = run_id_;
  j["trial_id"] = current_trial_;
  j["trials_started"] = trials_started_;
  const auto it = transcripts_.find(current_trial_);
  const int closed = it == transcripts_.end() ? 0 : static_cast<int>(it->second.size());
  j["rounds_closed"] = closed;
  j["round_open"] = !current_round_.is_null();
  j["round"] = current_round_.is_null() ? closed : current_round_["round"].get<int>();
  j["turn"] = current_round_.is_null() ? 0 : static_cast<int>(current_round_["messages"].size());
  j["last_attempt"] = last_attempt_.is_null()
                          ? ordered_json(nullptr)
                          : ordered_json{{"index", last_attempt_["index"]},
                                         {"success", last_attempt_["verdict"]["success"]}};
  j["world"] = world_;
  j["finished"] = finished_;
  j["seq"] = seq_;
  return j;
}

std::optional<ordered_json> SessionState::transcript(const std::string& trial_id) const {
  std::lock_guard lock(mu_);
  const std::string& id = trial_id.empty() ? current_trial_ : trial_id;
  auto it = transcripts_.find(id);
  if (it == transcripts_.end()) return std::nullopt;
  ordered_json rounds = it->second;
  if (id == current_trial_ && !current_round_.is_null()) rounds.push_back(current_round_);
  return ordered_json{{"trial_id", id}, {"rounds", std::move(rounds)}};
}

std::optional<ordered_json> SessionState::beliefs(const std::string& agent) const {
  std::lock_guard lock(mu_);
  auto it = beliefs_.find(agent);
  if (it == beliefs_.end()) return std::nullopt;
  return std::optional<ordered_json>(it->second);
}

std::optional<ordered_json> SessionState::memory(const std::string& agent) const {
  std::lock_guard lock(mu_);
  auto it = memory_.find(agent);
  if (it == memory_.end()) return std::nullopt;
  return std::optional<ordered_json>(it->second);
}

std::vector<ordered_json> SessionState::events_since(std::uint64_t since) const {
  std::lock_guard lock(mu_);
  // seq is 1-based and dense, so log_[since] is the first newer event.
  if (since >= log_.size()) return {};
  return {log_.begin() + static_cast<std::ptrdiff_t>(since), log_.end()};
}

bool SessionState::wait_for(std::uint64_t since, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return seq_ > since || closed_; }) && seq_ > since;
}

std::uint64_t SessionState::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

void SessionState::finish() { publish("run_finished", ordered_json::object()); }

void SessionState::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool SessionState::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::unique_ptr<SessionState> SessionState::from_event_log(const std::filesystem::path& path, std::string run_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log " + path.string());
  auto state = std::make_unique<SessionState>(std::move(run_id));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto e = ordered_json::parse(line);
    state->publish(e.at("event").get<std::string>(), e.at("data"));
  }
  return state;
}

// ---------------------------------------------------------------------------

struct Server::Impl {
  SessionState& state;
  comm::HumanGate* gate;
  httplib::Server http;
  std::thread thread;
};

namespace {

void reply(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void not_found(httplib::Response& res, const std::string& what) { reply(res, 404, {{"error", what}}); }

}  // namespace

Server::Server(SessionState& state, comm::HumanGate* gate) : impl_(new Impl{state, gate, {}, {}}) {
  auto& http = impl_->http;
  auto* impl = impl_.get();

  http.Get("/api/v1/state", [impl](const httplib::Request&, httplib::Response& res) {
    auto j = impl->state.state();
    j["human_turn"] = impl->gate ? impl->gate->turn_info() : ordered_json(nullptr);
    reply(res, 200, j);
  });

  http.Get("/api/v1/transcript", [impl](const httplib::Request& req, httplib::Response& res) {
    auto t = impl->state.transcript(req.get_param_value("trial"));
    if (!t) return not_found(res, "unknown trial");
    reply(res, 200, *t);
  });

  http.Get("/api/v1/beliefs", [impl](const httplib::Request& req, httplib::Response& res) {
    const auto agent = req.get_param_value("agent");
    if (agent.empty()) return reply(res, 400, {{"error", "missing agent parameter"}});
    auto b = impl->state.beliefs(agent);
    if (!b) return not_found(res, "no belief snapshot for agent " + agent);
    reply(res, 200, {{"agent", agent}, {"beliefs", *b}});
  });

  http.Get("/api/v1/memory", [impl](const httplib::Request& req, httplib::Response& res) {
    const auto agent = req.get_param_value("agent");
    const auto store = req.has_param("store") ? req.get_param_value("store") : std::string();
    if (agent.empty()) return reply(res, 400, {{"error", "missing agent parameter"}});
    if (!store.empty() && store != "episodic" && store != "semantic" && store != "skills") {
      return reply(res, 400, {{"error", "store must be episodic, semantic or skills"}});
    }
    auto m = impl->state.memory(agent);
    if (!m) return not_found(res, "no memory snapshot for agent " + agent);
    if (store.empty()) return reply(res, 200, *m);
    reply(res, 200, {{"agent", agent}, {"store", store}, {"records", (*m)[store]}});
  });

  http.Post("/api/v1/message", [impl](const httplib::Request& req, httplib::Response& res) {
    if (!impl->gate) return not_found(res, "this session has no human turn");
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("content") || !body["content"].is_string()) {
      return reply(res, 400, {{"error", "body must be a JSON object with a string 'content'"}});
    }
    auto result = impl->gate->post(body["content"].get<std::string>());
    const auto& t = result.turn;
    if (result.accepted) return reply(res, 200, {{"accepted", true}, {"round", t["round"]}, {"turn", t["turn"]}});
    // Turn violations are conflicts; malformed content is a bad request.
    const int status = result.error.rfind("not the", 0) == 0 ? 409 : 400;
    reply(res, status, {{"accepted", false}, {"error", result.error}, {"awaiting", t["awaiting"]}, {"turn", t["turn"]}});
  });

  // Server-sent events. ?since=N resumes after seq N; ?follow=0 returns the
  // backlog and closes.
  http.Get("/api/v1/events", [impl](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    if (req.has_param("since")) {
      try {
        since = std::stoull(req.get_param_value("since"));
      } catch (const std::exception&) {
        return reply(res, 400, {{"error", "since must be a non-negative integer"}});
      }
    }
    const bool follow = req.get_param_value("follow") != "0";
    auto cursor = std::make_shared<std::uint64_t>(since);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [impl, cursor, follow](std::size_t, httplib::DataSink& sink) {
      for (const auto& e : impl->state.events_since(*cursor)) {
        const std::string frame = "id: " + std::to_string(e["seq"].get<std::uint64_t>()) +
                                  "\nevent: " + e["event"].get<std::string>() + "\ndata: " + e.dump() + "\n\n";
        if (!sink.write(frame.data(), frame.size())) return false;
        *cursor = e["seq"].get<std::uint64_t>();
      }
      if (!follow || impl->state.closed()) {
        sink.done();
        return true;
      }
      if (!impl->state.wait_for(*cursor, std::chrono::milliseconds(250))) {
        // Keep-alive comment so dead clients are detected.
        static constexpr char ping[] = ": ping\n\n";
        if (!sink.write(ping, sizeof ping - 1)) return false;
      }
      return true;
    });
  });
}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  auto& http = impl_->http;
  port_ = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  spdlog::info("serving on http://{}:{}/api/v1", host, port_);
  return port_;
}

void Server::stop() {
  if (!impl_) return;
  impl_->state.close();
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace culturecraft::serve
