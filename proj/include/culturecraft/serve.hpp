#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "culturecraft/comm.hpp"

namespace culturecraft::serve {

/// Ordered event log plus the latest snapshot of every panel. All reads are
/// projections of published events, so replaying a log rebuilds the same view.
class SessionState {
 public:
  explicit SessionState(std::string run_id = "run");

  /// Appends {"event","seq","data"} and folds it into the snapshots.
  std::uint64_t publish(std::string_view event, const nlohmann::ordered_json& data);
  comm::EventSink sink();

  nlohmann::ordered_json state() const;
  /// Rounds of the given trial (current trial when empty); nullopt if unknown.
  std::optional<nlohmann::ordered_json> transcript(const std::string& trial_id = {}) const;
  std::optional<nlohmann::ordered_json> beliefs(const std::string& agent) const;
  std::optional<nlohmann::ordered_json> memory(const std::string& agent) const;

  /// Events with seq > since.
  std::vector<nlohmann::ordered_json> events_since(std::uint64_t since) const;
  /// Blocks until an event with seq > since exists, close() is called or the timeout passes.
  bool wait_for(std::uint64_t since, std::chrono::milliseconds timeout) const;
  std::uint64_t last_seq() const;

  void finish();
  void close();
  bool closed() const;

  /// Replays an events.jsonl file written by a previous run.
  static std::unique_ptr<SessionState> from_event_log(const std::filesystem::path& path, std::string run_id);

 private:
  void fold(std::string_view event, const nlohmann::ordered_json& data);

  std::string run_id_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<nlohmann::ordered_json> log_;
  std::uint64_t seq_ = 0;
  bool finished_ = false;
  bool closed_ = false;

  std::string current_trial_;
  int trials_started_ = 0;
  nlohmann::ordered_json current_round_;  // {"round","initiator","responder","messages","state"}
  std::map<std::string, nlohmann::ordered_json> transcripts_;  // trial_id -> array of rounds
  std::map<std::string, nlohmann::ordered_json> beliefs_;
  std::map<std::string, nlohmann::ordered_json> memory_;
  nlohmann::ordered_json world_;
  nlohmann::ordered_json last_attempt_;
};

/// HTTP front end over a SessionState. The only mutating route is the human
/// turn, which goes through HumanGate::post.
class Server {
 public:
  Server(SessionState& state, comm::HumanGate* gate = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;
};

}  // namespace culturecraft::serve
