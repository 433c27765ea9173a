#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "culturecraft/beliefs.hpp"
#include "culturecraft/gateway.hpp"
#include "culturecraft/transcript.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::comm {

/// "Hey, can you help me with <task>?"
std::string opening_message(const world::TaskSpec& task);

/// Opens a round with the templated request for help. Under the default
/// protocol a round may only follow a failed attempt.
CommunicationRound& initiate_round(ChatTranscript& transcript, const std::string& initiator,
                                   const world::TaskSpec& task, std::int64_t tick, bool last_attempt_failed = true);

std::vector<gateway::Message> perspective_prompt(const std::string& self_id, const beliefs::PartnerModel& partner,
                                                 const ChatTranscript& transcript);
/// Internal analysis of the partner's view; never sent on the channel.
/// Backend errors yield an empty string.
std::string take_perspective(const std::string& self_id, const beliefs::PartnerModel& partner,
                             const ChatTranscript& transcript, const gateway::RoleBinding& backend);

struct ReplyContext {
  std::string responder_id;
  std::string partner_id;
  const world::TaskSpec* task = nullptr;
  const beliefs::BeliefSet* beliefs = nullptr;
  std::size_t belief_budget = 600;
  // Omitted from the prompt when empty.
  std::string perspective;
};

std::vector<gateway::Message> reply_prompt(const ReplyContext& ctx, const ChatTranscript& transcript);

/// Generates and posts the responder's next message. Returns nullopt (and
/// posts nothing) when the backend fails. Throws ProtocolError out of turn.
std::optional<ChatMessage> compose_reply(ChatTranscript& transcript, const ReplyContext& ctx,
                                         const gateway::RoleBinding& backend, std::int64_t tick);

// ---------------------------------------------------------------------------
// Flexible protocol

enum class Decision { attempt, ask };

std::string_view to_string(Decision d);
/// Exact-token parse of ATTEMPT / ASK; anything else is ATTEMPT.
Decision parse_decision(std::string_view completion);
Decision decide(const world::TaskSpec& task, const std::string& belief_context, const gateway::RoleBinding& backend);

// ---------------------------------------------------------------------------
// Rounds

/// One side of a conversation.
class Participant {
 public:
  virtual ~Participant() = default;
  virtual const std::string& id() const = 0;
  /// Next message for the open round; nullopt signals a hard failure.
  virtual std::optional<std::string> respond(const ChatTranscript& transcript, const world::TaskSpec& task,
                                             std::int64_t tick) = 0;
  /// Post-round belief integration and partner-model update.
  virtual void on_round_closed(const ChatTranscript& transcript, const world::TaskSpec& task) = 0;
};

using EventSink = std::function<void(std::string_view event, const nlohmann::ordered_json& data)>;

struct RoundOutcome {
  int round_index = 0;
  bool force_closed = false;
  std::string failure;
};

/// Runs one six-message round to closure, then lets the initiator and the
/// responder (in that order) integrate it.
RoundOutcome run_round(Participant& initiator, Participant& responder, ChatTranscript& transcript,
                       const world::TaskSpec& task, std::int64_t tick, const EventSink& sink = {});

/// A human expert's side of the channel. `respond` blocks until `post`
/// delivers a message (or the optional timeout elapses).
class HumanGate : public Participant {
 public:
  explicit HumanGate(std::string id, std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  struct PostResult {
    bool accepted = false;
    std::string error;
    nlohmann::ordered_json turn;
  };

  PostResult post(std::string content);
  bool awaiting() const;
  /// {"awaiting", "round", "turn", "speaker"}.
  nlohmann::ordered_json turn_info() const;
  /// Unblocks a pending respond() with a failure.
  void cancel();
  /// Called (without the lock held) whenever the gate starts waiting.
  void set_on_await(std::function<void(const nlohmann::ordered_json& turn)> fn);

  const std::string& id() const override { return id_; }
  std::optional<std::string> respond(const ChatTranscript& transcript, const world::TaskSpec& task,
                                     std::int64_t tick) override;
  void on_round_closed(const ChatTranscript&, const world::TaskSpec&) override {}

 private:
  nlohmann::ordered_json turn_info_locked() const;

  std::string id_;
  std::optional<std::chrono::milliseconds> timeout_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool awaiting_ = false;
  bool cancelled_ = false;
  int round_ = -1;
  int turn_ = -1;
  std::optional<std::string> inbox_;
  std::function<void(const nlohmann::ordered_json&)> on_await_;
};

}  // namespace culturecraft::comm
