#include <spdlog/spdlog.h>

#include "culturecraft/comm.hpp"
#include "culturecraft/text.hpp"

namespace culturecraft::comm {

using gateway::Message;
using gateway::Role;

std::string opening_message(const world::TaskSpec& task) { return "Hey, can you help me with " + task.name + "?"; }

CommunicationRound& initiate_round(ChatTranscript& transcript, const std::string& initiator,
                                   const world::TaskSpec& task, std::int64_t tick, bool last_attempt_failed) {
  if (!last_attempt_failed) throw ProtocolError("a round may only be initiated after a failed attempt");
  return transcript.open(initiator, opening_message(task), tick);
}

std::vector<Message> perspective_prompt(const std::string& self_id, const beliefs::PartnerModel& partner,
                                        const ChatTranscript& transcript) {
  const auto& other = partner.partner_id;
  std::string prompt =
      "You are a Minecraft agent named " + self_id + " and you are having a conversation with another agent named " +
      other + ".\n\n" + "Based on the current conversation and your knowledge about the other agent, " + other +
      ", take the other agent's perspective to assess and describe your current understanding, knowledge state, and "
      "likely needs from " + other + "'s perspective.\n\n" + "Here is the current conversation between you and " +
      other + ":\n" + transcript.render() + "\n\n" + "Here is your mental model of " + other + ": " +
      beliefs::render(partner.graph) + "\n\n" + "Perspective Analysis: ";
  return {{Role::user, std::move(prompt)}};
}

std::string take_perspective(const std::string& self_id, const beliefs::PartnerModel& partner,
                             const ChatTranscript& transcript, const gateway::RoleBinding& backend) {
  if (transcript.messages_from(partner.partner_id) == 0) {
    throw std::invalid_argument("perspective-taking needs at least one message from " + partner.partner_id);
  }
  auto response = backend.ask(perspective_prompt(self_id, partner, transcript));
  if (!response.ok()) {
    spdlog::warn("perspective-taking failed for {}: {}", self_id, response.content);
    return {};
  }
  return response.content;
}

std::vector<Message> reply_prompt(const ReplyContext& ctx, const ChatTranscript& transcript) {
  std::string system = "You are " + ctx.responder_id + ", an agent in a crafting world, chatting with " +
                       ctx.partner_id + ". Write your next chat message. Keep it short and concrete; put any action "
                       "script inside a ``` fenced block.";
  std::string user;
  if (ctx.task) user += "Task under discussion: " + ctx.task->name + "\n\n";
  if (ctx.beliefs) {
    auto rendered = beliefs::render_belief_context(*ctx.beliefs, ctx.belief_budget);
    if (!rendered.empty()) user += "Your beliefs:\n" + rendered + "\n\n";
  }
  if (!ctx.perspective.empty()) user += "Perspective analysis of " + ctx.partner_id + ":\n" + ctx.perspective + "\n\n";
  user += "Conversation so far:\n" + transcript.render() + "\n\nYour reply:";
  return {{Role::system, std::move(system)}, {Role::user, std::move(user)}};
}

std::optional<ChatMessage> compose_reply(ChatTranscript& transcript, const ReplyContext& ctx,
                                         const gateway::RoleBinding& backend, std::int64_t tick) {
  const auto* round = transcript.open_round();
  if (!round) throw ProtocolError("no communication round is open");
  if (round->expected_speaker() != ctx.responder_id) {
    throw ProtocolError("out of turn: expected " + round->expected_speaker() + ", got " + ctx.responder_id);
  }
  auto response = backend.ask(reply_prompt(ctx, transcript));
  if (!response.ok()) return std::nullopt;
  auto content = text::truncate_utf8(text::trim(response.content), kMessageCap);
  if (content.empty()) return std::nullopt;
  return transcript.post(ctx.responder_id, std::move(content), tick);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Decision d) { return d == Decision::ask ? "ASK" : "ATTEMPT"; }

Decision parse_decision(std::string_view completion) {
  auto t = text::trim(completion);
  while (!t.empty() && (t.back() == '.' || t.back() == '!')) t.pop_back();
  return t == "ASK" ? Decision::ask : Decision::attempt;
}

Decision decide(const world::TaskSpec& task, const std::string& belief_context, const gateway::RoleBinding& backend) {
  std::string user = "Task: " + task.name + "\n\n";
  if (!belief_context.empty()) user += belief_context + "\n\n";
  user += "Answer with exactly one word: ATTEMPT to try the task on your own, or ASK to ask your partner for help "
          "first.";
  auto response = backend.ask({
      {Role::system, "You decide whether to ask a partner for help before acting in a crafting world."},
      {Role::user, std::move(user)},
  });
  if (!response.ok()) return Decision::attempt;
  return parse_decision(response.content);
}

// ---------------------------------------------------------------------------

RoundOutcome run_round(Participant& initiator, Participant& responder, ChatTranscript& transcript,
                       const world::TaskSpec& task, std::int64_t tick, const EventSink& sink) {
  auto emit = [&](const ChatMessage& m) {
    if (sink) sink("message", to_record(m));
  };
  auto& round = initiate_round(transcript, initiator.id(), task, tick);
  const int index = round.round_index;
  if (sink) sink("round_open", {{"round", index}, {"initiator", initiator.id()}, {"responder", responder.id()}});
  emit(round.messages.back());

  RoundOutcome outcome;
  outcome.round_index = index;
  while (transcript.has_open_round()) {
    const auto& open = *transcript.open_round();
    Participant& speaker = open.expected_speaker() == initiator.id() ? initiator : responder;
    auto reply = speaker.respond(transcript, task, tick);
    if (reply) {
      auto content = text::truncate_utf8(text::trim(*reply), kMessageCap);
      if (!content.empty()) {
        emit(transcript.post(speaker.id(), std::move(content), tick));
        continue;
      }
    }
    outcome.force_closed = true;
    outcome.failure = "backend error from " + speaker.id();
    spdlog::warn("round {} force-closed: {}", index, outcome.failure);
    const auto before = transcript.rounds().back().messages.size();
    transcript.force_close("backend error", tick);
    const auto& msgs = transcript.rounds().back().messages;
    for (auto i = before; i < msgs.size(); ++i) emit(msgs[i]);
  }
  if (sink) sink("round_closed", {{"round", index}, {"force_closed", outcome.force_closed}});

  initiator.on_round_closed(transcript, task);
  responder.on_round_closed(transcript, task);
  return outcome;
}

// ---------------------------------------------------------------------------

HumanGate::HumanGate(std::string id, std::optional<std::chrono::milliseconds> timeout)
    : id_(std::move(id)), timeout_(timeout) {}

nlohmann::ordered_json HumanGate::turn_info_locked() const {
  nlohmann::ordered_json j;
  j["awaiting"] = awaiting_;
  j["round"] = round_;
  j["turn"] = turn_;
  j["speaker"] = awaiting_ ? id_ : std::string();
  return j;
}

nlohmann::ordered_json HumanGate::turn_info() const {
  std::lock_guard lock(mu_);
  return turn_info_locked();
}

bool HumanGate::awaiting() const {
  std::lock_guard lock(mu_);
  return awaiting_;
}

HumanGate::PostResult HumanGate::post(std::string content) {
  std::lock_guard lock(mu_);
  PostResult result;
  result.turn = turn_info_locked();
  if (!awaiting_ || inbox_) {
    result.error = "not the human expert's turn";
    return result;
  }
  if (text::trim(content).empty()) {
    result.error = "message is empty";
    return result;
  }
  if (content.size() > kMessageCap) {
    result.error = "message exceeds " + std::to_string(kMessageCap) + " characters";
    return result;
  }
  inbox_ = std::move(content);
  result.accepted = true;
  cv_.notify_all();
  return result;
}

void HumanGate::cancel() {
  std::lock_guard lock(mu_);
  cancelled_ = true;
  cv_.notify_all();
}

void HumanGate::set_on_await(std::function<void(const nlohmann::ordered_json&)> fn) {
  std::lock_guard lock(mu_);
  on_await_ = std::move(fn);
}

std::optional<std::string> HumanGate::respond(const ChatTranscript& transcript, const world::TaskSpec&,
                                              std::int64_t) {
  std::unique_lock lock(mu_);
  const auto* open = transcript.open_round();
  round_ = open ? open->round_index : -1;
  turn_ = open ? open->next_turn() : -1;
  awaiting_ = true;
  inbox_.reset();
  if (on_await_) {
    auto info = turn_info_locked();
    auto fn = on_await_;
    lock.unlock();
    fn(info);
    lock.lock();
  }
  auto ready = [&] { return inbox_.has_value() || cancelled_; };
  if (timeout_) {
    cv_.wait_for(lock, *timeout_, ready);
  } else {
    cv_.wait(lock, ready);
  }
  awaiting_ = false;
  std::optional<std::string> out = std::move(inbox_);
  inbox_.reset();
  return out;
}

}  // namespace culturecraft::comm
