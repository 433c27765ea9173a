#include "culturecraft/text.hpp"
#include "culturecraft/transcript.hpp"

namespace culturecraft::comm {

const std::string& CommunicationRound::expected_speaker() const {
  return messages.size() % 2 == 0 ? initiator : responder;
}

ChatTranscript::ChatTranscript(std::string a, std::string b) : participants_(std::move(a), std::move(b)) {
  if (participants_.first.empty() || participants_.second.empty() || participants_.first == participants_.second) {
    throw std::invalid_argument("a transcript needs two distinct participants");
  }
}

bool ChatTranscript::empty() const { return message_count() == 0; }

std::size_t ChatTranscript::message_count() const {
  std::size_t n = 0;
  for (const auto& r : rounds_) n += r.messages.size();
  return n;
}

std::size_t ChatTranscript::messages_from(const std::string& sender) const {
  std::size_t n = 0;
  for (const auto& r : rounds_) {
    for (const auto& m : r.messages) n += m.sender == sender ? 1 : 0;
  }
  return n;
}

bool ChatTranscript::has_open_round() const { return open_round() != nullptr; }

const CommunicationRound* ChatTranscript::open_round() const {
  if (!rounds_.empty() && !rounds_.back().closed()) return &rounds_.back();
  return nullptr;
}

std::string ChatTranscript::other(const std::string& id) const {
  if (id == participants_.first) return participants_.second;
  if (id == participants_.second) return participants_.first;
  throw ProtocolError("'" + id + "' is not a participant of this transcript");
}

CommunicationRound& ChatTranscript::open(const std::string& initiator, std::string opening, std::int64_t tick) {
  if (has_open_round()) throw ProtocolError("a communication round is already open");
  CommunicationRound round;
  round.round_index = static_cast<int>(rounds_.size());
  round.initiator = initiator;
  round.responder = other(initiator);
  rounds_.push_back(std::move(round));
  try {
    post(initiator, std::move(opening), tick);
  } catch (...) {
    rounds_.pop_back();
    throw;
  }
  return rounds_.back();
}

const ChatMessage& ChatTranscript::post(const std::string& sender, std::string content, std::int64_t tick,
                                        bool synthesized) {
  if (!has_open_round()) throw ProtocolError("no communication round is open");
  auto& round = rounds_.back();
  if (sender != round.expected_speaker()) {
    throw ProtocolError("out of turn: expected " + round.expected_speaker() + " at turn " +
                        std::to_string(round.next_turn()) + ", got " + sender);
  }
  if (text::trim(content).empty()) throw ProtocolError("message content is empty");
  if (content.size() > kMessageCap) {
    throw ProtocolError("message exceeds " + std::to_string(kMessageCap) + " characters");
  }
  ChatMessage m;
  m.sender = sender;
  m.recipient = other(sender);
  m.content = std::move(content);
  m.round_index = round.round_index;
  m.turn_index = round.next_turn();
  m.timestamp = tick;
  m.synthesized = synthesized;
  round.messages.push_back(std::move(m));
  if (round.next_turn() == kRoundLength) round.state = RoundState::closed;
  return round.messages.back();
}

void ChatTranscript::force_close(const std::string& reason, std::int64_t tick) {
  if (!has_open_round()) return;
  auto& round = rounds_.back();
  round.force_closed = true;
  while (!round.closed()) post(round.expected_speaker(), "[no reply: " + reason + "]", tick, true);
}

std::string ChatTranscript::render() const {
  std::string out;
  for (const auto& r : rounds_) {
    out += "[round " + std::to_string(r.round_index) + "]\n";
    for (const auto& m : r.messages) out += m.sender + ": " + m.content + "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

nlohmann::ordered_json to_record(const ChatMessage& m) {
  nlohmann::ordered_json j;
  j["sender"] = m.sender;
  j["recipient"] = m.recipient;
  j["round"] = m.round_index;
  j["turn"] = m.turn_index;
  j["tick"] = m.timestamp;
  j["content"] = m.content;
  j["synthesized"] = m.synthesized;
  return j;
}

nlohmann::ordered_json to_record(const CommunicationRound& r) {
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  for (const auto& m : r.messages) messages.push_back(to_record(m));
  nlohmann::ordered_json j;
  j["round"] = r.round_index;
  j["initiator"] = r.initiator;
  j["responder"] = r.responder;
  j["state"] = r.closed() ? "closed" : "open";
  j["force_closed"] = r.force_closed;
  j["messages"] = std::move(messages);
  return j;
}

}  // namespace culturecraft::comm
