#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace culturecraft::comm {

inline constexpr std::size_t kMessageCap = 1500;
inline constexpr int kRoundLength = 6;

struct ChatMessage {
  std::string sender;
  std::string recipient;
  std::string content;
  int round_index = 0;
  int turn_index = 0;
  std::int64_t timestamp = 0;
  // True for placeholder turns written when a round is force-closed.
  bool synthesized = false;
};

enum class RoundState { open, closed };

struct CommunicationRound {
  int round_index = 0;
  std::string initiator;
  std::string responder;
  std::vector<ChatMessage> messages;
  RoundState state = RoundState::open;
  bool force_closed = false;

  bool closed() const { return state == RoundState::closed; }
  /// Whose turn it is in an open round.
  const std::string& expected_speaker() const;
  int next_turn() const { return static_cast<int>(messages.size()); }
};

/// Raised when an operation would break the turn-taking protocol.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Ordered two-party channel. Round indices are contiguous from 0 and at most
/// one round is open at a time.
class ChatTranscript {
 public:
  ChatTranscript() = default;
  ChatTranscript(std::string a, std::string b);

  const std::pair<std::string, std::string>& participants() const { return participants_; }
  const std::vector<CommunicationRound>& rounds() const { return rounds_; }
  bool empty() const;
  std::size_t message_count() const;
  std::size_t messages_from(const std::string& sender) const;

  bool has_open_round() const;
  const CommunicationRound* open_round() const;

  /// Opens a round whose first message is `opening`. Throws ProtocolError if a
  /// round is already open or `initiator` is not a participant.
  CommunicationRound& open(const std::string& initiator, std::string opening, std::int64_t tick);

  /// Appends the next turn of the open round; closes it after the sixth
  /// message. Throws ProtocolError for out-of-turn senders, empty or oversized
  /// content, or when no round is open.
  const ChatMessage& post(const std::string& sender, std::string content, std::int64_t tick,
                          bool synthesized = false);

  /// Pads the open round with synthesized turns and closes it.
  void force_close(const std::string& reason, std::int64_t tick);

  /// "[round R]" headed "sender: content" lines.
  std::string render() const;

 private:
  std::string other(const std::string& id) const;

  std::pair<std::string, std::string> participants_;
  std::vector<CommunicationRound> rounds_;
};

nlohmann::ordered_json to_record(const ChatMessage& message);
nlohmann::ordered_json to_record(const CommunicationRound& round);

}  // namespace culturecraft::comm
