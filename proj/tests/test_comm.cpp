#include <doctest.h>

#include <atomic>
#include <thread>

#include "culturecraft/comm.hpp"

using namespace culturecraft;
using namespace culturecraft::comm;

namespace {

const world::TaskSpec& wood() { return world::find_task("mine_wood"); }

// Participant that answers with a fixed reply per turn and records closures.
struct Canned : Participant {
  std::string name;
  std::vector<std::optional<std::string>> replies;
  std::size_t next = 0;
  int closed = 0;
  std::vector<std::string>* order = nullptr;

  explicit Canned(std::string id) : name(std::move(id)) {}
  const std::string& id() const override { return name; }
  std::optional<std::string> respond(const ChatTranscript& t, const world::TaskSpec&, std::int64_t) override {
    if (next < replies.size()) return replies[next++];
    return name + " turn " + std::to_string(t.open_round()->next_turn());
  }
  void on_round_closed(const ChatTranscript&, const world::TaskSpec&) override {
    ++closed;
    if (order) order->push_back(name);
  }
};

}  // namespace

TEST_CASE("a round alternates speakers and closes after six messages") {
  ChatTranscript t("novice", "expert");
  auto& r = t.open("novice", "help?", 0);
  CHECK(r.round_index == 0);
  CHECK(r.responder == "expert");
  CHECK(r.expected_speaker() == "expert");
  for (int turn = 1; turn < kRoundLength; ++turn) {
    const std::string speaker = turn % 2 ? "expert" : "novice";
    CHECK_THROWS_AS(t.post(speaker == "expert" ? "novice" : "expert", "x", 0), ProtocolError);
    const auto& m = t.post(speaker, "m" + std::to_string(turn), turn);
    CHECK(m.turn_index == turn);
    CHECK(m.recipient != speaker);
  }
  CHECK_FALSE(t.has_open_round());
  CHECK(t.rounds()[0].closed());
  CHECK_THROWS_AS(t.post("novice", "late", 9), ProtocolError);
  CHECK(t.message_count() == 6);
  CHECK(t.messages_from("expert") == 3);

  auto& r2 = t.open("expert", "again", 10);
  CHECK(r2.round_index == 1);
  CHECK_THROWS_AS(t.open("novice", "third", 11), ProtocolError);
}

TEST_CASE("content limits and participant checks") {
  ChatTranscript t("a", "b");
  CHECK_THROWS_AS(t.open("c", "hi", 0), ProtocolError);
  CHECK(t.rounds().empty());
  CHECK_THROWS_AS(t.open("a", "   ", 0), ProtocolError);
  CHECK(t.rounds().empty());
  t.open("a", "hi", 0);
  CHECK_THROWS_AS(t.post("b", std::string(kMessageCap + 1, 'x'), 0), ProtocolError);
  CHECK_NOTHROW(t.post("b", std::string(kMessageCap, 'x'), 0));
  CHECK_THROWS_AS(ChatTranscript("a", "a"), std::invalid_argument);
}

TEST_CASE("force close pads the open round with synthesized turns") {
  ChatTranscript t("a", "b");
  t.open("a", "hi", 0);
  t.post("b", "hello", 0);
  t.force_close("timeout", 1);
  const auto& r = t.rounds().back();
  CHECK(r.closed());
  CHECK(r.force_closed);
  REQUIRE(r.messages.size() == 6);
  CHECK(r.messages[2].synthesized);
  CHECK(r.messages[2].sender == "a");
  CHECK(r.messages[2].content == "[no reply: timeout]");
  CHECK_FALSE(r.messages[1].synthesized);
  CHECK_NOTHROW(t.force_close("noop", 2));
}

TEST_CASE("render and records") {
  ChatTranscript t("a", "b");
  t.open("a", "hi", 3);
  CHECK(t.render() == "[round 0]\na: hi");
  auto rec = to_record(t.rounds()[0]);
  CHECK(rec["state"] == "open");
  CHECK(rec["messages"][0]["tick"] == 3);
  CHECK(rec["messages"][0]["recipient"] == "b");
}

TEST_CASE("rounds only follow a failed attempt under the default protocol") {
  ChatTranscript t("a", "b");
  CHECK_THROWS_AS(initiate_round(t, "a", wood(), 0, false), ProtocolError);
  auto& r = initiate_round(t, "a", wood(), 0);
  CHECK(r.messages[0].content == "Hey, can you help me with Mine 1 wood log?");
}

TEST_CASE("run_round drives six turns, emits events and integrates initiator first") {
  Canned novice("novice"), expert("expert");
  std::vector<std::string> order;
  novice.order = expert.order = &order;
  ChatTranscript t("novice", "expert");
  std::vector<std::pair<std::string, nlohmann::ordered_json>> events;
  auto out = run_round(novice, expert, t, wood(), 5,
                       [&](std::string_view e, const nlohmann::ordered_json& d) { events.emplace_back(e, d); });
  CHECK_FALSE(out.force_closed);
  REQUIRE(events.size() == 8);
  CHECK(events.front().first == "round_open");
  CHECK(events.back().first == "round_closed");
  for (int i = 0; i < 6; ++i) {
    CHECK(events[i + 1].first == "message");
    CHECK(events[i + 1].second["turn"] == i);
    CHECK(events[i + 1].second["sender"] == (i % 2 ? "expert" : "novice"));
  }
  CHECK(order == std::vector<std::string>{"novice", "expert"});
}

TEST_CASE("a failing participant force-closes the round") {
  Canned novice("novice"), expert("expert");
  expert.replies = {std::string("ok"), std::nullopt};
  ChatTranscript t("novice", "expert");
  auto out = run_round(novice, expert, t, wood(), 0);
  CHECK(out.force_closed);
  CHECK(out.failure == "backend error from expert");
  const auto& r = t.rounds().back();
  CHECK(r.closed());
  CHECK(r.messages[3].synthesized);
  CHECK_FALSE(r.messages[2].synthesized);
  CHECK(novice.closed == 1);
}

TEST_CASE("replies are trimmed and truncated to the message cap") {
  Canned novice("novice"), expert("expert");
  expert.replies = {"  " + std::string(2000, 'y') + "  "};
  ChatTranscript t("novice", "expert");
  run_round(novice, expert, t, wood(), 0);
  CHECK(t.rounds()[0].messages[1].content.size() == kMessageCap);
}

TEST_CASE("decision parsing is exact-token") {
  CHECK(parse_decision("ASK") == Decision::ask);
  CHECK(parse_decision("  ASK.\n") == Decision::ask);
  CHECK(parse_decision("ask") == Decision::attempt);
  CHECK(parse_decision("I will ASK") == Decision::attempt);
  CHECK(parse_decision("ATTEMPT") == Decision::attempt);
  CHECK(parse_decision("") == Decision::attempt);

  auto o = std::make_shared<gateway::ScriptedOracle>("ASK");
  gateway::RoleBinding b{o, gateway::default_settings(gateway::BackendRole::belief_former)};
  CHECK(decide(wood(), "", b) == Decision::ask);
  auto failing = std::make_shared<gateway::ScriptedOracle>();
  failing->fail_on(gateway::contains(""));
  CHECK(decide(wood(), "", {failing, b.settings}) == Decision::attempt);
}

TEST_CASE("perspective prompt is a single user message ending with the cue") {
  ChatTranscript t("novice", "expert");
  t.open("novice", "help?", 0);
  auto model = beliefs::PartnerModel::fresh("expert", true);
  CHECK_THROWS_AS(take_perspective("novice", model, t, {}), std::invalid_argument);
  t.post("expert", "sure", 0);
  auto p = perspective_prompt("novice", model, t);
  REQUIRE(p.size() == 1);
  CHECK(p[0].role == gateway::Role::user);
  const auto& c = p[0].content;
  CHECK(c.ends_with("Perspective Analysis: "));
  CHECK(c.find("expert: sure") != std::string::npos);
  auto o = std::make_shared<gateway::ScriptedOracle>("They need wood.");
  CHECK(take_perspective("novice", model, t, {o, {}}) == "They need wood.");
}

TEST_CASE("reply prompt includes the perspective only when present") {
  ChatTranscript t("novice", "expert");
  t.open("novice", "help?", 0);
  ReplyContext ctx;
  ctx.responder_id = "expert";
  ctx.partner_id = "novice";
  ctx.task = &wood();
  auto plain = reply_prompt(ctx, t);
  CHECK(plain[1].content.find("Perspective analysis") == std::string::npos);
  ctx.perspective = "needs a log";
  auto with = reply_prompt(ctx, t);
  CHECK(with[1].content.find("Perspective analysis of novice:\nneeds a log") != std::string::npos);

  auto o = std::make_shared<gateway::ScriptedOracle>("Punch a tree.");
  auto m = compose_reply(t, ctx, {o, {}}, 1);
  REQUIRE(m);
  CHECK(m->content == "Punch a tree.");
  CHECK_THROWS_AS(compose_reply(t, ctx, {o, {}}, 1), ProtocolError);
}

TEST_CASE("human gate rejects posts out of turn and delivers in-turn posts") {
  HumanGate gate("expert");
  auto early = gate.post("hello");
  CHECK_FALSE(early.accepted);
  CHECK(early.error == "not the human expert's turn");

  // The novice waits for the human thread between turns so a duplicate post
  // cannot land on the next turn.
  struct Gated : Canned {
    std::atomic<int>* released;
    Gated(std::atomic<int>* r) : Canned("novice"), released(r) {}
    std::optional<std::string> respond(const ChatTranscript& t, const world::TaskSpec& task, std::int64_t tick) override {
      const int turn = t.open_round()->next_turn();
      while (*released < turn / 2) std::this_thread::sleep_for(std::chrono::milliseconds(1));
      return Canned::respond(t, task, tick);
    }
  };
  std::atomic<int> released{0};
  Gated novice(&released);
  ChatTranscript t("novice", "expert");
  std::vector<nlohmann::ordered_json> awaits;
  std::mutex mu;
  gate.set_on_await([&](const nlohmann::ordered_json& turn) {
    std::lock_guard lock(mu);
    awaits.push_back(turn);
  });
  std::thread human([&] {
    for (int i = 0; i < 3; ++i) {
      while (!gate.awaiting()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
      CHECK(gate.post("").error == "message is empty");
      CHECK(gate.post(std::string(kMessageCap + 1, 'z')).error.find("exceeds") != std::string::npos);
      auto ok = gate.post("answer " + std::to_string(i));
      CHECK(ok.accepted);
      // A second post for the same turn is out of turn.
      CHECK(gate.post("again").error == "not the human expert's turn");
      while (gate.awaiting()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
      ++released;
    }
  });
  auto out = run_round(novice, gate, t, wood(), 0);
  human.join();
  CHECK_FALSE(out.force_closed);
  const auto& msgs = t.rounds()[0].messages;
  CHECK(msgs[1].content == "answer 0");
  CHECK(msgs[5].content == "answer 2");
  REQUIRE(awaits.size() == 3);
  CHECK(awaits[0]["turn"] == 1);
  CHECK(awaits[2]["turn"] == 5);
  CHECK(awaits[0]["speaker"] == "expert");
}

TEST_CASE("human gate timeout and cancel force-close the round") {
  HumanGate gate("expert", std::chrono::milliseconds(20));
  Canned novice("novice");
  ChatTranscript t("novice", "expert");
  auto out = run_round(novice, gate, t, wood(), 0);
  CHECK(out.force_closed);
  CHECK(t.rounds()[0].messages[1].synthesized);

  HumanGate blocking("expert");
  ChatTranscript t2("novice", "expert");
  std::thread canceller([&] {
    while (!blocking.awaiting()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    blocking.cancel();
  });
  CHECK(run_round(novice, blocking, t2, wood(), 0).force_closed);
  canceller.join();
}
