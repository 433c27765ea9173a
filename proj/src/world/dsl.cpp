#include <cctype>

#include "culturecraft/text.hpp"
#include "culturecraft/world.hpp"

namespace culturecraft::world {

namespace {

struct VerbInfo {
  Verb verb;
  std::string_view name;
  std::size_t min_args;
  std::size_t max_args;
};

constexpr VerbInfo kVerbs[] = {
    {Verb::mine, "mine", 1, 1},   {Verb::craft, "craft", 1, 3},
    {Verb::smelt, "smelt", 1, 2}, {Verb::place, "place", 1, 1},
    {Verb::wait_until_day, "wait_until_day", 0, 0}, {Verb::explore, "explore", 0, 0},
};

std::vector<std::string> verb_names() {
  std::vector<std::string> out;
  for (const auto& v : kVerbs) out.emplace_back(v.name);
  return out;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool quote_char(char c) { return c == '\'' || c == '"' || c == '`'; }

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  ParseResult run() {
    ActionScript script;
    script.source_text = std::string(src_);
    while (!at_end()) {
      skip_blank();
      if (at_end()) break;
      if (peek() == '\n' || peek() == ';') {
        advance();
        continue;
      }
      if (at_comment()) {
        skip_to_eol();
        continue;
      }
      if (script.primitives.size() == kMaxPrimitives) {
        return fail("script exceeds " + std::to_string(kMaxPrimitives) + " primitives", {});
      }
      auto prim = statement();
      if (!prim) return {std::nullopt, error_};
      script.primitives.push_back(std::move(*prim));
    }
    if (script.primitives.empty()) {
      return fail("script contains no actions", verb_names());
    }
    return {std::move(script), std::nullopt};
  }

 private:
  std::optional<Primitive> statement() {
    const int stmt_line = line_;
    const int stmt_col = col_;
    if (!ident_start(peek())) {
      fail(std::string("unexpected character '") + peek() + "'", verb_names());
      return std::nullopt;
    }
    const std::string verb_name = text::lower(identifier());
    const VerbInfo* info = nullptr;
    for (const auto& v : kVerbs) {
      if (v.name == verb_name) info = &v;
    }
    if (!info) {
      fail_at(stmt_line, stmt_col, "unknown verb '" + verb_name + "'", verb_names());
      return std::nullopt;
    }

    Primitive prim;
    prim.verb = info->verb;
    prim.line = stmt_line;
    std::vector<std::pair<int, int>> arg_pos;

    skip_blank();
    if (peek() == '(') {
      advance();
      skip_blank();
      if (peek() != ')') {
        while (true) {
          skip_blank();
          arg_pos.emplace_back(line_, col_);
          auto arg = argument();
          if (!arg) return std::nullopt;
          prim.args.push_back(*arg);
          skip_blank();
          if (peek() == ',') {
            advance();
            continue;
          }
          if (peek() == ')') break;
          fail(at_end() || peek() == '\n' ? "unterminated argument list"
                                          : std::string("unexpected character '") + peek() + "'",
               {",", ")"});
          return std::nullopt;
        }
      }
      advance();  // ')'
    } else {
      while (!at_end() && peek() != '\n' && peek() != ';' && !at_comment()) {
        arg_pos.emplace_back(line_, col_);
        auto arg = argument();
        if (!arg) return std::nullopt;
        prim.args.push_back(*arg);
        skip_blank();
      }
    }
    skip_blank();
    if (!at_end() && peek() != '\n' && peek() != ';' && !at_comment()) {
      fail(std::string("unexpected character '") + peek() + "' after statement", {"newline", ";"});
      return std::nullopt;
    }

    if (prim.args.size() < info->min_args || prim.args.size() > info->max_args) {
      std::string expect = info->min_args == info->max_args
                               ? std::to_string(info->min_args)
                               : std::to_string(info->min_args) + "-" + std::to_string(info->max_args);
      fail_at(stmt_line, stmt_col,
              "verb '" + verb_name + "' expects " + expect + " argument(s), got " +
                  std::to_string(prim.args.size()),
              {});
      return std::nullopt;
    }

    for (std::size_t i = 0; i < prim.args.size(); ++i) {
      auto& arg = prim.args[i];
      if (is_log_tag(arg)) arg = std::string(kLogTag);
      bool valid = prim.verb == Verb::mine ? (is_resource(arg) || is_log_tag(arg)) : is_known_id(arg);
      if (!valid) {
        std::string what = prim.verb == Verb::mine ? "unknown resource '" : "unknown item '";
        fail_at(arg_pos[i].first, arg_pos[i].second, what + arg + "'",
                prim.verb == Verb::mine ? std::vector<std::string>{"dirt", "oak_log", "birch_log",
                                                                    "dark_oak_log", "stone", "iron_ore"}
                                        : std::vector<std::string>{});
        return std::nullopt;
      }
    }
    return prim;
  }

  std::optional<std::string> argument() {
    char open = 0;
    if (quote_char(peek())) {
      open = peek();
      advance();
    }
    if (!ident_start(peek())) {
      fail(at_end() || peek() == '\n' ? "missing argument"
                                      : std::string("unexpected character '") + peek() + "'",
           {"identifier"});
      return std::nullopt;
    }
    std::string id = text::lower(identifier());
    if (open) {
      if (!quote_char(peek())) {
        fail("unterminated quoted identifier", {"'"});
        return std::nullopt;
      }
      advance();
    }
    return id;
  }

  std::string identifier() {
    std::string out;
    while (!at_end() && ident_char(peek())) out.push_back(advance());
    return out;
  }

  bool at_comment() const {
    return peek() == '#' || (peek() == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/');
  }

  void skip_blank() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }

  void skip_to_eol() {
    while (!at_end() && peek() != '\n') advance();
  }

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return at_end() ? '\0' : src_[pos_]; }

  char advance() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  ParseResult fail(std::string message, std::vector<std::string> expected) {
    return fail_at(line_, col_, std::move(message), std::move(expected));
  }

  ParseResult fail_at(int line, int col, std::string message, std::vector<std::string> expected) {
    error_ = ParseError{line, col, std::move(message), std::move(expected)};
    return {std::nullopt, error_};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  ParseError error_;
};

}  // namespace

std::string_view to_string(Verb verb) {
  for (const auto& v : kVerbs) {
    if (v.verb == verb) return v.name;
  }
  return "";
}

std::string Primitive::render() const {
  std::string out(to_string(verb));
  for (const auto& a : args) out += " " + a;
  return out;
}

std::string ActionScript::render() const {
  std::vector<std::string> lines;
  for (const auto& p : primitives) lines.push_back(p.render());
  return text::join(lines, "\n");
}

std::string ParseError::to_string() const {
  std::string out = "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
  if (!expected.empty()) out += " (expected one of: " + text::join(expected, ", ") + ")";
  return out;
}

ParseResult parse_script(std::string_view source) { return Parser(source).run(); }

std::string grammar_reminder() {
  return "Write one action per line (at most 8), inside a ``` fenced block.\n"
         "  mine <resource>            dirt, oak_log, birch_log, dark_oak_log, stone, iron_ore (log = any log)\n"
         "  craft <item> [hints...]    wooden_plank, stick, crafting_table, wooden_pickaxe, wooden_axe,\n"
         "                             stone_pickaxe, furnace, iron_pickaxe\n"
         "  smelt <input>              iron_ore -> iron_ingot (needs a placed furnace and 1 wooden_plank)\n"
         "  place <station>            crafting_table, furnace\n"
         "  wait_until_day\n"
         "  explore\n"
         "Call syntax such as craft('stick', wooden_plank) is also accepted.";
}

}  // namespace culturecraft::world
