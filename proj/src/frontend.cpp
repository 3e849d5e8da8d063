#include "vmr/frontend.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <unordered_set>

#include <json.hpp>

#include "vmr/error.hpp"

namespace vmr {
namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "KEYWORD", "IDENT", "NUMBER", "STRING", "OPERATOR",
    "PUNCT",   "NEWLINE", "INDENT", "DEDENT"};

bool is_ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

bool is_open(std::string_view t) { return t == "(" || t == "[" || t == "{"; }
bool is_close(std::string_view t) { return t == ")" || t == "]" || t == "}"; }

bool is_layout(TokenKind k) {
  return k == TokenKind::NEWLINE || k == TokenKind::INDENT || k == TokenKind::DEDENT;
}

std::string where(std::size_t line, std::size_t col) {
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < src_.size()) {
      std::size_t end = src_.find('\n', pos);
      if (end == std::string_view::npos) end = src_.size();
      ++line_no;
      lex_line(src_.substr(pos, end - pos), line_no);
      pos = end + 1;
    }
    if (depth_ > 0) throw LexError("unclosed bracket at end of input");
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(std::string(kDedentText), TokenKind::DEDENT);
    }
    return std::move(out_);
  }

 private:
  void emit(std::string text, TokenKind kind) {
    out_.push_back(Token{std::move(text), kind, out_.size()});
  }

  void lex_line(std::string_view line, std::size_t line_no) {
    std::size_t i = 0;
    if (depth_ == 0) {
      std::size_t width = 0;
      for (; i < line.size(); ++i) {
        if (line[i] == ' ') {
          ++width;
        } else if (line[i] == '\t') {
          throw LexError("tab in indentation at " + where(line_no, i + 1));
        } else {
          break;
        }
      }
      std::size_t rest = i;
      while (rest < line.size() && (line[rest] == ' ' || line[rest] == '\r' || line[rest] == '\t')) ++rest;
      if (rest == line.size()) return;  // blank line
      indent_to(width, line_no);
    }
    bool any = false;
    while (i < line.size()) {
      char c = line[i];
      if (c == ' ' || c == '\t' || c == '\r') {
        ++i;
        continue;
      }
      any = true;
      if (is_ident_start(c)) {
        std::size_t j = i;
        while (j < line.size() && is_ident_char(line[j])) ++j;
        std::string word(line.substr(i, j - i));
        TokenKind kind = is_keyword(word) ? TokenKind::KEYWORD : TokenKind::IDENT;
        emit(std::move(word), kind);
        i = j;
      } else if (is_digit(c)) {
        std::size_t j = i;
        while (j < line.size() && is_digit(line[j])) ++j;
        if (j + 1 < line.size() && line[j] == '.' && is_digit(line[j + 1])) {
          ++j;
          while (j < line.size() && is_digit(line[j])) ++j;
        }
        emit(std::string(line.substr(i, j - i)), TokenKind::NUMBER);
        i = j;
      } else if (c == '\'' || c == '"') {
        std::size_t j = line.find(c, i + 1);
        if (j == std::string_view::npos)
          throw LexError("unterminated string at " + where(line_no, i + 1));
        emit(std::string(line.substr(i, j - i + 1)), TokenKind::STRING);
        i = j + 1;
      } else {
        i = lex_symbol(line, i, line_no);
      }
    }
    if (any && depth_ == 0) emit(std::string(kNewlineText), TokenKind::NEWLINE);
  }

  std::size_t lex_symbol(std::string_view line, std::size_t i, std::size_t line_no) {
    if (i + 1 < line.size()) {
      std::string_view two = line.substr(i, 2);
      if (two == "==" || two == "!=" || two == "<=" || two == ">=") {
        emit(std::string(two), TokenKind::OPERATOR);
        return i + 2;
      }
    }
    char c = line[i];
    std::string one(1, c);
    switch (c) {
      case '=': case '+': case '-': case '*': case '/':
      case '%': case '<': case '>': case '.':
        emit(std::move(one), TokenKind::OPERATOR);
        return i + 1;
      case '(': case '[': case '{':
        ++depth_;
        emit(std::move(one), TokenKind::PUNCT);
        return i + 1;
      case ')': case ']': case '}':
        if (depth_ == 0) throw LexError("unmatched '" + one + "' at " + where(line_no, i + 1));
        --depth_;
        emit(std::move(one), TokenKind::PUNCT);
        return i + 1;
      case ',': case ':':
        emit(std::move(one), TokenKind::PUNCT);
        return i + 1;
      default:
        break;
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02x", static_cast<unsigned char>(c));
    throw LexError(std::string("character ") + buf + " outside the language at " +
                   where(line_no, i + 1));
  }

  void indent_to(std::size_t width, std::size_t line_no) {
    if (width > indents_.back()) {
      if (width != indents_.back() + 2)
        throw LexError("indentation must grow by two spaces at " + where(line_no, 1));
      indents_.push_back(width);
      emit(std::string(kIndentText), TokenKind::INDENT);
      return;
    }
    while (width < indents_.back()) {
      indents_.pop_back();
      emit(std::string(kDedentText), TokenKind::DEDENT);
    }
    if (width != indents_.back())
      throw LexError("inconsistent dedent at " + where(line_no, 1));
  }

  std::string_view src_;
  std::vector<Token> out_;
  std::vector<std::size_t> indents_{0};
  int depth_ = 0;
};

bool is_compound_head(const Token& t) {
  static const std::unordered_set<std::string> heads = {"def", "if", "elif", "else", "for", "while"};
  return t.kind == TokenKind::KEYWORD && heads.count(t.text) > 0;
}

/// Index one past the end of a `def` starting at `start`, or throws
/// ParseError. Returns the header's closing `:` through `colon`.
std::size_t def_span_end(const std::vector<Token>& toks, std::size_t start, std::size_t* colon = nullptr) {
  const std::size_t n = toks.size();
  std::size_t i = start + 1;
  if (i >= n || toks[i].kind != TokenKind::IDENT) throw ParseError("def without a function name");
  ++i;
  if (i >= n || toks[i].text != "(") throw ParseError("def '" + toks[start + 1].text + "' missing '('");
  int depth = 0;
  for (; i < n; ++i) {
    if (is_open(toks[i].text)) ++depth;
    if (is_close(toks[i].text) && --depth == 0) break;
  }
  if (i >= n) throw ParseError("def '" + toks[start + 1].text + "' missing ')'");
  ++i;
  if (i >= n || toks[i].text != ":") throw ParseError("def '" + toks[start + 1].text + "' missing ':'");
  if (colon) *colon = i;
  ++i;
  if (i >= n) throw ParseError("def '" + toks[start + 1].text + "' has no body");
  if (toks[i].kind == TokenKind::NEWLINE) {
    ++i;
    if (i >= n || toks[i].kind != TokenKind::INDENT)
      throw ParseError("def '" + toks[start + 1].text + "' has no indented body");
    int level = 0;
    for (; i < n; ++i) {
      if (toks[i].kind == TokenKind::INDENT) ++level;
      if (toks[i].kind == TokenKind::DEDENT && --level == 0) return i + 1;
    }
    throw ParseError("unterminated body of def '" + toks[start + 1].text + "'");
  }
  for (; i < n; ++i)
    if (toks[i].kind == TokenKind::NEWLINE) return i + 1;
  return n;
}

struct Statement {
  std::size_t begin;
  std::size_t end;
};

}  // namespace

std::string_view to_string(TokenKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

TokenKind token_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<TokenKind>(i);
  throw ParseError("unknown token kind '" + std::string(name) + "'");
}

const std::vector<std::string>& keywords() {
  static const std::vector<std::string> kw = {"def", "return", "if",   "else", "elif", "for",
                                              "while", "in",    "not",  "and",  "or",   "None",
                                              "True",  "False", "pass", "global"};
  return kw;
}

const std::vector<std::string>& operators() {
  static const std::vector<std::string> ops = {"=", "+", "-", "*", "/", "%", "==", "!=", "<", ">",
                                               "<=", ">=", ".", ",", ":", "(", ")", "[", "]", "{", "}"};
  return ops;
}

bool is_keyword(std::string_view text) {
  const auto& kw = keywords();
  return std::find(kw.begin(), kw.end(), text) != kw.end();
}

std::vector<std::uint8_t> FunctionSource::variable_mask() const {
  std::vector<std::uint8_t> mask(tokens.size(), 0);
  for (std::size_t i : def_sites) mask[i] = 1;
  for (const auto& use : uses) mask[use.second] = 1;
  return mask;
}

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

std::string render_tokens(const std::vector<Token>& tokens) {
  std::string out;
  int level = 0;
  bool line_start = true;
  for (const Token& t : tokens) {
    switch (t.kind) {
      case TokenKind::NEWLINE:
        out += '\n';
        line_start = true;
        break;
      case TokenKind::INDENT:
        ++level;
        break;
      case TokenKind::DEDENT:
        --level;
        break;
      default:
        if (line_start) {
          out.append(static_cast<std::size_t>(2 * std::max(level, 0)), ' ');
          line_start = false;
        } else {
          out += ' ';
        }
        out += t.text;
    }
  }
  if (!line_start) out += '\n';
  return out;
}

std::string content_hash(const std::vector<Token>& tokens) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const Token& t : tokens) {
    for (char c : t.text) mix(static_cast<unsigned char>(c));
    mix(0x1f);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ScopeInfo analyze_scope(const FunctionSource& fn) { return analyze_scope(fn.tokens); }

ScopeInfo analyze_scope(const std::vector<Token>& toks) {
  ScopeInfo info;
  const std::size_t n = toks.size();
  if (n == 0 || toks[0].text != "def") return info;

  std::size_t colon = 0;
  def_span_end(toks, 0, &colon);

  std::vector<bool> opaque(n, false);
  std::vector<bool> store(n, false);  // binding positions
  // Parameters: identifiers directly after '(' or ',' at depth one.
  {
    int depth = 0;
    for (std::size_t i = 2; i < colon; ++i) {
      if (is_open(toks[i].text)) ++depth;
      if (is_close(toks[i].text)) --depth;
      if (toks[i].kind == TokenKind::IDENT && depth == 1 &&
          (toks[i - 1].text == "(" || toks[i - 1].text == ",")) {
        store[i] = true;
      }
    }
  }
  for (std::size_t i = 0; i <= colon; ++i) opaque[i] = !store[i];

  // Nested definitions are kept as opaque spans.
  for (std::size_t i = colon + 1; i < n; ++i) {
    if (toks[i].kind == TokenKind::KEYWORD && toks[i].text == "def") {
      std::size_t end = def_span_end(toks, i);
      for (std::size_t j = i; j < end; ++j) opaque[j] = true;
      i = end - 1;
    }
  }

  // Split the body into simple statements and compound headers.
  std::vector<Statement> stmts;
  {
    std::size_t begin = colon + 1;
    int depth = 0;
    bool head = false;
    for (std::size_t i = colon + 1; i <= n; ++i) {
      bool boundary = i == n || is_layout(toks[i].kind) || opaque[i];
      if (!boundary) {
        if (i == begin) head = is_compound_head(toks[i]);
        if (is_open(toks[i].text)) ++depth;
        if (is_close(toks[i].text)) --depth;
        if (head && depth == 0 && toks[i].text == ":") {
          stmts.push_back({begin, i});
          begin = i + 1;
        }
        continue;
      }
      if (i > begin) stmts.push_back({begin, i});
      begin = i + 1;
      depth = 0;
    }
  }

  std::vector<bool> load(n, false);
  for (const Statement& s : stmts) {
    const Token& first = toks[s.begin];
    std::size_t value_begin = s.begin;
    if (first.kind == TokenKind::KEYWORD && first.text == "global") {
      for (std::size_t i = s.begin + 1; i < s.end; ++i)
        if (toks[i].kind == TokenKind::IDENT) store[i] = true;
      continue;
    }
    if (first.kind == TokenKind::KEYWORD && first.text == "for") {
      int depth = 0;
      std::size_t i = s.begin + 1;
      for (; i < s.end; ++i) {
        if (is_open(toks[i].text)) ++depth;
        if (is_close(toks[i].text)) --depth;
        if (depth == 0 && toks[i].kind == TokenKind::KEYWORD && toks[i].text == "in") break;
        if (depth == 0 && toks[i].kind == TokenKind::IDENT) store[i] = true;
      }
      value_begin = i;
    } else if (!is_compound_head(first)) {
      // Every segment before the last top-level '=' is an assignment target.
      std::size_t last_eq = s.begin;
      bool has_eq = false;
      int depth = 0;
      for (std::size_t i = s.begin; i < s.end; ++i) {
        if (is_open(toks[i].text)) ++depth;
        if (is_close(toks[i].text)) --depth;
        if (depth == 0 && toks[i].kind == TokenKind::OPERATOR && toks[i].text == "=") {
          last_eq = i;
          has_eq = true;
        }
      }
      if (has_eq) {
        depth = 0;
        for (std::size_t i = s.begin; i < last_eq; ++i) {
          if (is_open(toks[i].text)) ++depth;
          if (is_close(toks[i].text)) --depth;
          if (toks[i].kind != TokenKind::IDENT || depth != 0) continue;
          bool after_dot = i > s.begin && toks[i - 1].text == ".";
          bool followed = i + 1 < last_eq && (toks[i + 1].text == "." || toks[i + 1].text == "[" ||
                                              toks[i + 1].text == "(");
          if (!after_dot && !followed) store[i] = true;
        }
      }
    }
    int depth = 0;
    for (std::size_t i = s.begin; i < s.end; ++i) {
      if (is_open(toks[i].text)) ++depth;
      if (is_close(toks[i].text)) --depth;
      if (i < value_begin && toks[s.begin].text == "for") continue;
      if (toks[i].kind != TokenKind::IDENT || store[i]) continue;
      if (i > 0 && toks[i - 1].text == ".") continue;
      bool kwarg = depth > 0 && i + 1 < s.end && toks[i + 1].kind == TokenKind::OPERATOR &&
                   toks[i + 1].text == "=";
      if (kwarg) continue;
      load[i] = true;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (store[i]) {
      info.defs.insert(toks[i].text);
      info.def_sites.push_back(i);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (load[i] && info.defs.count(toks[i].text)) info.uses.emplace_back(toks[i].text, i);
  return info;
}

std::vector<Slot> find_slots(const FunctionSource& fn) {
  std::vector<Slot> slots;
  if (fn.defs.size() < 2) return slots;
  std::vector<std::string> candidates(fn.defs.begin(), fn.defs.end());
  for (const auto& [name, index] : fn.uses) slots.push_back(Slot{index, name, candidates});
  return slots;
}

FunctionSource make_function_source(std::vector<Token> tokens) {
  FunctionSource fn;
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].index = i;
  fn.tokens = std::move(tokens);
  if (fn.tokens.size() > 1) fn.name = fn.tokens[1].text;
  fn.function_id = content_hash(fn.tokens);
  ScopeInfo scope = analyze_scope(fn.tokens);
  fn.defs = std::move(scope.defs);
  fn.uses = std::move(scope.uses);
  fn.def_sites = std::move(scope.def_sites);
  fn.slots = find_slots(fn);
  return fn;
}

std::vector<FunctionSource> extract_functions(const std::vector<Token>& toks) {
  std::vector<FunctionSource> out;
  std::set<std::string> seen;
  int level = 0;
  bool line_start = true;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const Token& t = toks[i];
    if (t.kind == TokenKind::INDENT) ++level;
    if (t.kind == TokenKind::DEDENT) --level;
    if (is_layout(t.kind)) {
      line_start = true;
      continue;
    }
    if (level == 0 && line_start && t.kind == TokenKind::KEYWORD && t.text == "def") {
      std::size_t end = def_span_end(toks, i);
      std::vector<Token> span(toks.begin() + static_cast<std::ptrdiff_t>(i),
                              toks.begin() + static_cast<std::ptrdiff_t>(end));
      std::string key;
      for (const Token& s : span) {
        key += s.text;
        key += '\x1f';
      }
      if (seen.insert(std::move(key)).second) out.push_back(make_function_source(std::move(span)));
      // The span ends on the body's closing DEDENT (level back to 0) or on
      // the NEWLINE of a one-line body.
      i = end - 1;
      line_start = true;
      continue;
    }
    line_start = false;
  }
  return out;
}

std::vector<Token> parse_pretokenized(std::string_view jsonl) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("pre-tokenized line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("text") || !obj.contains("kind") ||
        !obj["text"].is_string() || !obj["kind"].is_string())
      throw ParseError("pre-tokenized line " + std::to_string(line_no) +
                       ": expected {\"text\": string, \"kind\": string}");
    Token t;
    t.text = obj["text"].get<std::string>();
    t.kind = token_kind_from_string(obj["kind"].get<std::string>());
    t.index = tokens.size();
    tokens.push_back(std::move(t));
  }
  return tokens;
}

}  // namespace vmr
