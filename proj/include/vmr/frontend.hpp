#pragma once

// Frontend for a small Python subset: lexing, top-level function
// extraction, and variable scope analysis (definitions, load-context uses,
// and the slots a variable-misuse bug may occupy).

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vmr {

enum class TokenKind : std::uint8_t {
  KEYWORD,
  IDENT,
  NUMBER,
  STRING,
  OPERATOR,
  PUNCT,
  NEWLINE,
  INDENT,
  DEDENT,
};

std::string_view to_string(TokenKind kind);
/// Throws ParseError for an unknown name.
TokenKind token_kind_from_string(std::string_view name);

struct Token {
  std::string text;
  TokenKind kind = TokenKind::IDENT;
  std::size_t index = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

/// Text carried by layout tokens, which have no source spelling.
inline constexpr std::string_view kNewlineText = "<NEWLINE>";
inline constexpr std::string_view kIndentText = "<INDENT>";
inline constexpr std::string_view kDedentText = "<DEDENT>";

bool is_keyword(std::string_view text);
const std::vector<std::string>& keywords();
const std::vector<std::string>& operators();

struct Slot {
  std::size_t token_index = 0;
  std::string var_name;
  /// Sorted; equals the enclosing function's definitions.
  std::vector<std::string> candidates;
};

struct ScopeInfo {
  std::set<std::string> defs;
  /// (name, token index), ascending by index.
  std::vector<std::pair<std::string, std::size_t>> uses;
  /// Token indices where a variable is bound: parameters, assignment and
  /// loop targets, and `global` declarations. Ascending.
  std::vector<std::size_t> def_sites;
};

struct FunctionSource {
  std::string name;
  /// Content hash of the token texts; identical bodies share an id.
  std::string function_id;
  std::vector<Token> tokens;
  std::set<std::string> defs;
  std::vector<std::pair<std::string, std::size_t>> uses;
  std::vector<std::size_t> def_sites;
  std::vector<Slot> slots;

  /// Positions that hold a variable definition or use, as a 0/1 vector.
  std::vector<std::uint8_t> variable_mask() const;
};

/// Lexes subset source. INDENT/DEDENT are emitted on indentation changes
/// and all open blocks are closed at end of input. Newlines inside brackets
/// join lines. Throws LexError.
std::vector<Token> tokenize(std::string_view source);

/// Renders tokens back to canonical source: single spaces between tokens,
/// two-space indentation. Re-tokenizing the result reproduces the
/// kind/text sequence.
std::string render_tokens(const std::vector<Token>& tokens);

/// One FunctionSource per unique top-level `def`, analyzed and with slots.
/// Throws ParseError on a malformed header.
std::vector<FunctionSource> extract_functions(const std::vector<Token>& file_tokens);

ScopeInfo analyze_scope(const FunctionSource& fn);
ScopeInfo analyze_scope(const std::vector<Token>& function_tokens);

/// Slots are dropped entirely when the function defines fewer than two
/// variables.
std::vector<Slot> find_slots(const FunctionSource& fn);

/// Builds a FunctionSource from a token span (indices are rewritten) and
/// runs scope analysis and slot finding on it.
FunctionSource make_function_source(std::vector<Token> tokens);

/// Parses the pre-tokenized JSONL format: one {"text", "kind"} object per
/// line. Throws ParseError.
std::vector<Token> parse_pretokenized(std::string_view jsonl);

/// FNV-1a 64 of the token texts, as 16 lowercase hex digits.
std::string content_hash(const std::vector<Token>& tokens);

}  // namespace vmr
