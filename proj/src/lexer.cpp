#include "vulnlm/lexer.hpp"

#include <array>
#include <cctype>

#include "vulnlm/error.hpp"

namespace vulnlm {
namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Longest operators first.
constexpr std::array<std::string_view, 25> kOperators = {
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "==", "!=", "<=", ">=", "&&", "||", "++",
    "--",   "+=",  "-=",  "*=",  "/=",  "%=", "&=", "|=", "^=", "<<", ">>"};

class Scanner {
 public:
  explicit Scanner(std::string_view src) : src_(src) {}

  RawTokens run() {
    RawTokens out;
    while (true) {
      skip_space_and_comments();
      if (pos_ >= src_.size()) break;
      out.push_back(next_token());
    }
    return out;
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else if (c == '/' && peek(1) == '*') {
        const auto end = src_.find("*/", pos_ + 2);
        if (end == std::string_view::npos) {
          throw Error(ErrorKind::UnterminatedLiteral, "block comment reaches end of input");
        }
        pos_ = end + 2;
      } else {
        break;
      }
    }
  }

  std::string next_token() {
    const std::size_t start = pos_;
    const char c = src_[pos_];
    if (is_ident_start(c)) {
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
    } else if (is_digit(c) || (c == '.' && is_digit(peek(1)))) {
      scan_number();
    } else if (c == '"' || c == '\'') {
      scan_quoted(c);
    } else {
      for (auto op : kOperators) {
        if (src_.substr(pos_, op.size()) == op) {
          pos_ += op.size();
          return std::string(op);
        }
      }
      ++pos_;
    }
    return std::string(src_.substr(start, pos_ - start));
  }

  void scan_number() {
    if (peek() == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
      pos_ += 2;
      while (std::isxdigit(static_cast<unsigned char>(peek())) || peek() == '_') ++pos_;
    } else if (peek() == '0' && (peek(1) == 'b' || peek(1) == 'B')) {
      pos_ += 2;
      while (peek() == '0' || peek() == '1' || peek() == '_') ++pos_;
    } else {
      while (is_digit(peek()) || peek() == '_') ++pos_;
      if (peek() == '.' && is_digit(peek(1))) {
        ++pos_;
        while (is_digit(peek()) || peek() == '_') ++pos_;
      } else if (peek() == '.' && !is_ident_start(peek(1)) && peek(1) != '.') {
        ++pos_;  // "1." is a real literal
      }
      if (peek() == 'e' || peek() == 'E') {
        const std::size_t sign = (peek(1) == '+' || peek(1) == '-') ? 1 : 0;
        if (is_digit(peek(1 + sign))) {
          pos_ += 1 + sign;
          while (is_digit(peek())) ++pos_;
        }
      }
    }
    const char s = peek();
    if (s == 'l' || s == 'L' || s == 'f' || s == 'F' || s == 'd' || s == 'D') ++pos_;
  }

  void scan_quoted(char quote) {
    ++pos_;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        throw Error(ErrorKind::UnterminatedLiteral, "literal reaches end of line or input");
      }
      const char c = src_[pos_++];
      if (c == '\\') {
        if (pos_ >= src_.size()) {
          throw Error(ErrorKind::UnterminatedLiteral, "escape at end of input");
        }
        ++pos_;
      } else if (c == quote) {
        return;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

bool is_type_declaration_keyword(const std::string& t) {
  return t == "class" || t == "interface" || t == "enum" || t == "record";
}

enum class Scope { Type, Method, Initializer };

}  // namespace

RawTokens tokenize(std::string_view source) { return Scanner(source).run(); }

std::vector<RawTokens> lex(std::string_view source) {
  const RawTokens tokens = tokenize(source);

  std::vector<RawTokens> methods(1);
  RawTokens pending;  // class-level tokens since the last declaration boundary
  std::vector<Scope> scopes;
  std::size_t method_depth = 0;  // brace depth inside the current method body
  bool pending_has_type_kw = false;
  bool pending_has_assign = false;

  auto flush_pending_to_header = [&] {
    methods[0].insert(methods[0].end(), pending.begin(), pending.end());
    pending.clear();
    pending_has_type_kw = false;
    pending_has_assign = false;
  };

  for (const auto& tok : tokens) {
    if (method_depth > 0) {
      methods.back().push_back(tok);
      if (tok == "{") {
        ++method_depth;
      } else if (tok == "}") {
        if (--method_depth == 0) scopes.pop_back();
      }
      continue;
    }
    // Class level (inside a type body or at file scope).
    if (tok == "{") {
      if (pending_has_type_kw) {
        pending.push_back(tok);
        flush_pending_to_header();
        scopes.push_back(Scope::Type);
      } else if (pending_has_assign ||
                 (!scopes.empty() && scopes.back() == Scope::Initializer)) {
        // Array initializer in a field declaration.
        pending.push_back(tok);
        scopes.push_back(Scope::Initializer);
      } else {
        RawTokens body = std::move(pending);
        pending.clear();
        pending_has_type_kw = false;
        pending_has_assign = false;
        body.push_back(tok);
        methods.push_back(std::move(body));
        scopes.push_back(Scope::Method);
        method_depth = 1;
      }
    } else if (tok == "}") {
      if (scopes.empty()) {
        throw Error(ErrorKind::UnbalancedBraces, "closing brace without matching opening brace");
      }
      const Scope closing = scopes.back();
      scopes.pop_back();
      pending.push_back(tok);
      if (closing == Scope::Type) flush_pending_to_header();
    } else {
      pending.push_back(tok);
      if (is_type_declaration_keyword(tok)) pending_has_type_kw = true;
      if (tok == "=") pending_has_assign = true;
      if (tok == ";" && (scopes.empty() || scopes.back() != Scope::Initializer)) {
        flush_pending_to_header();
      }
    }
  }
  if (method_depth > 0 || !scopes.empty()) {
    throw Error(ErrorKind::UnbalancedBraces, "brace depth does not return to class level");
  }
  flush_pending_to_header();
  return methods;
}

bool is_number_literal(std::string_view token) {
  if (token.empty()) return false;
  return is_digit(token[0]) || (token.size() > 1 && token[0] == '.' && is_digit(token[1]));
}

bool is_string_literal(std::string_view token) {
  return !token.empty() && (token[0] == '"' || token[0] == '\'');
}

RawTokens normalize(const RawTokens& tokens) {
  RawTokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (is_number_literal(t)) {
      out.emplace_back(kNumToken);
    } else if (is_string_literal(t)) {
      out.emplace_back(kStrToken);
    } else {
      out.push_back(t);
    }
  }
  return out;
}

}  // namespace vulnlm
