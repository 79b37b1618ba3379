#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vulnlm {

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kNumToken = "<num>";
inline constexpr std::string_view kStrToken = "<str>";

using RawTokens = std::vector<std::string>;

// Splits Java-like source into per-method token sequences. Element 0 holds the
// class-level tokens (package/imports, class headers, fields); each
// brace-balanced method body, together with its signature, yields one further
// element in source order. Comments and whitespace are dropped.
//
// Throws Error{UnbalancedBraces} or Error{UnterminatedLiteral}.
std::vector<RawTokens> lex(std::string_view source);

// Flat token stream without method segmentation.
RawTokens tokenize(std::string_view source);

bool is_number_literal(std::string_view token);
bool is_string_literal(std::string_view token);

// Numeric literals become <num>, string and char literals become <str>.
RawTokens normalize(const RawTokens& tokens);

}  // namespace vulnlm
