#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vulnlm/lexer.hpp"

namespace vulnlm {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// Ordered token <-> id map. Ids 0..2 are reserved for <unk>, <num>, <str> and
// are not counted against the size limit; content tokens follow in order of
// decreasing training frequency, ties broken by surface order.
class Vocabulary {
 public:
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kNumId = 1;
  static constexpr TokenId kStrId = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  std::size_t size_limit() const { return size_limit_; }

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view token) const;

  TokenIds encode(const RawTokens& tokens) const;
  RawTokens decode(const TokenIds& ids) const;

  // One token per line; line number is the id.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  std::uint64_t hash() const;

  friend class VocabularyBuilder;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t size_limit_ = 0;
};

// Accumulates token frequencies over the training portion of a corpus.
class VocabularyBuilder {
 public:
  void add(const RawTokens& tokens);
  std::size_t total_tokens() const { return total_; }

  // Throws Error{EmptyCorpus} if nothing was added, Error{ConfigInvalid} if n == 0.
  Vocabulary build(std::size_t n) const;

 private:
  std::map<std::string, std::size_t, std::less<>> counts_;
  std::size_t total_ = 0;
};

// Non-overlapping chunks of length t; the last one may be shorter.
std::vector<TokenIds> split_sequences(const TokenIds& ids, std::size_t t);

}  // namespace vulnlm
