#include "vulnlm/vocabulary.hpp"

#include <algorithm>
#include <sstream>

#include "vulnlm/error.hpp"
#include "vulnlm/hash.hpp"

namespace vulnlm {
namespace {

bool is_reserved(std::string_view t) { return t == kUnkToken || t == kNumToken || t == kStrToken; }

}  // namespace

Vocabulary::Vocabulary() {
  add(std::string(kUnkToken));
  add(std::string(kNumToken));
  add(std::string(kStrToken));
}

void Vocabulary::add(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

TokenIds Vocabulary::encode(const RawTokens& tokens) const {
  TokenIds out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

RawTokens Vocabulary::decode(const TokenIds& ids) const {
  RawTokens out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string line(text.substr(start, end - start));
    start = end + 1;
    if (line_no < kReserved) {
      if (line != v.tokens_[line_no]) {
        throw Error(ErrorKind::FormatError, "vocabulary must start with the reserved block");
      }
    } else {
      if (line.empty() || v.index_.count(line)) {
        throw Error(ErrorKind::FormatError, "empty or duplicate vocabulary entry: '" + line + "'");
      }
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < kReserved) throw Error(ErrorKind::FormatError, "truncated vocabulary");
  v.size_limit_ = v.size() - kReserved;
  return v;
}

std::uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

void VocabularyBuilder::add(const RawTokens& tokens) {
  for (const auto& t : tokens) {
    ++counts_[t];
    ++total_;
  }
}

Vocabulary VocabularyBuilder::build(std::size_t n) const {
  if (n == 0) throw Error(ErrorKind::ConfigInvalid, "vocabulary size limit must be positive");
  if (total_ == 0) throw Error(ErrorKind::EmptyCorpus, "no tokens to build a vocabulary from");

  std::vector<std::pair<std::string_view, std::size_t>> ranked;
  ranked.reserve(counts_.size());
  for (const auto& [tok, count] : counts_) {
    if (!is_reserved(tok)) ranked.emplace_back(tok, count);
  }
  // counts_ is already in surface order, so a stable sort on frequency alone
  // keeps lexicographic order among ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > n) ranked.resize(n);

  Vocabulary v;
  for (const auto& [tok, count] : ranked) v.add(std::string(tok));
  v.size_limit_ = n;
  return v;
}

std::vector<TokenIds> split_sequences(const TokenIds& ids, std::size_t t) {
  if (t < 2) throw Error(ErrorKind::ConfigInvalid, "split length must be at least 2");
  std::vector<TokenIds> chunks;
  for (std::size_t start = 0; start < ids.size(); start += t) {
    const std::size_t end = std::min(ids.size(), start + t);
    chunks.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(start),
                        ids.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return chunks;
}

}  // namespace vulnlm
