#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vulnlm/lexer.hpp"
#include "vulnlm/vocabulary.hpp"

namespace vulnlm {

struct MethodTokens {
  std::size_t method_index = 0;  // 0 is the class header
  RawTokens tokens;              // normalized surface tokens
};

// One source file with its vulnerability label.
struct ExperimentRecord {
  std::string app;
  std::string version;
  std::string path;
  std::vector<MethodTokens> methods;
  bool vulnerable = false;

  std::size_t token_count() const;
  RawTokens all_tokens() const;
};

// A vulnerable/clean file pair whose token multisets are identical.
struct TwinPair {
  std::string app;
  std::string version;
  std::string vulnerable_path;
  std::string clean_path;
};

struct Corpus {
  std::vector<ExperimentRecord> records;
  std::vector<TwinPair> pairs;

  std::vector<std::size_t> indices_where(std::string_view app, std::string_view version) const;
  std::vector<std::string> apps() const;
  // Versions of one app in natural order ("v2" < "v10").
  std::vector<std::string> versions(std::string_view app) const;
  // Record indices that belong to some twin pair.
  std::vector<bool> twin_mask() const;
};

// lex + normalize + drop empty sequences. Throws Error{EmptyMethod} when no
// token survives.
ExperimentRecord record_from_source(std::string app, std::string version, std::string path,
                                    std::string_view source, bool vulnerable);

// Throws Error{EmptyMethod} if no method has tokens.
std::vector<MethodTokens> to_method_tokens(const std::vector<RawTokens>& lexed);

// Natural ordering for version strings: digit runs compare numerically.
bool version_less(std::string_view a, std::string_view b);

// One JSON object per line: app, version, path, label, methods.
std::string corpus_to_jsonl(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> corpus_from_jsonl(std::string_view text);
std::string pairs_to_json(const std::vector<TwinPair>& pairs);
std::vector<TwinPair> pairs_from_json(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// <path> plus its ".pairs.json" sidecar when present.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
std::filesystem::path pairs_path_for(const std::filesystem::path& corpus_path);

}  // namespace vulnlm
