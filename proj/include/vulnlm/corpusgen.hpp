#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vulnlm/corpus.hpp"

namespace vulnlm {

// Weights of the lock-style pairs used in guarded methods.
struct PatternWeights {
  double lock_unlock = 1.0;      // ReentrantLock
  double acquire_release = 1.0;  // Semaphore
  double enter_exit = 1.0;       // monitor-style guard
};

struct GenConfig {
  std::size_t apps = 4;
  std::size_t files_per_app = 250;
  std::size_t min_methods = 3;  // guarded method included
  std::size_t max_methods = 6;
  double vulnerable_fraction = 0.4;
  std::size_t identifiers_per_app = 80;
  std::size_t versions = 3;
  double rename_fraction = 0.1;
  std::size_t added_files_per_version = 25;
  PatternWeights patterns;
  std::uint64_t seed = 7;

  // Throws Error{ConfigInvalid}.
  void validate() const;
};

std::string gen_config_to_json(const GenConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
GenConfig gen_config_from_json(std::string_view text);

// Every vulnerable file contains a guarded method that releases inside the try
// block; its clean twin is the same file with the release moved into finally.
// Remaining clean files use the safe ordering throughout. Throws
// Error{ConfigInvalid}.
Corpus generate_corpus(const GenConfig& cfg);

// Source text of one generated file, mostly for inspection and tests.
struct GeneratedFile {
  std::string path;
  std::string source;
  bool vulnerable = false;
};
std::vector<GeneratedFile> generate_sources(const GenConfig& cfg, std::size_t app,
                                            std::size_t version);

std::string app_name(std::size_t app);
// Tokens any app may emit; everything else a generator emits carries the app tag.
const std::vector<std::string>& shared_tokens();

struct PairReport {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  std::vector<std::string> messages;
  std::map<std::string, std::size_t> pairs_per_app;
};

// Checks that each twin pair has equal token multisets and different token
// order. Missing files count as violations.
PairReport verify_pairs(const Corpus& corpus);

// Bracket-dependency sequences over K bracket types and F filler tokens.
// Tokens 0..K-1 open, K..2K-1 close the matching type, 2K.. are filler.
struct BracketConfig {
  std::size_t bracket_types = 16;
  std::size_t filler_tokens = 2;
  double open_probability = 0.1;
  double close_probability = 0.1;
  std::size_t max_depth = 3;
  std::size_t length = 100;
  std::uint64_t seed = 11;
  std::size_t vocab_size() const { return 2 * bracket_types + filler_tokens; }
};

std::vector<TokenIds> generate_brackets(const BracketConfig& cfg, std::size_t count,
                                        std::uint64_t stream);

}  // namespace vulnlm
