#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "vulnlm/corpusgen.hpp"
#include "vulnlm/error.hpp"

using namespace vulnlm;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::FormatError;
}

GenConfig small() {
  GenConfig cfg;
  cfg.apps = 3;
  cfg.files_per_app = 40;
  cfg.versions = 2;
  cfg.added_files_per_version = 10;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("twin pairs are permutations") {
  const Corpus c = generate_corpus(small());
  const PairReport report = verify_pairs(c);
  CHECK(report.violations == 0);
  CHECK(report.pairs > 0);
  CHECK(report.pairs_per_app.size() == 3);

  Corpus broken = c;
  const auto& p = broken.pairs.front();
  for (auto& r : broken.records) {
    if (r.app == p.app && r.version == p.version && r.path == p.clean_path) {
      r.methods.back().tokens.push_back("extraToken");
    }
  }
  const PairReport bad = verify_pairs(broken);
  CHECK(bad.violations == 1);
  REQUIRE(bad.messages.size() == 1);
  CHECK(bad.messages[0].find("multisets") != std::string::npos);

  Corpus same = c;
  for (auto& r : same.records) {
    if (r.app == p.app && r.version == p.version && r.path == p.clean_path) {
      for (const auto& v : same.records) {
        if (v.app == p.app && v.version == p.version && v.path == p.vulnerable_path) r.methods = v.methods;
      }
    }
  }
  CHECK(verify_pairs(same).violations == 1);

  Corpus missing = c;
  missing.pairs.push_back({"alpha", "v1", "nope.java", "nada.java"});
  CHECK(verify_pairs(missing).violations == 1);
}

TEST_CASE("label counts and determinism") {
  const GenConfig cfg = small();
  const Corpus c = generate_corpus(cfg);
  CHECK(c.apps().size() == 3);
  for (const auto& app : c.apps()) {
    CHECK(c.versions(app) == std::vector<std::string>{"v1", "v2"});
    const auto v1 = c.indices_where(app, "v1");
    const auto v2 = c.indices_where(app, "v2");
    CHECK(v1.size() == 40);
    CHECK(v2.size() == 50);
    auto vulnerable = [&](const std::vector<std::size_t>& idx) {
      return std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return c.records[i].vulnerable; });
    };
    CHECK(vulnerable(v1) == 16);
    CHECK(vulnerable(v2) == 20);
  }
  CHECK(corpus_to_jsonl(generate_corpus(cfg).records) == corpus_to_jsonl(c.records));

  GenConfig other = cfg;
  other.seed = 6;
  CHECK(corpus_to_jsonl(generate_corpus(other).records) != corpus_to_jsonl(c.records));

  const auto files = generate_sources(cfg, 0, 1);
  CHECK(files.size() == 40);
  CHECK(files[0].source.find("package com.alpha.") != std::string::npos);
}

TEST_CASE("identifier pools are disjoint across apps") {
  const Corpus c = generate_corpus(small());
  const std::set<std::string> shared(shared_tokens().begin(), shared_tokens().end());
  std::map<std::string, std::set<std::string>> own;
  for (const auto& r : c.records) {
    for (const auto& t : r.all_tokens()) {
      if (!shared.count(t)) own[r.app].insert(t);
    }
  }
  REQUIRE(own.size() == 3);
  for (const auto& [a, ta] : own) {
    for (const auto& [b, tb] : own) {
      if (a >= b) continue;
      std::vector<std::string> common;
      std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
      CHECK_MESSAGE(common.empty(), a << " and " << b << " share " << (common.empty() ? "" : common[0]));
    }
  }
}

TEST_CASE("generator config") {
  const GenConfig cfg = small();
  CHECK(gen_config_to_json(gen_config_from_json(gen_config_to_json(cfg))) == gen_config_to_json(cfg));
  CHECK(kind_of([] { gen_config_from_json(R"({"apples": 3})"); }) == ErrorKind::ConfigInvalid);
  CHECK(kind_of([] { gen_config_from_json(R"({"vulnerable_fraction": 1.5})"); }) == ErrorKind::ConfigInvalid);
  CHECK(app_name(0) == "alpha");
  CHECK(app_name(100) == "app100");
}

TEST_CASE("bracket sequences are well nested") {
  BracketConfig cfg;
  const auto seqs = generate_brackets(cfg, 50, 1);
  REQUIRE(seqs.size() == 50);
  const auto K = static_cast<TokenId>(cfg.bracket_types);
  std::size_t opens = 0;
  for (const auto& s : seqs) {
    CHECK(s.size() == cfg.length);
    std::vector<TokenId> stack;
    for (TokenId t : s) {
      CHECK(t < static_cast<TokenId>(cfg.vocab_size()));
      if (t < K) {
        stack.push_back(t);
        ++opens;
        CHECK(stack.size() <= cfg.max_depth);
      } else if (t < 2 * K) {
        REQUIRE(!stack.empty());
        CHECK(t - K == stack.back());
        stack.pop_back();
      }
    }
  }
  CHECK(opens > 0);
  CHECK(generate_brackets(cfg, 50, 1) == seqs);
  CHECK(generate_brackets(cfg, 50, 2) != seqs);
}
