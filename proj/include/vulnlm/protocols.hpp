#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vulnlm/metrics.hpp"
#include "vulnlm/pipeline.hpp"

namespace vulnlm {

struct ProtocolContext {
  PipelineConfig config;
  FeatureMode mode = FeatureMode::Joint;
  LeakageAudit* audit = nullptr;
  ProgressFn progress;
};

// Fits features and a forest on `train`, predicts `test`. When `eval_mask` is
// given, only test records with a set mask entry are scored.
ConfusionMatrix fit_and_score(const Corpus& corpus, std::span<const std::size_t> train,
                              std::span<const std::size_t> test, const ProtocolContext& ctx,
                              const std::vector<bool>* eval_mask = nullptr);

struct WithinProjectResult {
  MetricsRow average;
  std::vector<MetricsRow> folds;
  std::size_t folds_used = 0;
  bool folds_reduced = false;
};

// Stratified k-fold over the records of one (app, version); every fitted
// artifact is rebuilt on each training split.
WithinProjectResult within_project(const Corpus& corpus, std::string_view app,
                                   std::string_view version, const ProtocolContext& ctx,
                                   const std::vector<bool>* eval_mask = nullptr);

struct CrossVersionResult {
  MetricsRow average;               // over target versions
  std::vector<MetricsRow> targets;  // one per target version
};

// Train on `train_version`, test on each of `test_versions`. A test version
// equal to the training version is scored as self-evaluation. Throws
// Error{VersionOrder} or Error{EmptyTest}.
CrossVersionResult cross_version(const Corpus& corpus, std::string_view app,
                                 std::string_view train_version,
                                 const std::vector<std::string>& test_versions,
                                 const ProtocolContext& ctx);
// Oldest version against every later one.
CrossVersionResult cross_version(const Corpus& corpus, std::string_view app,
                                 const ProtocolContext& ctx);

inline constexpr double kApplicableThreshold = 0.8;

// Strictly above the threshold on both precision and recall.
bool applicable(const MetricsRow& row);

struct CrossProjectResult {
  std::vector<std::string> apps;
  std::vector<std::vector<MetricsRow>> results;  // [source][target], diagonal unused
  std::vector<std::size_t> applicable_counts;    // per source app
  std::size_t total = 0;
  double average = 0.0;
};

// Every app's first version trains a model that is tested on every other
// app's first version. Throws Error{ConfigInvalid} with fewer than two apps.
CrossProjectResult cross_project(const Corpus& corpus, const ProtocolContext& ctx);

// Delimited tables. `provenance` is written as a leading comment line.
std::string format_within_project(const std::vector<MetricsRow>& rows, FeatureMode mode,
                                  std::string_view provenance);
std::string format_cross_version(const std::vector<MetricsRow>& rows, FeatureMode mode,
                                 std::string_view provenance);
std::string format_cross_project(const CrossProjectResult& result, FeatureMode mode,
                                 std::string_view provenance);

}  // namespace vulnlm
