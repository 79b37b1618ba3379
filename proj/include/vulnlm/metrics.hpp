#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vulnlm {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  void add(bool predicted, bool actual);
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct MetricsRow {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::string experiment;
  std::string app;
  std::string target;  // fold, version, or target app
};

// Zero denominators yield 0.
MetricsRow metrics(const ConfusionMatrix& cm);

// Unweighted mean of precision, recall and F over the rows.
MetricsRow average_metrics(std::span<const MetricsRow> rows);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Folds over positions 0..labels.size()-1. Each class is shuffled and dealt
// round-robin, so per-fold positive counts differ by at most one. When the
// minority class has fewer members than `folds`, the fold count drops to that
// size and *reduced is set. Throws Error{TooFewRecords} if either class has
// fewer than two members.
std::vector<Fold> stratified_kfold(const std::vector<bool>& labels, std::size_t folds,
                                   std::uint64_t seed, bool* reduced = nullptr);

}  // namespace vulnlm
