#include "vulnlm/metrics.hpp"

#include <algorithm>

#include "vulnlm/error.hpp"
#include "vulnlm/rng.hpp"

namespace vulnlm {

void ConfusionMatrix::add(bool predicted, bool actual) {
  if (predicted && actual) ++tp;
  else if (predicted) ++fp;
  else if (actual) ++fn;
  else ++tn;
}

MetricsRow metrics(const ConfusionMatrix& cm) {
  MetricsRow row;
  if (cm.tp + cm.fp > 0) row.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) row.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  const double s = row.precision + row.recall;
  if (s > 0.0) row.f_measure = 2.0 * row.precision * row.recall / s;
  return row;
}

MetricsRow average_metrics(std::span<const MetricsRow> rows) {
  MetricsRow avg;
  if (rows.empty()) return avg;
  for (const auto& r : rows) {
    avg.precision += r.precision;
    avg.recall += r.recall;
    avg.f_measure += r.f_measure;
  }
  const auto n = static_cast<double>(rows.size());
  avg.precision /= n;
  avg.recall /= n;
  avg.f_measure /= n;
  avg.experiment = rows.front().experiment;
  avg.app = rows.front().app;
  avg.target = "average";
  return avg;
}

std::vector<Fold> stratified_kfold(const std::vector<bool>& labels, std::size_t folds,
                                   std::uint64_t seed, bool* reduced) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  const std::size_t minority = std::min(pos.size(), neg.size());
  if (folds < 2) throw Error(ErrorKind::ConfigInvalid, "need at least two folds");
  if (minority < 2) {
    throw Error(ErrorKind::TooFewRecords, "each class needs at least two records for cross-validation");
  }
  if (reduced) *reduced = false;
  if (minority < folds) {
    folds = minority;
    if (reduced) *reduced = true;
  }
  Rng rng(derive_seed(seed, 21));
  shuffle(pos, rng);
  shuffle(neg, rng);

  std::vector<std::vector<std::size_t>> test(folds);
  std::size_t next = 0;
  for (std::size_t i : pos) test[next++ % folds].push_back(i);
  for (std::size_t i : neg) test[next++ % folds].push_back(i);

  std::vector<Fold> out(folds);
  std::vector<std::size_t> owner(labels.size());
  for (std::size_t f = 0; f < folds; ++f) {
    std::sort(test[f].begin(), test[f].end());
    for (std::size_t i : test[f]) owner[i] = f;
    out[f].test = std::move(test[f]);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < folds; ++f) {
      if (owner[i] != f) out[f].train.push_back(i);
    }
  }
  return out;
}

}  // namespace vulnlm
