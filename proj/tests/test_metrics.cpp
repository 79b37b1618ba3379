#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "vulnlm/error.hpp"
#include "vulnlm/metrics.hpp"

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

std::vector<bool> labels(std::size_t pos, std::size_t neg) {
  std::vector<bool> y(pos, true);
  y.insert(y.end(), neg, false);
  return y;
}

}  // namespace

TEST_CASE("precision, recall and F") {
  ConfusionMatrix cm{3, 1, 2, 10};
  const auto m = metrics(cm);
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(0.6));
  CHECK(m.f_measure == doctest::Approx(2 * 0.75 * 0.6 / 1.35));

  const auto zero = metrics(ConfusionMatrix{0, 0, 0, 5});
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f_measure == 0.0);

  // 19 of 20 predicted positives are right and every positive is found.
  const auto near_perfect = metrics(ConfusionMatrix{19, 1, 0, 30});
  CHECK(near_perfect.precision == doctest::Approx(0.95));
  CHECK(near_perfect.recall == 1.0);
  CHECK(near_perfect.f_measure == doctest::Approx(0.974).epsilon(1e-3));

  ConfusionMatrix acc;
  acc.add(true, true);
  acc.add(true, false);
  acc.add(false, true);
  acc.add(false, false);
  CHECK(acc.tp == 1);
  CHECK(acc.fp == 1);
  CHECK(acc.fn == 1);
  CHECK(acc.tn == 1);
}

TEST_CASE("averages are unweighted") {
  std::vector<MetricsRow> rows(2);
  rows[0].precision = 1.0;
  rows[0].recall = 0.5;
  rows[0].f_measure = 0.6;
  rows[1].precision = 0.5;
  rows[1].recall = 1.0;
  rows[1].f_measure = 0.8;
  const auto avg = average_metrics(rows);
  CHECK(avg.precision == 0.75);
  CHECK(avg.recall == 0.75);
  CHECK(avg.f_measure == doctest::Approx(0.7));
  CHECK(avg.target == "average");
}

TEST_CASE("stratified folds") {
  for (auto [pos, neg] : {std::pair<std::size_t, std::size_t>{20, 80}, {21, 90}, {11, 11}}) {
    const auto y = labels(pos, neg);
    const auto folds = stratified_kfold(y, 10, 3);
    REQUIRE(folds.size() == 10);
    std::multiset<std::size_t> seen;
    std::size_t lo = 1000, hi = 0;
    for (const auto& f : folds) {
      std::size_t p = 0;
      for (auto i : f.test) {
        seen.insert(i);
        p += y[i];
      }
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      CHECK(f.train.size() + f.test.size() == y.size());
      std::vector<std::size_t> both = f.train;
      both.insert(both.end(), f.test.begin(), f.test.end());
      std::sort(both.begin(), both.end());
      CHECK(std::adjacent_find(both.begin(), both.end()) == both.end());
    }
    CHECK(seen.size() == y.size());
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == y.size());
    CHECK(hi - lo <= 1);
  }

  const auto y = labels(20, 80);
  CHECK(stratified_kfold(y, 10, 3)[4].test == stratified_kfold(y, 10, 3)[4].test);

  bool reduced = false;
  CHECK(stratified_kfold(labels(4, 40), 10, 1, &reduced).size() == 4);
  CHECK(reduced);
  CHECK(kind_of([] { stratified_kfold(labels(1, 40), 10, 1); }) == ErrorKind::TooFewRecords);
  CHECK(kind_of([] { stratified_kfold(labels(5, 5), 1, 1); }) == ErrorKind::ConfigInvalid);
}
