#include "vulnlm/protocols.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "vulnlm/error.hpp"

namespace vulnlm {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void note(const ProtocolContext& ctx, const std::string& msg) {
  if (ctx.progress) ctx.progress(msg);
}

struct FittedModel {
  FittedFeatures features;
  ForestModel forest;
};

FittedModel fit_model(const Corpus& corpus, std::span<const std::size_t> train,
                      const ProtocolContext& ctx) {
  FittedModel m;
  m.features = fit_features(corpus, train, ctx.config, ctx.mode, ctx.audit, ctx.progress);
  const FeatureMatrix x = transform(m.features, corpus, train, ctx.config);
  if (ctx.audit) ctx.audit->record_fit("classifier", train);
  m.forest = train_forest(x, labels_of(corpus, train), ctx.config.forest);
  return m;
}

ConfusionMatrix score(const FittedModel& m, const Corpus& corpus, std::span<const std::size_t> test,
                      const ProtocolContext& ctx, const std::vector<bool>* eval_mask) {
  std::vector<std::size_t> scored;
  for (std::size_t i : test) {
    if (!eval_mask || eval_mask->at(i)) scored.push_back(i);
  }
  ConfusionMatrix cm;
  if (scored.empty()) return cm;
  const FeatureMatrix x = transform(m.features, corpus, scored, ctx.config);
  const auto predictions = predict_rows(m.forest, x);
  for (std::size_t r = 0; r < scored.size(); ++r) {
    cm.add(predictions[r].positive, corpus.records[scored[r]].vulnerable);
  }
  return cm;
}

MetricsRow row_for(const ConfusionMatrix& cm, std::string experiment, std::string app,
                   std::string target) {
  MetricsRow row = metrics(cm);
  row.experiment = std::move(experiment);
  row.app = std::move(app);
  row.target = std::move(target);
  return row;
}

}  // namespace

ConfusionMatrix fit_and_score(const Corpus& corpus, std::span<const std::size_t> train,
                              std::span<const std::size_t> test, const ProtocolContext& ctx,
                              const std::vector<bool>* eval_mask) {
  return score(fit_model(corpus, train, ctx), corpus, test, ctx, eval_mask);
}

WithinProjectResult within_project(const Corpus& corpus, std::string_view app,
                                   std::string_view version, const ProtocolContext& ctx,
                                   const std::vector<bool>* eval_mask) {
  const auto indices = corpus.indices_where(app, version);
  if (indices.empty()) {
    throw Error(ErrorKind::EmptyTest, "no records for " + std::string(app) + "/" + std::string(version));
  }
  const auto labels = labels_of(corpus, indices);
  WithinProjectResult result;
  const auto folds = stratified_kfold(labels, ctx.config.folds, derive_seed(ctx.config.seed, 40),
                                      &result.folds_reduced);
  result.folds_used = folds.size();
  if (result.folds_reduced) {
    note(ctx, "warning: folds reduced to " + std::to_string(folds.size()) + " for " + std::string(app));
  }
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t p : folds[f].train) train.push_back(indices[p]);
    for (std::size_t p : folds[f].test) test.push_back(indices[p]);
    const std::string name = "rq1 " + std::string(app) + "/" + std::string(version) + " fold " + std::to_string(f);
    if (ctx.audit) ctx.audit->begin_context(name, test);
    const auto cm = fit_and_score(corpus, train, test, ctx, eval_mask);
    result.folds.push_back(row_for(cm, "rq1", std::string(app), "fold" + std::to_string(f)));
    note(ctx, name + ": F=" + fmt(result.folds.back().f_measure));
  }
  result.average = average_metrics(result.folds);
  result.average.target = std::string(version);
  return result;
}

CrossVersionResult cross_version(const Corpus& corpus, std::string_view app,
                                 std::string_view train_version,
                                 const std::vector<std::string>& test_versions,
                                 const ProtocolContext& ctx) {
  if (test_versions.empty()) throw Error(ErrorKind::EmptyTest, "no target versions for " + std::string(app));
  const auto train = corpus.indices_where(app, train_version);
  if (train.empty()) throw Error(ErrorKind::EmptyCorpus, "no records in training version " + std::string(train_version));
  std::vector<std::vector<std::size_t>> tests;
  std::vector<std::size_t> all_test;
  for (const auto& v : test_versions) {
    if (version_less(v, train_version)) {
      throw Error(ErrorKind::VersionOrder, "target version " + v + " precedes training version " + std::string(train_version));
    }
    auto idx = corpus.indices_where(app, v);
    if (idx.empty()) throw Error(ErrorKind::EmptyTest, "no records in target version " + v);
    if (v != train_version) all_test.insert(all_test.end(), idx.begin(), idx.end());
    tests.push_back(std::move(idx));
  }
  if (ctx.audit) ctx.audit->begin_context("rq2 " + std::string(app), all_test);
  const FittedModel model = fit_model(corpus, train, ctx);
  CrossVersionResult result;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const auto cm = score(model, corpus, tests[t], ctx, nullptr);
    result.targets.push_back(row_for(cm, "rq2", std::string(app), std::string(train_version) + "->" + test_versions[t]));
    note(ctx, "rq2 " + std::string(app) + " " + result.targets.back().target + ": F=" + fmt(result.targets.back().f_measure));
  }
  result.average = average_metrics(result.targets);
  result.average.target = std::string(train_version) + "->later";
  return result;
}

CrossVersionResult cross_version(const Corpus& corpus, std::string_view app,
                                 const ProtocolContext& ctx) {
  const auto versions = corpus.versions(app);
  if (versions.size() < 2) throw Error(ErrorKind::EmptyTest, "app " + std::string(app) + " has a single version");
  return cross_version(corpus, app, versions.front(),
                       std::vector<std::string>(versions.begin() + 1, versions.end()), ctx);
}

bool applicable(const MetricsRow& row) {
  return row.precision > kApplicableThreshold && row.recall > kApplicableThreshold;
}

CrossProjectResult cross_project(const Corpus& corpus, const ProtocolContext& ctx) {
  CrossProjectResult result;
  result.apps = corpus.apps();
  const std::size_t n = result.apps.size();
  if (n < 2) throw Error(ErrorKind::ConfigInvalid, "cross-project evaluation needs at least two apps");
  std::vector<std::vector<std::size_t>> first(n);
  for (std::size_t a = 0; a < n; ++a) {
    first[a] = corpus.indices_where(result.apps[a], corpus.versions(result.apps[a]).front());
  }
  result.results.assign(n, std::vector<MetricsRow>(n));
  result.applicable_counts.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> all_test;
    for (std::size_t t = 0; t < n; ++t) {
      if (t != s) all_test.insert(all_test.end(), first[t].begin(), first[t].end());
    }
    if (ctx.audit) ctx.audit->begin_context("rq3 " + result.apps[s], all_test);
    const FittedModel model = fit_model(corpus, first[s], ctx);
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s) continue;
      const auto cm = score(model, corpus, first[t], ctx, nullptr);
      auto row = row_for(cm, "rq3", result.apps[s], result.apps[t]);
      if (applicable(row)) ++result.applicable_counts[s];
      note(ctx, "rq3 " + result.apps[s] + "->" + result.apps[t] + ": P=" + fmt(row.precision) +
                    " R=" + fmt(row.recall));
      result.results[s][t] = std::move(row);
    }
  }
  for (std::size_t c : result.applicable_counts) result.total += c;
  result.average = static_cast<double>(result.total) / static_cast<double>(n);
  return result;
}

std::string format_within_project(const std::vector<MetricsRow>& rows, FeatureMode mode,
                                  std::string_view provenance) {
  std::ostringstream out;
  const std::string m = feature_mode_name(mode);
  out << "# " << provenance << "\n";
  out << "app\tversion\t" << m << "_P\t" << m << "_R\t" << m << "_F\n";
  for (const auto& r : rows) {
    out << r.app << '\t' << r.target << '\t' << fmt(r.precision) << '\t' << fmt(r.recall) << '\t'
        << fmt(r.f_measure) << '\n';
  }
  if (!rows.empty()) {
    const auto avg = average_metrics(rows);
    out << "Average\t-\t" << fmt(avg.precision) << '\t' << fmt(avg.recall) << '\t' << fmt(avg.f_measure) << '\n';
  }
  return out.str();
}

std::string format_cross_version(const std::vector<MetricsRow>& rows, FeatureMode mode,
                                 std::string_view provenance) {
  std::ostringstream out;
  const std::string m = feature_mode_name(mode);
  out << "# " << provenance << "\n";
  out << "app\tversions\t" << m << "_P\t" << m << "_R\t" << m << "_F\n";
  for (const auto& r : rows) {
    out << r.app << '\t' << r.target << '\t' << fmt(r.precision) << '\t' << fmt(r.recall) << '\t'
        << fmt(r.f_measure) << '\n';
  }
  if (!rows.empty()) {
    const auto avg = average_metrics(rows);
    out << "Average\t-\t" << fmt(avg.precision) << '\t' << fmt(avg.recall) << '\t' << fmt(avg.f_measure) << '\n';
  }
  return out.str();
}

std::string format_cross_project(const CrossProjectResult& result, FeatureMode mode,
                                 std::string_view provenance) {
  std::ostringstream out;
  out << "# " << provenance << "\n";
  out << "app\t" << feature_mode_name(mode) << "_applicable\n";
  for (std::size_t a = 0; a < result.apps.size(); ++a) {
    out << result.apps[a] << '\t' << result.applicable_counts[a] << '\n';
  }
  char avg[32];
  std::snprintf(avg, sizeof avg, "%.2f", result.average);
  out << "Average\t" << avg << '\n';
  out << "Total\t" << result.total << '\n';
  out << "\nsource\ttarget\tP\tR\tF\tapplicable\n";
  for (std::size_t s = 0; s < result.apps.size(); ++s) {
    for (std::size_t t = 0; t < result.apps.size(); ++t) {
      if (s == t) continue;
      const auto& r = result.results[s][t];
      out << result.apps[s] << '\t' << result.apps[t] << '\t' << fmt(r.precision) << '\t'
          << fmt(r.recall) << '\t' << fmt(r.f_measure) << '\t' << (applicable(r) ? "yes" : "no") << '\n';
    }
  }
  return out.str();
}

}  // namespace vulnlm
