// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>

#include "gradcheck.hpp"
#include "vulnlm/checkpoint.hpp"
#include "vulnlm/codebook.hpp"
#include "vulnlm/corpusgen.hpp"
#include "vulnlm/features.hpp"
#include "vulnlm/lm_train.hpp"
#include "vulnlm/protocols.hpp"

using namespace vulnlm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Gradient fidelity over 5 seeds for each cell and loss.
Outcome gradients() {
  double worst = 0.0;
  std::string where;
  int instances = 0;
  const std::vector<double> flat(20, 1.0 / 20);
  const NoiseDistribution noise(flat);
  for (CellKind cell : {CellKind::Rnn, CellKind::Lstm}) {
    for (LossKind kind : {LossKind::Softmax, LossKind::Nce}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(derive_seed(seed, 100 + static_cast<int>(cell) * 2 + static_cast<int>(kind)));
        const auto p = LanguageModelParams::init(cell, 20, 8, 8, rng(), 0.5);
        std::vector<TokenIds> batch(2, TokenIds(12));
        for (auto& s : batch) {
          for (auto& t : s) t = static_cast<TokenId>(uniform_index(rng, 20));
        }
        StepNoise step = kind == LossKind::Nce ? StepNoise::draw(noise, 5, 12, 2, rng) : StepNoise{};
        const auto r = oracle::gradient_check(p, batch, kind, step);
        ++instances;
        if (r.worst_relative_error > worst) {
          worst = r.worst_relative_error;
          where = cell_kind_name(cell) + "/" + loss_kind_name(kind) + "/" + r.worst_block;
        }
      }
    }
  }
  return {worst <= 1e-4 && instances >= 20,
          fmt("%d instances, worst relative error %.2e (%s)", instances, worst, where.c_str())};
}

Outcome normalization() {
  Rng rng(2);
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = LanguageModelParams::init(CellKind::Lstm, 1 + uniform_index(rng, 300), 4, 6, rng(), 2.0);
    Vector s(6);
    for (auto& v : s) v = uniform_real(rng, -3, 3);
    worst_sum = std::max(worst_sum, std::abs(next_token_distribution(p, s).sum() - 1.0));
    Vector z(p.vocab_size());
    for (auto& v : z) v = uniform_real(rng, -20, 20);
    const Vector base = softmax(z);
    for (double shift : {-50.0, -7.5, 0.25, 50.0}) {
      const Vector moved = softmax((z.array() + shift).matrix());
      worst_shift = std::max(worst_shift, (moved - base).cwiseAbs().maxCoeff());
      worst_sum = std::max(worst_sum, std::abs(moved.sum() - 1.0));
    }
  }
  return {worst_sum <= 1e-9 && worst_shift <= 1e-9,
          fmt("max |sum-1| %.1e, max shift deviation %.1e", worst_sum, worst_shift)};
}

Outcome uniform_perplexity() {
  const auto p = LanguageModelParams::zeros(CellKind::Lstm, 1024, 4, 4);
  std::vector<TokenIds> seqs = {{1, 2, 3, 1000, 5}, {7, 7}};
  const double bits = perplexity(p, seqs);
  const auto q = LanguageModelParams::zeros(CellKind::Rnn, 30, 2, 3);
  const double bits30 = perplexity(q, seqs = {{1, 2, 29}});
  return {bits == 10.0 && std::abs(bits30 - std::log2(30.0)) <= 1e-12,
          fmt("|V|=1024 gives %.15g bits, |V|=30 gives %.15g (log2 30 = %.15g)", bits, bits30, std::log2(30.0))};
}

// Bracket corpus with matching pairs that span up to ~100 tokens.
Outcome long_range() {
  BracketConfig bc;
  bc.bracket_types = 32;
  bc.filler_tokens = 2;
  bc.open_probability = 0.12;
  bc.close_probability = 0.12;
  bc.max_depth = 3;
  bc.length = 100;
  const auto train = generate_brackets(bc, 10000, 1);
  const auto valid = generate_brackets(bc, 1000, 2);
  const auto test = generate_brackets(bc, 1000, 3);
  TrainConfig cfg;
  cfg.loss = LossKind::Softmax;
  cfg.dropout = 0.0;
  cfg.max_epochs = 12;
  cfg.patience = 0;
  cfg.optimizer.learning_rate = 0.005;
  double bits[2];
  for (CellKind cell : {CellKind::Rnn, CellKind::Lstm}) {
    const auto r = train_lm(LanguageModelParams::init(cell, bc.vocab_size(), 50, 50, 5), train, valid, cfg);
    bits[static_cast<int>(cell == CellKind::Lstm)] = perplexity(r.params, test);
  }
  const double ppl_rnn = std::exp2(bits[0]), ppl_lstm = std::exp2(bits[1]);
  const double bit_gain = 1.0 - bits[1] / bits[0];
  const double ppl_gain = 1.0 - ppl_lstm / ppl_rnn;
  return {bit_gain >= 0.05,
          fmt("RNN %.4f bits (ppl %.3f), LSTM %.4f bits (ppl %.3f): %.1f%% fewer bits, %.1f%% lower ppl",
              bits[0], ppl_rnn, bits[1], ppl_lstm, 100 * bit_gain, 100 * ppl_gain)};
}

Outcome nce_adequacy() {
  BracketConfig bc;
  bc.bracket_types = 14;
  bc.filler_tokens = 2;
  const auto train = generate_brackets(bc, 2000, 1);
  const auto valid = generate_brackets(bc, 200, 2);
  const auto test = generate_brackets(bc, 200, 3);
  double ppl[2];
  for (LossKind kind : {LossKind::Softmax, LossKind::Nce}) {
    TrainConfig cfg;
    cfg.loss = kind;
    cfg.nce_samples = 10;
    cfg.dropout = 0.0;
    cfg.max_epochs = 8;
    const auto r = train_lm(LanguageModelParams::init(CellKind::Lstm, bc.vocab_size(), 32, 32, 5), train, valid, cfg);
    ppl[kind == LossKind::Nce] = std::exp2(perplexity(r.params, test));
  }
  const double ratio = ppl[1] / ppl[0];
  return {bc.vocab_size() == 30 && ratio <= 1.15,
          fmt("|V|=%zu, softmax ppl %.4f, NCE(k=10) ppl %.4f, ratio %.4f", bc.vocab_size(), ppl[0], ppl[1], ratio)};
}

PipelineConfig desk_syntactic_config() {
  PipelineConfig c;
  c.embed_dim = 32;
  c.state_dim = 32;
  c.train.loss = LossKind::Softmax;
  c.train.dropout = 0.2;
  c.train.max_epochs = 15;
  c.train.patience = 0;
  c.method_pooling = Pooling::Max;
  c.file_pooling = Pooling::Max;
  return c;
}

Outcome separability() {
  const Corpus corpus = generate_corpus(GenConfig{});
  const PairReport report = verify_pairs(corpus);
  const auto mask = corpus.twin_mask();
  const PipelineConfig cfg = desk_syntactic_config();
  std::string detail = fmt("%zu pairs, %zu violations;", report.pairs, report.violations);
  double f[2] = {0, 0};
  const auto apps = corpus.apps();
  for (FeatureMode mode : {FeatureMode::Bow, FeatureMode::Syntactic}) {
    const ProtocolContext ctx{cfg, mode, nullptr, {}};
    const int slot = mode == FeatureMode::Syntactic;
    detail += " " + feature_mode_name(mode);
    for (const auto& app : apps) {
      const auto r = within_project(corpus, app, "v1", ctx, &mask);
      f[slot] += r.average.f_measure / static_cast<double>(apps.size());
      detail += fmt(" %s=%.3f", app.c_str(), r.average.f_measure);
    }
    detail += fmt(" mean=%.3f;", f[slot]);
  }
  return {report.violations == 0 && report.pairs > 0 && f[0] <= 0.60 && f[1] >= 0.90, detail};
}

Outcome codebook_figure() {
  Codebook cb;
  cb.centroids = (Matrix(2, 3) << 0, 10, 0, 0, 0, 10).finished();
  Matrix s(2, 10);
  s << 0.1, -0.2, 0.3, 9.8, 10.1, 0.2, -0.1, 0.4, 0.0, 0.3,
       0.2, 0.1, -0.3, 0.1, -0.2, 9.9, 10.2, 9.7, 10.0, 10.1;
  const std::vector<TokenStateSequence> file = {TokenStateSequence{s}};
  const auto v = semantic_features(file, cb);
  return {v == std::vector<std::size_t>{3, 2, 5}, fmt("semantic vector [%zu, %zu, %zu]", v[0], v[1], v[2])};
}

Outcome kmeans() {
  Rng rng(8);
  std::size_t violations = 0, steps = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + uniform_index(rng, 5));
    const auto n = static_cast<Eigen::Index>(20 + uniform_index(rng, 200));
    Matrix pts(d, n);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = uniform_real(rng, -1, 1);
    const Codebook cb = build_codebook(pts, 2 + uniform_index(rng, 8), rng());
    for (std::size_t i = 1; i < cb.inertia_history.size(); ++i) {
      ++steps;
      if (cb.inertia_history[i] > cb.inertia_history[i - 1]) ++violations;
    }
  }
  const Matrix means = (Matrix(2, 3) << 0, 30, -30, 0, 30, 30).finished();
  Matrix blobs(2, 3 * 6);
  const double off[6][2] = {{2, 0}, {-2, 0}, {0, 1}, {0, -1}, {1.5, 1.5}, {-1.5, -1.5}};
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < 6; ++i) {
      blobs(0, b * 6 + i) = means(0, b) + off[i][0];
      blobs(1, b * 6 + i) = means(1, b) + off[i][1];
    }
  }
  const Codebook cb = build_codebook(blobs, 3, 4);
  double worst = 0.0;
  for (int b = 0; b < 3; ++b) {
    double best = 1e300;
    for (int j = 0; j < 3; ++j) best = std::min(best, (cb.centroids.col(j) - means.col(b)).cwiseAbs().maxCoeff());
    worst = std::max(worst, best);
  }
  return {violations == 0 && worst <= 1e-6,
          fmt("%zu inertia increases over %zu Lloyd steps on 100 datasets; blob error %.1e", violations, steps, worst)};
}

Outcome metric_formulas() {
  const auto m = metrics(ConfusionMatrix{19, 1, 0, 80});
  const double rounded = std::round(m.f_measure * 100) / 100;
  const auto z = metrics(ConfusionMatrix{0, 0, 0, 9});
  const auto z2 = metrics(ConfusionMatrix{0, 4, 0, 9});
  const bool zeros = z.precision == 0 && z.recall == 0 && z.f_measure == 0 && z2.precision == 0 &&
                     z2.recall == 0 && z2.f_measure == 0;
  return {std::abs(m.precision - 0.95) < 1e-12 && m.recall == 1.0 && rounded == 0.97 && zeros,
          fmt("P=%.2f R=%.2f F=%.4f rounds to %.2f; zero denominators give 0: %s", m.precision, m.recall,
              m.f_measure, rounded, zeros ? "yes" : "no")};
}

Outcome protocol_integrity() {
  GenConfig gen;
  gen.files_per_app = 40;
  gen.added_files_per_version = 8;
  const Corpus corpus = generate_corpus(gen);
  PipelineConfig cfg;
  cfg.embed_dim = cfg.state_dim = 6;
  cfg.train.max_epochs = 1;
  cfg.codebook_k = 8;
  cfg.folds = 5;
  cfg.forest.n_trees = 10;
  LeakageAudit audit;
  for (FeatureMode mode : {FeatureMode::Bow, FeatureMode::Joint}) {
    const ProtocolContext ctx{cfg, mode, &audit, {}};
    for (const auto& app : corpus.apps()) {
      within_project(corpus, app, "v1", ctx);
      cross_version(corpus, app, ctx);
    }
    cross_project(corpus, ctx);
  }

  std::size_t unbalanced = 0, bad_partitions = 0;
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<bool> y(30 + uniform_index(rng, 200));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = bernoulli(rng, 0.3);
    y[0] = y[1] = y[2] = true;
    y[3] = y[4] = y[5] = false;
    const auto folds = stratified_kfold(y, 10, rng());
    std::size_t lo = y.size(), hi = 0;
    std::multiset<std::size_t> seen;
    for (const auto& f : folds) {
      std::size_t pos = 0;
      for (auto i : f.test) {
        pos += y[i];
        seen.insert(i);
      }
      lo = std::min(lo, pos);
      hi = std::max(hi, pos);
      if (f.train.size() + f.test.size() != y.size()) ++bad_partitions;
    }
    if (hi - lo > 1) ++unbalanced;
    if (seen.size() != y.size() || std::set<std::size_t>(seen.begin(), seen.end()).size() != y.size()) ++bad_partitions;
  }

  MetricsRow edge;
  edge.precision = 0.80;
  edge.recall = 1.0;
  MetricsRow above = edge;
  above.precision = 0.8000001;
  const bool strict = !applicable(edge) && applicable(above);

  return {audit.intrusions().empty() && audit.fit_calls() > 0 && unbalanced == 0 && bad_partitions == 0 && strict,
          fmt("%zu intrusions over %zu fitting steps in %zu contexts; %zu unbalanced and %zu broken fold sets; "
              "strict threshold: %s",
              audit.intrusions().size(), audit.fit_calls(), audit.contexts(), unbalanced, bad_partitions,
              strict ? "yes" : "no")};
}

// Everything a run persists, rendered to bytes.
std::vector<std::string> run_artifacts() {
  GenConfig gen;
  gen.apps = 2;
  gen.files_per_app = 30;
  gen.versions = 2;
  gen.added_files_per_version = 6;
  const Corpus corpus = generate_corpus(gen);
  PipelineConfig cfg;
  cfg.embed_dim = cfg.state_dim = 8;
  cfg.train.max_epochs = 2;
  cfg.codebook_k = 6;
  cfg.folds = 3;
  cfg.forest.n_trees = 15;
  const auto idx = corpus.indices_where("alpha", "v1");
  const FittedFeatures fitted = fit_features(corpus, idx, cfg, FeatureMode::Joint);
  const FeatureMatrix x = transform(fitted, corpus, idx, cfg);
  std::string features(reinterpret_cast<const char*>(x.data()), sizeof(double) * static_cast<std::size_t>(x.size()));
  const ProtocolContext ctx{cfg, FeatureMode::Joint, nullptr, {}};
  const auto rq1 = within_project(corpus, "alpha", "v1", ctx);
  const auto rq2 = cross_version(corpus, "alpha", ctx);
  const auto rq3 = cross_project(corpus, ctx);
  return {corpus_to_jsonl(corpus.records) + pairs_to_json(corpus.pairs),
          encode_checkpoint(*fitted.lm, fitted.vocab.hash()),
          codebook_to_json(*fitted.codebook),
          features,
          format_within_project({rq1.average}, FeatureMode::Joint, "p") +
              format_cross_version(rq2.targets, FeatureMode::Joint, "p") +
              format_cross_project(rq3, FeatureMode::Joint, "p")};
}

Outcome determinism() {
  const auto a = run_artifacts();
  const auto b = run_artifacts();
  const char* names[] = {"corpus", "checkpoint", "codebook", "features", "tables"};
  std::string detail;
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool eq = a[i] == b[i];
    same = same && eq;
    detail += fmt("%s%s %s (%zu bytes)", i ? ", " : "", names[i], eq ? "identical" : "DIFFER", a[i].size());
  }
  return {same, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradients},
      {"softmax normalization", normalization},
      {"uniform-model perplexity", uniform_perplexity},
      {"LSTM beats RNN on long-range brackets", long_range},
      {"NCE adequacy", nce_adequacy},
      {"motivating-example separability", separability},
      {"codebook figure", codebook_figure},
      {"k-means contract", kmeans},
      {"metric formulas", metric_formulas},
      {"protocol integrity", protocol_integrity},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s: %s [%.1fs] %s\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
