#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "vulnlm/checkpoint.hpp"
#include "vulnlm/corpusgen.hpp"
#include "vulnlm/error.hpp"
#include "vulnlm/hash.hpp"
#include "vulnlm/manifest.hpp"
#include "vulnlm/protocols.hpp"

using namespace vulnlm;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitRuntime = 4;

// Flags that override the structured config one to one.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> cell, loss, method_pooling, file_pooling;
  std::optional<double> lr, rho, epsilon, dropout, validation_fraction;
  std::optional<std::size_t> batch_size, nce_samples, vocab_size, split_length, embed_dim, state_dim,
      epochs, patience, codebook_k, kmeans_iterations, bow_threshold, n_trees, max_depth,
      min_samples_split, max_features, folds;
  std::optional<std::uint64_t> seed, lm_seed, forest_seed;
};

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--cell", o.cell, "rnn or lstm");
  app->add_option("--loss", o.loss, "nce or softmax");
  app->add_option("--lr", o.lr, "RMSprop learning rate");
  app->add_option("--rho", o.rho, "RMSprop decay");
  app->add_option("--epsilon", o.epsilon, "RMSprop epsilon");
  app->add_option("--batch-size", o.batch_size);
  app->add_option("--dropout", o.dropout);
  app->add_option("--nce-samples", o.nce_samples);
  app->add_option("--vocab-size", o.vocab_size);
  app->add_option("--split-length", o.split_length);
  app->add_option("--embed-dim", o.embed_dim);
  app->add_option("--state-dim", o.state_dim);
  app->add_option("--epochs", o.epochs);
  app->add_option("--patience", o.patience);
  app->add_option("--validation-fraction", o.validation_fraction);
  app->add_option("--method-pooling", o.method_pooling);
  app->add_option("--file-pooling", o.file_pooling);
  app->add_option("--codebook-k", o.codebook_k);
  app->add_option("--kmeans-iterations", o.kmeans_iterations);
  app->add_option("--bow-threshold", o.bow_threshold);
  app->add_option("--trees", o.n_trees);
  app->add_option("--max-depth", o.max_depth);
  app->add_option("--min-samples-split", o.min_samples_split);
  app->add_option("--max-features", o.max_features);
  app->add_option("--folds", o.folds);
  app->add_option("--seed", o.seed, "pipeline seed");
  app->add_option("--lm-seed", o.lm_seed, "LM shuffling and dropout seed");
  app->add_option("--forest-seed", o.forest_seed);
}

PipelineConfig resolve(const Overrides& o, PipelineConfig cfg = {}) {
  if (o.config) cfg = pipeline_config_from_json(read_file(*o.config));
  if (o.cell) cfg.cell = parse_cell_kind(*o.cell);
  if (o.loss) cfg.train.loss = parse_loss_kind(*o.loss);
  if (o.lr) cfg.train.optimizer.learning_rate = *o.lr;
  if (o.rho) cfg.train.optimizer.rho = *o.rho;
  if (o.epsilon) cfg.train.optimizer.epsilon = *o.epsilon;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.dropout) cfg.train.dropout = *o.dropout;
  if (o.nce_samples) cfg.train.nce_samples = *o.nce_samples;
  if (o.vocab_size) cfg.vocab_size = *o.vocab_size;
  if (o.split_length) cfg.split_length = *o.split_length;
  if (o.embed_dim) cfg.embed_dim = *o.embed_dim;
  if (o.state_dim) cfg.state_dim = *o.state_dim;
  if (o.epochs) cfg.train.max_epochs = *o.epochs;
  if (o.patience) cfg.train.patience = *o.patience;
  if (o.validation_fraction) cfg.train.validation_fraction = *o.validation_fraction;
  if (o.method_pooling) cfg.method_pooling = parse_pooling(*o.method_pooling);
  if (o.file_pooling) cfg.file_pooling = parse_pooling(*o.file_pooling);
  if (o.codebook_k) cfg.codebook_k = *o.codebook_k;
  if (o.kmeans_iterations) cfg.kmeans_iterations = *o.kmeans_iterations;
  if (o.bow_threshold) cfg.bow_threshold = *o.bow_threshold;
  if (o.n_trees) cfg.forest.n_trees = *o.n_trees;
  if (o.max_depth) cfg.forest.max_depth = *o.max_depth;
  if (o.min_samples_split) cfg.forest.min_samples_split = *o.min_samples_split;
  if (o.max_features) cfg.forest.max_features = *o.max_features;
  if (o.folds) cfg.folds = *o.folds;
  if (o.seed) cfg.seed = *o.seed;
  if (o.lm_seed) cfg.train.seed = *o.lm_seed;
  if (o.forest_seed) cfg.forest.seed = *o.forest_seed;
  cfg.validate();
  return cfg;
}

std::map<std::string, std::uint64_t> seeds_of(const PipelineConfig& cfg) {
  return {{"pipeline", cfg.seed}, {"lm", cfg.train.seed}, {"forest", cfg.forest.seed}};
}

// Artifacts produced by this tool must verify against their manifests.
// A corpus without a manifest is treated as external input.
void check_input(const fs::path& path, bool manifest_required) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingArtifact, "input not found: " + path.string());
  if (manifest_required || fs::exists(manifest_path_for(path))) verify_artifact(path);
}

// Configuration recorded by the command that produced `artifact`.
PipelineConfig upstream_config(const fs::path& artifact) {
  return pipeline_config_from_json(read_manifest(artifact).config_json);
}

struct Selection {
  std::string app;
  std::string version;
};

void add_selection(CLI::App* app, Selection& s) {
  app->add_option("--app", s.app, "restrict to one app");
  app->add_option("--version", s.version, "restrict to one version");
}

std::vector<std::size_t> select(const Corpus& corpus, const Selection& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    if (!s.app.empty() && r.app != s.app) continue;
    if (!s.version.empty() && r.version != s.version) continue;
    out.push_back(i);
  }
  if (out.empty()) throw Error(ErrorKind::EmptyCorpus, "selection matches no records");
  return out;
}

class Recorder {
 public:
  Recorder(std::string command, std::string config_json, std::map<std::string, std::uint64_t> seeds) {
    m_.command = std::move(command);
    m_.config_json = std::move(config_json);
    m_.seeds = std::move(seeds);
    m_.started_at = utc_timestamp();
  }
  void input(const std::string& role, const fs::path& p) { m_.inputs.push_back(artifact_ref(role, p)); }
  void output(const std::string& role, const fs::path& p) {
    outputs_.push_back(p);
    m_.outputs.push_back(artifact_ref(role, p));
  }
  void finish() {
    m_.finished_at = utc_timestamp();
    for (const auto& p : outputs_) write_manifest(p, m_);
  }

 private:
  RunManifest m_;
  std::vector<fs::path> outputs_;
};

ProgressFn progress_for(bool verbose) {
  if (!verbose) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::string feature_table(const Corpus& corpus, std::span<const std::size_t> idx, const FeatureMatrix& x,
                          const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "app\tversion\tpath\tlabel";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& rec = corpus.records[idx[r]];
    out << rec.app << '\t' << rec.version << '\t' << rec.path << '\t' << (rec.vulnerable ? 1 : 0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", x(static_cast<Eigen::Index>(r), c));
      out << '\t' << buf;
    }
    out << '\n';
  }
  return out.str();
}

void read_feature_table(std::string_view text, FeatureMatrix& x, std::vector<bool>& y) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::FormatError, "empty feature table");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) + 1;
  if (columns < 5) throw Error(ErrorKind::FormatError, "feature table has no feature columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(line.substr(start, pos - start));
    }
    cells.push_back(line.substr(start));
    if (cells.size() != columns) throw Error(ErrorKind::FormatError, "ragged feature table row");
    y.push_back(cells[3] == "1");
    std::vector<double> v;
    for (std::size_t c = 4; c < cells.size(); ++c) {
      try {
        v.push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw Error(ErrorKind::FormatError, "bad feature value: " + cells[c]);
      }
    }
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyLabels, "feature table has no rows");
  x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns - 4));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
}

void emit(const fs::path& out, const std::string& text) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out, text);
}

std::string provenance(const fs::path& table, const PipelineConfig& cfg, const fs::path& corpus) {
  return "manifest=" + manifest_path_for(table).filename().string() + " config=" + hex64(config_hash(cfg)) +
         " corpus=" + hash_file(corpus);
}

int run(int argc, char** argv) {
  CLI::App app{"Vulnerability prediction with recurrent language model features"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress on standard error");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "generator config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "corpus path (.jsonl)")->required();

  // train-lm
  auto* tlm = app.add_subcommand("train-lm", "train the language model");
  Overrides tlm_o;
  Selection tlm_s;
  std::string tlm_corpus, tlm_out, tlm_vocab, tlm_log;
  tlm->add_option("--corpus", tlm_corpus)->required();
  tlm->add_option("--out", tlm_out, "checkpoint path")->required();
  tlm->add_option("--vocab-out", tlm_vocab, "default: <out>.vocab");
  tlm->add_option("--log-out", tlm_log, "default: <out>.log");
  add_config_flags(tlm, tlm_o);
  add_selection(tlm, tlm_s);

  // build-codebook
  auto* bcb = app.add_subcommand("build-codebook", "k-means codebook over token states");
  Overrides bcb_o;
  Selection bcb_s;
  std::string bcb_corpus, bcb_ckpt, bcb_vocab, bcb_out;
  bcb->add_option("--corpus", bcb_corpus)->required();
  bcb->add_option("--checkpoint", bcb_ckpt)->required();
  bcb->add_option("--vocab", bcb_vocab)->required();
  bcb->add_option("--out", bcb_out)->required();
  add_config_flags(bcb, bcb_o);
  add_selection(bcb, bcb_s);

  // extract-features
  auto* ext = app.add_subcommand("extract-features", "per-file feature table");
  Overrides ext_o;
  Selection ext_s;
  std::string ext_corpus, ext_mode = "joint", ext_vocab, ext_ckpt, ext_codebook, ext_out;
  ext->add_option("--corpus", ext_corpus)->required();
  ext->add_option("--mode", ext_mode, "bow, syntactic, semantic or joint");
  ext->add_option("--vocab", ext_vocab, "required unless mode is bow");
  ext->add_option("--checkpoint", ext_ckpt);
  ext->add_option("--codebook", ext_codebook);
  ext->add_option("--out", ext_out)->required();
  add_config_flags(ext, ext_o);
  add_selection(ext, ext_s);

  // train-clf
  auto* tclf = app.add_subcommand("train-clf", "random forest on a feature table");
  Overrides tclf_o;
  std::string tclf_features, tclf_out;
  tclf->add_option("--features", tclf_features)->required();
  tclf->add_option("--out", tclf_out)->required();
  add_config_flags(tclf, tclf_o);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run one research question");
  Overrides ev_o;
  std::string ev_corpus, ev_clf, ev_mode = "joint", ev_out, ev_app;
  int ev_rq = 1;
  ev->add_option("--corpus", ev_corpus)->required();
  ev->add_option("--classifier", ev_clf, "trained classifier; its manifest supplies the configuration")->required();
  ev->add_option("--rq", ev_rq)->required()->check(CLI::IsMember({1, 2, 3}));
  ev->add_option("--mode", ev_mode, "bow, syntactic, semantic or joint");
  ev->add_option("--app", ev_app, "restrict RQ1/RQ2 to one app");
  ev->add_option("--out", ev_out, "table path")->required();
  add_config_flags(ev, ev_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  const auto progress = progress_for(verbose);

  if (*gen) {
    const GenConfig cfg = gen_config_from_json(read_file(gen_config));
    const Corpus corpus = generate_corpus(cfg);
    const PairReport report = verify_pairs(corpus);
    if (report.violations > 0) {
      throw Error(ErrorKind::PairViolation, std::to_string(report.violations) + " twin pairs fail: " + report.messages[0]);
    }
    if (fs::path(gen_out).has_parent_path()) fs::create_directories(fs::path(gen_out).parent_path());
    save_corpus(gen_out, corpus);
    Recorder rec("gen-corpus", gen_config_to_json(cfg), {{"corpus", cfg.seed}});
    rec.input("generator_config", gen_config);
    rec.output("corpus", gen_out);
    rec.output("pairs", pairs_path_for(gen_out));
    rec.finish();
    std::cout << corpus.records.size() << " files, " << report.pairs << " twin pairs, 0 violations\n";
    return 0;
  }

  if (*tlm) {
    check_input(tlm_corpus, false);
    const PipelineConfig cfg = resolve(tlm_o);
    const Corpus corpus = load_corpus(tlm_corpus);
    const auto idx = select(corpus, tlm_s);
    const FittedFeatures fitted = fit_features(corpus, idx, cfg, FeatureMode::Syntactic, nullptr, progress);
    const fs::path out = tlm_out;
    const fs::path vocab_out = tlm_vocab.empty() ? fs::path(tlm_out + ".vocab") : fs::path(tlm_vocab);
    const fs::path log_out = tlm_log.empty() ? fs::path(tlm_out + ".log") : fs::path(tlm_log);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_checkpoint(out, *fitted.lm, fitted.vocab.hash());
    emit(vocab_out, fitted.vocab.serialize());
    emit(log_out, format_training_log(fitted.lm_log, fitted.lm_best_epoch));
    Recorder rec("train-lm", pipeline_config_to_json(cfg), seeds_of(cfg));
    rec.input("corpus", tlm_corpus);
    rec.output("checkpoint", out);
    rec.output("vocabulary", vocab_out);
    rec.output("training_log", log_out);
    rec.finish();
    std::cout << "best epoch " << fitted.lm_best_epoch << '\n';
    return 0;
  }

  if (*bcb) {
    check_input(bcb_corpus, false);
    check_input(bcb_ckpt, true);
    check_input(bcb_vocab, true);
    const PipelineConfig cfg = resolve(bcb_o, upstream_config(bcb_ckpt));
    const Corpus corpus = load_corpus(bcb_corpus);
    const Vocabulary vocab = Vocabulary::parse(read_file(bcb_vocab));
    const Checkpoint ckpt = load_checkpoint(bcb_ckpt);
    if (ckpt.vocab_hash != vocab.hash()) throw Error(ErrorKind::HashMismatch, "checkpoint was trained with another vocabulary");
    const auto idx = select(corpus, bcb_s);
    const Codebook cb = fit_codebook(corpus, idx, vocab, ckpt.params, cfg);
    emit(bcb_out, codebook_to_json(cb));
    Recorder rec("build-codebook", pipeline_config_to_json(cfg), seeds_of(cfg));
    rec.input("corpus", bcb_corpus);
    rec.input("checkpoint", bcb_ckpt);
    rec.input("vocabulary", bcb_vocab);
    rec.output("codebook", bcb_out);
    rec.finish();
    std::cout << "codebook k=" << cb.k() << " inertia " << cb.inertia << '\n';
    return 0;
  }

  if (*ext) {
    check_input(ext_corpus, false);
    const FeatureMode mode = parse_feature_mode(ext_mode);
    PipelineConfig base;
    if (!ext_codebook.empty() && fs::exists(ext_codebook)) base = upstream_config(ext_codebook);
    else if (!ext_ckpt.empty() && fs::exists(ext_ckpt)) base = upstream_config(ext_ckpt);
    const PipelineConfig cfg = resolve(ext_o, base);
    const Corpus corpus = load_corpus(ext_corpus);
    const auto idx = select(corpus, ext_s);
    Recorder rec("extract-features", pipeline_config_to_json(cfg), seeds_of(cfg));
    rec.input("corpus", ext_corpus);
    FittedFeatures fitted;
    fitted.mode = mode;
    if (!ext_vocab.empty()) {
      check_input(ext_vocab, true);
      fitted.vocab = Vocabulary::parse(read_file(ext_vocab));
      rec.input("vocabulary", ext_vocab);
    } else if (mode == FeatureMode::Bow) {
      fitted.vocab = fit_vocabulary(corpus, idx, cfg.vocab_size);
    } else {
      throw Error(ErrorKind::MissingArtifact, "--vocab is required for mode " + ext_mode);
    }
    if (uses_lm(mode)) {
      if (ext_ckpt.empty()) throw Error(ErrorKind::MissingArtifact, "--checkpoint is required for mode " + ext_mode);
      check_input(ext_ckpt, true);
      const Checkpoint ckpt = load_checkpoint(ext_ckpt);
      if (ckpt.vocab_hash != fitted.vocab.hash()) throw Error(ErrorKind::HashMismatch, "checkpoint was trained with another vocabulary");
      fitted.lm = ckpt.params;
      rec.input("checkpoint", ext_ckpt);
    }
    if (mode == FeatureMode::Semantic || mode == FeatureMode::Joint) {
      if (ext_codebook.empty()) throw Error(ErrorKind::MissingArtifact, "--codebook is required for mode " + ext_mode);
      check_input(ext_codebook, true);
      fitted.codebook = codebook_from_json(read_file(ext_codebook));
      rec.input("codebook", ext_codebook);
    }
    const FeatureMatrix x = transform(fitted, corpus, idx, cfg);
    emit(ext_out, feature_table(corpus, idx, x, feature_names(fitted, cfg)));
    rec.output("features", ext_out);
    rec.finish();
    std::cout << idx.size() << " rows, " << x.cols() << " features\n";
    return 0;
  }

  if (*tclf) {
    check_input(tclf_features, true);
    // The upstream configuration carries over unless overridden.
    const PipelineConfig cfg = resolve(tclf_o, upstream_config(tclf_features));
    FeatureMatrix x;
    std::vector<bool> y;
    read_feature_table(read_file(tclf_features), x, y);
    const ForestModel model = train_forest(x, y, cfg.forest);
    emit(tclf_out, forest_to_json(model));
    Recorder rec("train-clf", pipeline_config_to_json(cfg), seeds_of(cfg));
    rec.input("features", tclf_features);
    rec.output("classifier", tclf_out);
    rec.finish();
    const auto oob = oob_score(model, x, y);
    std::printf("%zu trees, out-of-bag accuracy %.4f over %zu rows\n", model.trees.size(), oob.accuracy, oob.evaluated);
    return 0;
  }

  // evaluate
  check_input(ev_corpus, false);
  check_input(ev_clf, true);
  const PipelineConfig cfg = resolve(ev_o, upstream_config(ev_clf));
  const FeatureMode mode = parse_feature_mode(ev_mode);
  const Corpus corpus = load_corpus(ev_corpus);
  LeakageAudit audit;
  const ProtocolContext ctx{cfg, mode, &audit, progress};
  std::vector<std::string> apps = corpus.apps();
  if (!ev_app.empty()) {
    if (std::find(apps.begin(), apps.end(), ev_app) == apps.end()) throw Error(ErrorKind::EmptyTest, "unknown app " + ev_app);
    apps = {ev_app};
  }
  const std::string prov = provenance(ev_out, cfg, ev_corpus);
  std::string table;
  if (ev_rq == 1) {
    std::vector<MetricsRow> rows;
    for (const auto& a : apps) {
      auto r = within_project(corpus, a, corpus.versions(a).front(), ctx);
      rows.push_back(r.average);
    }
    table = format_within_project(rows, mode, prov);
  } else if (ev_rq == 2) {
    std::vector<MetricsRow> rows;
    for (const auto& a : apps) {
      if (corpus.versions(a).size() < 2) continue;
      // One row per app, averaged over the later versions.
      auto r = cross_version(corpus, a, ctx);
      r.average.app = a;
      rows.push_back(r.average);
    }
    if (rows.empty()) throw Error(ErrorKind::EmptyTest, "no app has more than one version");
    table = format_cross_version(rows, mode, prov);
  } else {
    table = format_cross_project(cross_project(corpus, ctx), mode, prov);
  }
  if (!audit.intrusions().empty()) {
    throw std::runtime_error("leakage audit: " + audit.intrusions().front());
  }
  emit(ev_out, table);
  Recorder rec("evaluate", pipeline_config_to_json(cfg), seeds_of(cfg));
  rec.input("corpus", ev_corpus);
  rec.input("classifier", ev_clf);
  rec.output("table", ev_out);
  rec.finish();
  std::cout << table;
  return 0;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingArtifact:
    case ErrorKind::HashMismatch:
      return kExitArtifact;
    case ErrorKind::ConfigInvalid:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

void report(std::string_view kind, std::string_view message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    report(error_kind_name(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    report("RuntimeError", e.what());
    return kExitRuntime;
  }
}
