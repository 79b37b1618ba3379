#include "vulnlm/pipeline.hpp"

#include <json.hpp>

#include "vulnlm/bow.hpp"
#include "vulnlm/error.hpp"
#include "vulnlm/hash.hpp"

namespace vulnlm {

namespace {

using Json = nlohmann::ordered_json;

Json train_to_json(const TrainConfig& t) {
  Json j;
  j["batch_size"] = t.batch_size;
  j["dropout"] = t.dropout;
  j["nce_samples"] = t.nce_samples;
  j["loss"] = loss_kind_name(t.loss);
  j["learning_rate"] = t.optimizer.learning_rate;
  j["rho"] = t.optimizer.rho;
  j["epsilon"] = t.optimizer.epsilon;
  j["max_epochs"] = t.max_epochs;
  j["validation_fraction"] = t.validation_fraction;
  j["patience"] = t.patience;
  j["seed"] = t.seed;
  return j;
}

void train_from_json(const Json& j, TrainConfig& t) {
  for (const auto& [key, v] : j.items()) {
    if (key == "batch_size") t.batch_size = v.get<std::size_t>();
    else if (key == "dropout") t.dropout = v.get<double>();
    else if (key == "nce_samples") t.nce_samples = v.get<std::size_t>();
    else if (key == "loss") t.loss = parse_loss_kind(v.get<std::string>());
    else if (key == "learning_rate") t.optimizer.learning_rate = v.get<double>();
    else if (key == "rho") t.optimizer.rho = v.get<double>();
    else if (key == "epsilon") t.optimizer.epsilon = v.get<double>();
    else if (key == "max_epochs") t.max_epochs = v.get<std::size_t>();
    else if (key == "validation_fraction") t.validation_fraction = v.get<double>();
    else if (key == "patience") t.patience = v.get<std::size_t>();
    else if (key == "seed") t.seed = v.get<std::uint64_t>();
    else throw Error(ErrorKind::ConfigInvalid, "unknown train key: " + key);
  }
}

Json forest_params_to_json(const ForestParams& f) {
  Json j;
  j["n_trees"] = f.n_trees;
  j["max_depth"] = f.max_depth;
  j["min_samples_split"] = f.min_samples_split;
  j["max_features"] = f.max_features;
  j["seed"] = f.seed;
  return j;
}

void forest_params_from_json(const Json& j, ForestParams& f) {
  for (const auto& [key, v] : j.items()) {
    if (key == "n_trees") f.n_trees = v.get<std::size_t>();
    else if (key == "max_depth") f.max_depth = v.get<std::size_t>();
    else if (key == "min_samples_split") f.min_samples_split = v.get<std::size_t>();
    else if (key == "max_features") f.max_features = v.get<std::size_t>();
    else if (key == "seed") f.seed = v.get<std::uint64_t>();
    else throw Error(ErrorKind::ConfigInvalid, "unknown forest key: " + key);
  }
}

std::size_t syntactic_length(const PipelineConfig& cfg) {
  return pooled_length(cfg.file_pooling, pooled_length(cfg.method_pooling, cfg.state_dim));
}

}  // namespace

std::string feature_mode_name(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Bow: return "bow";
    case FeatureMode::Syntactic: return "syntactic";
    case FeatureMode::Semantic: return "semantic";
    case FeatureMode::Joint: return "joint";
  }
  return "bow";
}

FeatureMode parse_feature_mode(std::string_view name) {
  if (name == "bow") return FeatureMode::Bow;
  if (name == "syntactic") return FeatureMode::Syntactic;
  if (name == "semantic") return FeatureMode::Semantic;
  if (name == "joint") return FeatureMode::Joint;
  throw Error(ErrorKind::ConfigInvalid, "unknown feature mode: " + std::string(name));
}

bool uses_lm(FeatureMode mode) { return mode != FeatureMode::Bow; }

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (split_length < 2) fail("split_length must be at least 2");
  if (embed_dim == 0 || state_dim == 0) fail("embed_dim and state_dim must be positive");
  if (codebook_k == 0) fail("codebook_k must be positive");
  if (kmeans_iterations == 0) fail("kmeans_iterations must be positive");
  if (bow_threshold == 0) fail("bow_threshold must be positive");
  if (forest.n_trees == 0) fail("forest.n_trees must be positive");
  if (folds < 2) fail("folds must be at least 2");
  train.validate();
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  Json j;
  j["vocab_size"] = cfg.vocab_size;
  j["split_length"] = cfg.split_length;
  j["cell"] = cell_kind_name(cfg.cell);
  j["embed_dim"] = cfg.embed_dim;
  j["state_dim"] = cfg.state_dim;
  j["train"] = train_to_json(cfg.train);
  j["method_pooling"] = pooling_name(cfg.method_pooling);
  j["file_pooling"] = pooling_name(cfg.file_pooling);
  j["codebook_k"] = cfg.codebook_k;
  j["kmeans_iterations"] = cfg.kmeans_iterations;
  j["bow_threshold"] = cfg.bow_threshold;
  j["forest"] = forest_params_to_json(cfg.forest);
  j["folds"] = cfg.folds;
  j["lm_mode"] = "per_split";
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

PipelineConfig pipeline_config_from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::ConfigInvalid, "config must be a JSON object");
  PipelineConfig cfg;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "vocab_size") cfg.vocab_size = v.get<std::size_t>();
      else if (key == "split_length") cfg.split_length = v.get<std::size_t>();
      else if (key == "cell") cfg.cell = parse_cell_kind(v.get<std::string>());
      else if (key == "embed_dim") cfg.embed_dim = v.get<std::size_t>();
      else if (key == "state_dim") cfg.state_dim = v.get<std::size_t>();
      else if (key == "train") train_from_json(v, cfg.train);
      else if (key == "method_pooling") cfg.method_pooling = parse_pooling(v.get<std::string>());
      else if (key == "file_pooling") cfg.file_pooling = parse_pooling(v.get<std::string>());
      else if (key == "codebook_k") cfg.codebook_k = v.get<std::size_t>();
      else if (key == "kmeans_iterations") cfg.kmeans_iterations = v.get<std::size_t>();
      else if (key == "bow_threshold") cfg.bow_threshold = v.get<std::size_t>();
      else if (key == "forest") forest_params_from_json(v, cfg.forest);
      else if (key == "folds") cfg.folds = v.get<std::size_t>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "lm_mode") {
        if (v.get<std::string>() != "per_split") {
          throw Error(ErrorKind::ConfigInvalid, "only lm_mode \"per_split\" is supported");
        }
      } else {
        throw Error(ErrorKind::ConfigInvalid, "unknown config key: " + key);
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::uint64_t config_hash(const PipelineConfig& cfg) { return fnv1a(pipeline_config_to_json(cfg)); }

void LeakageAudit::begin_context(std::string name, std::span<const std::size_t> test_indices) {
  context_ = std::move(name);
  test_.clear();
  test_.insert(test_indices.begin(), test_indices.end());
  ++contexts_;
}

void LeakageAudit::record_fit(std::string_view step, std::span<const std::size_t> indices) {
  ++fit_calls_;
  for (std::size_t i : indices) {
    if (test_.count(i)) {
      intrusions_.push_back(context_ + ": " + std::string(step) + " saw test record " + std::to_string(i));
    }
  }
}

std::vector<TokenIds> encode_methods(const ExperimentRecord& record, const Vocabulary& vocab) {
  std::vector<TokenIds> out;
  out.reserve(record.methods.size());
  for (const auto& m : record.methods) {
    if (!m.tokens.empty()) out.push_back(vocab.encode(m.tokens));
  }
  return out;
}

std::vector<TokenIds> lm_sequences(const Corpus& corpus, std::span<const std::size_t> indices,
                                   const Vocabulary& vocab, std::size_t split_length) {
  std::vector<TokenIds> out;
  for (std::size_t i : indices) {
    for (const auto& ids : encode_methods(corpus.records.at(i), vocab)) {
      for (auto& chunk : split_sequences(ids, split_length)) out.push_back(std::move(chunk));
    }
  }
  return out;
}

Vocabulary fit_vocabulary(const Corpus& corpus, std::span<const std::size_t> indices,
                          std::size_t size) {
  VocabularyBuilder builder;
  for (std::size_t i : indices) {
    for (const auto& m : corpus.records.at(i).methods) builder.add(m.tokens);
  }
  return builder.build(size);
}

Codebook fit_codebook(const Corpus& corpus, std::span<const std::size_t> indices,
                      const Vocabulary& vocab, const LanguageModelParams& lm,
                      const PipelineConfig& cfg) {
  std::vector<TokenStateSequence> states;
  std::size_t total = 0;
  for (std::size_t i : indices) {
    const auto methods = encode_methods(corpus.records.at(i), vocab);
    for (auto& s : file_token_states(lm, methods, cfg.split_length)) {
      total += s.size();
      states.push_back(std::move(s));
    }
  }
  Matrix all(static_cast<Eigen::Index>(lm.state_dim()), static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& s : states) {
    all.middleCols(col, s.states.cols()) = s.states;
    col += s.states.cols();
  }
  return build_codebook(all, cfg.codebook_k, derive_seed(cfg.seed, 31), cfg.kmeans_iterations);
}

FittedFeatures fit_features(const Corpus& corpus, std::span<const std::size_t> train,
                            const PipelineConfig& cfg, FeatureMode mode, LeakageAudit* audit,
                            const ProgressFn& progress) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorKind::EmptyCorpus, "empty training split");
  FittedFeatures f;
  f.mode = mode;
  if (audit) audit->record_fit("vocabulary", train);
  f.vocab = fit_vocabulary(corpus, train, cfg.vocab_size);
  if (!uses_lm(mode)) return f;

  const auto sequences = lm_sequences(corpus, train, f.vocab, cfg.split_length);
  if (audit) audit->record_fit("language_model", train);
  auto init = LanguageModelParams::init(cfg.cell, f.vocab.size(), cfg.embed_dim, cfg.state_dim,
                                        derive_seed(cfg.seed, 30));
  TrainResult trained = train_lm(std::move(init), sequences, cfg.train);
  if (progress) {
    progress("lm trained: " + std::to_string(sequences.size()) + " sequences, best epoch " +
             std::to_string(trained.best_epoch));
  }
  f.lm = std::move(trained.params);
  f.lm_log = std::move(trained.log);
  f.lm_best_epoch = trained.best_epoch;

  if (mode == FeatureMode::Semantic || mode == FeatureMode::Joint) {
    if (audit) audit->record_fit("codebook", train);
    f.codebook = fit_codebook(corpus, train, f.vocab, *f.lm, cfg);
  }
  return f;
}

FeatureMatrix transform(const FittedFeatures& fitted, const Corpus& corpus,
                        std::span<const std::size_t> indices, const PipelineConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  if (fitted.mode == FeatureMode::Bow) {
    FeatureMatrix x(n, static_cast<Eigen::Index>(fitted.vocab.size()));
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto bins = discretize(bow_features(corpus.records.at(indices[static_cast<std::size_t>(r)]), fitted.vocab),
                                   cfg.bow_threshold);
      for (std::size_t c = 0; c < bins.size(); ++c) x(r, static_cast<Eigen::Index>(c)) = static_cast<double>(bins[c]);
    }
    return x;
  }
  if (!fitted.lm) throw Error(ErrorKind::MissingArtifact, "feature mode needs a language model");
  const bool syn = fitted.mode == FeatureMode::Syntactic || fitted.mode == FeatureMode::Joint;
  const bool sem = fitted.mode == FeatureMode::Semantic || fitted.mode == FeatureMode::Joint;
  if (sem && !fitted.codebook) throw Error(ErrorKind::MissingArtifact, "feature mode needs a codebook");
  const std::size_t syn_len = syn ? syntactic_length(cfg) : 0;
  const std::size_t sem_len = sem ? fitted.codebook->k() : 0;
  FeatureMatrix x(n, static_cast<Eigen::Index>(syn_len + sem_len));

  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& record = corpus.records.at(indices[static_cast<std::size_t>(r)]);
    const auto methods = encode_methods(record, fitted.vocab);
    if (syn) {
      std::vector<Vector> vectors;
      vectors.reserve(methods.size());
      for (const auto& m : methods) {
        vectors.push_back(method_feature(*fitted.lm, m, cfg.split_length, cfg.method_pooling));
      }
      const Vector v = file_syntactic_features(vectors, cfg.file_pooling);
      if (static_cast<std::size_t>(v.size()) != syn_len) {
        throw Error(ErrorKind::ShapeMismatch, "syntactic feature length does not match the configuration");
      }
      x.row(r).head(static_cast<Eigen::Index>(syn_len)) = v.transpose();
    }
    if (sem) {
      const auto states = file_token_states(*fitted.lm, methods, cfg.split_length);
      const auto counts = semantic_features(states, *fitted.codebook);
      for (std::size_t j = 0; j < counts.size(); ++j) {
        x(r, static_cast<Eigen::Index>(syn_len + j)) = static_cast<double>(counts[j]);
      }
    }
  }
  return x;
}

std::vector<std::string> feature_names(const FittedFeatures& fitted, const PipelineConfig& cfg) {
  std::vector<std::string> names;
  if (fitted.mode == FeatureMode::Bow) {
    for (std::size_t i = 0; i < fitted.vocab.size(); ++i) names.push_back("bow_" + std::to_string(i));
    return names;
  }
  if (fitted.mode == FeatureMode::Syntactic || fitted.mode == FeatureMode::Joint) {
    for (std::size_t i = 0; i < syntactic_length(cfg); ++i) names.push_back("syn_" + std::to_string(i));
  }
  if (fitted.mode == FeatureMode::Semantic || fitted.mode == FeatureMode::Joint) {
    const std::size_t k = fitted.codebook ? fitted.codebook->k() : cfg.codebook_k;
    for (std::size_t i = 0; i < k; ++i) names.push_back("sem_" + std::to_string(i));
  }
  return names;
}

std::vector<bool> labels_of(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<bool> y;
  y.reserve(indices.size());
  for (std::size_t i : indices) y.push_back(corpus.records.at(i).vulnerable);
  return y;
}

}  // namespace vulnlm
