#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulnlm/codebook.hpp"
#include "vulnlm/corpus.hpp"
#include "vulnlm/features.hpp"
#include "vulnlm/forest.hpp"
#include "vulnlm/lm.hpp"
#include "vulnlm/lm_train.hpp"
#include "vulnlm/vocabulary.hpp"

namespace vulnlm {

enum class FeatureMode { Bow, Syntactic, Semantic, Joint };

std::string feature_mode_name(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view name);
bool uses_lm(FeatureMode mode);

struct PipelineConfig {
  std::size_t vocab_size = 5000;
  std::size_t split_length = 100;
  CellKind cell = CellKind::Lstm;
  std::size_t embed_dim = 50;
  std::size_t state_dim = 50;
  TrainConfig train;
  Pooling method_pooling = Pooling::Mean;
  Pooling file_pooling = Pooling::Std;
  std::size_t codebook_k = 50;
  std::size_t kmeans_iterations = 300;
  std::size_t bow_threshold = 5;
  ForestParams forest;
  std::size_t folds = 10;
  std::uint64_t seed = 1;

  // Throws Error{ConfigInvalid}.
  void validate() const;
};

std::string pipeline_config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(std::string_view text);
std::uint64_t config_hash(const PipelineConfig& cfg);

// Tracks which record indices reach each fitting step and flags any that
// belong to the test split of the current context.
class LeakageAudit {
 public:
  void begin_context(std::string name, std::span<const std::size_t> test_indices);
  void record_fit(std::string_view step, std::span<const std::size_t> indices);

  const std::vector<std::string>& intrusions() const { return intrusions_; }
  std::size_t fit_calls() const { return fit_calls_; }
  std::size_t contexts() const { return contexts_; }

 private:
  std::string context_;
  std::set<std::size_t> test_;
  std::vector<std::string> intrusions_;
  std::size_t fit_calls_ = 0;
  std::size_t contexts_ = 0;
};

// Per-method token ids of one file, each method split into chunks of at most
// split_length tokens.
std::vector<TokenIds> encode_methods(const ExperimentRecord& record, const Vocabulary& vocab);
std::vector<TokenIds> lm_sequences(const Corpus& corpus, std::span<const std::size_t> indices,
                                   const Vocabulary& vocab, std::size_t split_length);

Vocabulary fit_vocabulary(const Corpus& corpus, std::span<const std::size_t> indices,
                          std::size_t size);

// Everything fitted on a training split except the classifier.
struct FittedFeatures {
  FeatureMode mode = FeatureMode::Bow;
  Vocabulary vocab;
  std::optional<LanguageModelParams> lm;
  std::optional<Codebook> codebook;
  std::vector<EpochLog> lm_log;
  std::size_t lm_best_epoch = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

FittedFeatures fit_features(const Corpus& corpus, std::span<const std::size_t> train,
                            const PipelineConfig& cfg, FeatureMode mode,
                            LeakageAudit* audit = nullptr, const ProgressFn& progress = {});

// Codebook over the token states of the given files.
Codebook fit_codebook(const Corpus& corpus, std::span<const std::size_t> indices,
                      const Vocabulary& vocab, const LanguageModelParams& lm,
                      const PipelineConfig& cfg);

// Feature rows for the files at `indices`, in that order.
FeatureMatrix transform(const FittedFeatures& fitted, const Corpus& corpus,
                        std::span<const std::size_t> indices, const PipelineConfig& cfg);
std::vector<std::string> feature_names(const FittedFeatures& fitted, const PipelineConfig& cfg);

std::vector<bool> labels_of(const Corpus& corpus, std::span<const std::size_t> indices);

}  // namespace vulnlm
