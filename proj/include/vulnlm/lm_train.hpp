#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vulnlm/lm.hpp"

namespace vulnlm {

struct RmspropConfig {
  double learning_rate = 0.02;
  double rho = 0.99;
  double epsilon = 1e-7;
};

// Squared-gradient accumulators, one per parameter block.
struct OptimizerState {
  RmspropConfig config;
  LanguageModelParams accumulators;

  static OptimizerState for_params(const LanguageModelParams& p, RmspropConfig config = {});
};

// a <- rho a + (1 - rho) g*g;  theta <- theta - lr g / sqrt(a + eps).
// Throws Error{NonFiniteGradient} before touching anything.
void rmsprop_update(LanguageModelParams& params, const LanguageModelParams& grads,
                    OptimizerState& state);

struct TrainConfig {
  std::size_t batch_size = 50;
  double dropout = 0.5;
  std::size_t nce_samples = 100;
  LossKind loss = LossKind::Nce;
  RmspropConfig optimizer;
  std::size_t max_epochs = 20;
  double validation_fraction = 0.1;
  std::size_t patience = 3;
  std::uint64_t seed = 42;

  // Throws Error{ConfigInvalid}.
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;   // objective per predicted token
  double valid_bits = 0.0;   // validation perplexity, bits per token
};

struct TrainResult {
  LanguageModelParams params;  // snapshot with the lowest validation perplexity
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Splits off cfg.validation_fraction of the sequences (seeded) and trains.
// Throws Error{EmptyCorpus} or Error{DivergedTraining}.
TrainResult train_lm(LanguageModelParams init, std::span<const TokenIds> sequences,
                     const TrainConfig& cfg);

// Explicit validation set. With an empty validation set the final epoch is kept.
TrainResult train_lm(LanguageModelParams init, std::span<const TokenIds> train,
                     std::span<const TokenIds> validation, const TrainConfig& cfg);

// "epoch\ttrain_loss\tvalid_bits" lines.
std::string format_training_log(const std::vector<EpochLog>& log, std::size_t best_epoch);

}  // namespace vulnlm
