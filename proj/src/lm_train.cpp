#include "vulnlm/lm_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "vulnlm/error.hpp"

namespace vulnlm {

OptimizerState OptimizerState::for_params(const LanguageModelParams& p, RmspropConfig config) {
  return OptimizerState{config, p.zeros_like()};
}

void rmsprop_update(LanguageModelParams& params, const LanguageModelParams& grads,
                    OptimizerState& state) {
  auto pb = params.blocks();
  const auto gb = grads.blocks();
  auto ab = state.accumulators.blocks();
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (gb[i].second->rows() != pb[i].second->rows() ||
        gb[i].second->cols() != pb[i].second->cols() ||
        ab[i].second->rows() != pb[i].second->rows() ||
        ab[i].second->cols() != pb[i].second->cols()) {
      throw Error(ErrorKind::ShapeMismatch, "gradient block '" + pb[i].first + "' has the wrong shape");
    }
    if (!gb[i].second->allFinite()) {
      throw Error(ErrorKind::NonFiniteGradient, "gradient block '" + gb[i].first + "' is not finite");
    }
  }
  const auto& c = state.config;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    auto a = ab[i].second->array();
    const auto g = gb[i].second->array();
    a = c.rho * a + (1.0 - c.rho) * g * g;
    pb[i].second->array() -= c.learning_rate * g / (a + c.epsilon).sqrt();
  }
}

void TrainConfig::validate() const {
  const bool ok = batch_size >= 1 && dropout >= 0.0 && dropout < 1.0 && nce_samples >= 1 &&
                  max_epochs >= 1 && validation_fraction >= 0.0 && validation_fraction < 1.0 &&
                  optimizer.learning_rate > 0.0 && optimizer.rho > 0.0 && optimizer.rho < 1.0 &&
                  optimizer.epsilon > 0.0;
  if (!ok) throw Error(ErrorKind::ConfigInvalid, "invalid language model training configuration");
}

TrainResult train_lm(LanguageModelParams init, std::span<const TokenIds> sequences,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (sequences.empty()) throw Error(ErrorKind::EmptyCorpus, "no training sequences");
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, 1));
  shuffle(order, rng);

  std::size_t n_valid = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(sequences.size())));
  if (cfg.validation_fraction > 0.0 && n_valid == 0 && sequences.size() >= 2) n_valid = 1;
  if (n_valid >= sequences.size()) n_valid = sequences.size() - 1;

  std::vector<TokenIds> train, valid;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_valid ? valid : train).push_back(sequences[order[i]]);
  }
  return train_lm(std::move(init), train, valid, cfg);
}

TrainResult train_lm(LanguageModelParams init, std::span<const TokenIds> train,
                     std::span<const TokenIds> validation, const TrainConfig& cfg) {
  cfg.validate();
  init.check_shapes();
  std::size_t train_tokens = 0;
  for (const auto& s : train) {
    if (s.empty()) throw Error(ErrorKind::EmptySequence, "empty training sequence");
    train_tokens += s.size();
  }
  if (train_tokens == 0) throw Error(ErrorKind::EmptyCorpus, "no training sequences");

  NoiseDistribution noise;
  if (cfg.loss == LossKind::Nce) noise = NoiseDistribution::unigram(train, init.vocab_size());

  // Equal-length groups; a method's short tail chunk batches with other tails
  // of the same length.
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < train.size(); ++i) by_length[train[i].size()].push_back(i);

  Rng order_rng(derive_seed(cfg.seed, 2));
  Rng noise_rng(derive_seed(cfg.seed, 3));
  Rng dropout_rng(derive_seed(cfg.seed, 4));

  TrainResult result;
  result.params = init;
  LanguageModelParams params = std::move(init);
  auto opt = OptimizerState::for_params(params, cfg.optimizer);
  auto grad = params.zeros_like();
  double best_bits = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<TokenIds> batch;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> batches;
    for (auto& [len, idx] : by_length) {
      shuffle(idx, order_rng);
      for (std::size_t s = 0; s < idx.size(); s += cfg.batch_size) {
        const std::size_t e = std::min(idx.size(), s + cfg.batch_size);
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                             idx.begin() + static_cast<std::ptrdiff_t>(e));
      }
    }
    shuffle(batches, order_rng);

    double epoch_loss = 0.0;
    for (const auto& members : batches) {
      batch.clear();
      for (std::size_t i : members) batch.push_back(train[i]);
      const std::size_t len = batch.front().size();
      StepNoise step;
      if (cfg.loss == LossKind::Nce) {
        step = StepNoise::draw(noise, cfg.nce_samples, len, batch.size(), noise_rng);
      }
      DropoutMask mask;
      if (cfg.dropout > 0.0) {
        mask = DropoutMask::sample(params.state_dim(), len * batch.size(), cfg.dropout, dropout_rng);
        step.dropout = &mask;
      }
      epoch_loss += loss_and_gradient(params, batch, cfg.loss, step, &grad);
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (auto& [name, m] : grad.blocks()) *m *= scale;
      rmsprop_update(params, grad, opt);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(train_tokens);
    entry.valid_bits = validation.empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : perplexity(params, validation);
    result.log.push_back(entry);
    if (!std::isfinite(entry.train_loss) || (!validation.empty() && !std::isfinite(entry.valid_bits))) {
      throw Error(ErrorKind::DivergedTraining, "non-finite loss at epoch " + std::to_string(epoch));
    }

    if (validation.empty()) {
      result.params = params;
      result.best_epoch = epoch;
      continue;
    }
    if (entry.valid_bits < best_bits) {
      best_bits = entry.valid_bits;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::string format_training_log(const std::vector<EpochLog>& log, std::size_t best_epoch) {
  std::string out = "epoch\ttrain_loss\tvalid_bits\tbest\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%d\n", e.epoch, e.train_loss, e.valid_bits,
                  e.epoch == best_epoch ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace vulnlm
