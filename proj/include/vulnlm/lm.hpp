#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vulnlm/rng.hpp"
#include "vulnlm/vocabulary.hpp"

namespace vulnlm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class CellKind { Rnn, Lstm };

std::string cell_kind_name(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

// Row blocks of the stacked LSTM weight matrices.
enum class Gate { Input = 0, Forget = 1, Output = 2, Candidate = 3 };

// Parameters of a single-layer recurrent language model.
//
// The RNN uses w_in (d' x d), w_tran (d' x d') and bias (d' x 1). The LSTM
// stacks the four gates row-wise in Gate order, so w_in is 4d' x d, w_tran
// is 4d' x d' and bias is 4d' x 1. The output matrix has no bias term.
struct LanguageModelParams {
  CellKind cell = CellKind::Lstm;
  Matrix embedding;  // d x |V|, one column per token
  Matrix output;     // d' x |V|
  Matrix w_in;
  Matrix w_tran;
  Matrix bias;

  std::size_t vocab_size() const { return static_cast<std::size_t>(embedding.cols()); }
  std::size_t embed_dim() const { return static_cast<std::size_t>(embedding.rows()); }
  std::size_t state_dim() const { return static_cast<std::size_t>(output.rows()); }

  // Uniform in [-scale, scale] for every block.
  static LanguageModelParams init(CellKind cell, std::size_t vocab_size, std::size_t embed_dim,
                                  std::size_t state_dim, std::uint64_t seed, double scale = 0.08);
  static LanguageModelParams zeros(CellKind cell, std::size_t vocab_size, std::size_t embed_dim,
                                   std::size_t state_dim);
  LanguageModelParams zeros_like() const;

  std::vector<std::pair<std::string, Matrix*>> blocks();
  std::vector<std::pair<std::string, const Matrix*>> blocks() const;

  // Throws Error{ShapeMismatch} on inconsistent dimensions.
  void check_shapes() const;
  bool all_finite() const;
};

bool operator==(const LanguageModelParams& a, const LanguageModelParams& b);

double logistic(double x);

// s_t = logistic(b + W_tran s_prev + W_in x_t)
Vector rnn_step(const LanguageModelParams& p, const Vector& x, const Vector& s_prev);

struct LstmState {
  Vector state;
  Vector cell;
};

LstmState lstm_step(const LanguageModelParams& p, const Vector& x, const Vector& s_prev,
                    const Vector& c_prev);

// Per-token hidden states, one column per input token.
struct TokenStateSequence {
  Matrix states;  // d' x n
  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
};

// Inverted-dropout scale factors for the state outputs (entries 0 or 1/(1-rate)).
struct DropoutMask {
  Matrix scale;  // d' x n
  static DropoutMask sample(std::size_t rows, std::size_t cols, double rate, Rng& rng);
};

// Runs the cell from zero state and cell. Throws Error{EmptySequence}.
TokenStateSequence forward_sequence(const LanguageModelParams& p, const TokenIds& ids,
                                    const DropoutMask* mask = nullptr);

// softmax(U^T s), with max subtraction.
Vector next_token_distribution(const LanguageModelParams& p, const Vector& state);
Vector softmax(const Vector& logits);

// Natural-log negative log-likelihood of the whole sequence; the first token
// is predicted from the zero state.
double sequence_log_loss(const LanguageModelParams& p, const TokenIds& ids);

// Unigram noise distribution for NCE.
class NoiseDistribution {
 public:
  NoiseDistribution() = default;
  explicit NoiseDistribution(std::vector<double> probabilities);
  static NoiseDistribution unigram(std::span<const TokenIds> sequences, std::size_t vocab_size);

  double prob(TokenId id) const { return probs_[static_cast<std::size_t>(id)]; }
  TokenId sample(Rng& rng) const { return static_cast<TokenId>(sampler_(rng)); }
  std::size_t size() const { return probs_.size(); }

 private:
  std::vector<double> probs_;
  DiscreteSampler sampler_;
};

// Binary NCE objective for one prediction with scores U_w^T s and a fixed
// normalizer of 1. Throws Error{ZeroNoiseProbability}.
double nce_loss(const LanguageModelParams& p, const Vector& state, TokenId true_id,
                std::span<const TokenId> noise_ids, const NoiseDistribution& noise);

enum class LossKind { Softmax, Nce };

std::string loss_kind_name(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

// Everything random about one training step, fixed up front so that the loss
// is a deterministic function of the parameters.
struct StepNoise {
  const NoiseDistribution* noise = nullptr;  // required for LossKind::Nce
  std::size_t samples_per_target = 0;
  // Noise ids indexed [(position * batch + b) * k + j], positions 0..L-1.
  std::vector<TokenId> noise_ids;
  const DropoutMask* dropout = nullptr;  // d' x (L * batch), time-major

  static StepNoise draw(const NoiseDistribution& noise, std::size_t k, std::size_t length,
                        std::size_t batch, Rng& rng);
};

// Loss summed over a batch of equal-length sequences. When grad is non-null
// it must have the shape of p and receives the full BPTT gradient (overwritten).
double loss_and_gradient(const LanguageModelParams& p, std::span<const TokenIds> batch,
                         LossKind kind, const StepNoise& step, LanguageModelParams* grad);

// Single-sequence convenience wrapper.
LanguageModelParams backward(const LanguageModelParams& p, const TokenIds& ids, LossKind kind,
                             const StepNoise& step, double* loss = nullptr);

// Summed natural-log NLL (exact softmax, no dropout) over the sequences, and
// the number of predicted tokens.
struct NllTotal {
  double nats = 0.0;
  std::size_t tokens = 0;
};
NllTotal corpus_nll(const LanguageModelParams& p, std::span<const TokenIds> sequences);

// Bits per token. Throws Error{EmptyCorpus}.
double perplexity(const LanguageModelParams& p, std::span<const TokenIds> sequences);

}  // namespace vulnlm
