#include <algorithm>
#include <cmath>
#include <map>

#include "vulnlm/error.hpp"
#include "vulnlm/lm.hpp"

namespace vulnlm {
namespace {

using Index = Eigen::Index;

Matrix logistic_of(const Matrix& z) { return z.unaryExpr([](double v) { return logistic(v); }); }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Forward activations of a batch of equal-length sequences, time-major:
// column t * batch + b holds step t of sequence b.
struct Unrolled {
  Index length = 0;
  Index batch = 0;
  Matrix inputs;  // d x L*B
  Matrix acts;    // RNN: states; LSTM: [i; f; o; g] post-nonlinearity
  Matrix states;  // h x (L+1)*B, first block is the zero initial state
  Matrix cells;   // h x (L+1)*B (LSTM only)
  Matrix tanh_cells;
  Matrix outputs;  // states after dropout, h x L*B
};

Index check_batch(const LanguageModelParams& p, std::span<const TokenIds> batch) {
  if (batch.empty() || batch.front().empty()) {
    throw Error(ErrorKind::EmptySequence, "cannot run the model on an empty sequence");
  }
  const auto length = batch.front().size();
  const auto v = static_cast<TokenId>(p.vocab_size());
  for (const auto& seq : batch) {
    if (seq.size() != length) throw Error(ErrorKind::ShapeMismatch, "batch sequences differ in length");
    for (TokenId id : seq) {
      if (id < 0 || id >= v) throw Error(ErrorKind::ShapeMismatch, "token id out of range");
    }
  }
  return static_cast<Index>(length);
}

Unrolled run_forward(const LanguageModelParams& p, std::span<const TokenIds> batch,
                     const DropoutMask* mask) {
  p.check_shapes();
  Unrolled u;
  u.length = check_batch(p, batch);
  u.batch = static_cast<Index>(batch.size());
  const Index L = u.length, B = u.batch;
  const Index h = static_cast<Index>(p.state_dim());
  const Index cols = L * B;
  if (mask && (mask->scale.rows() != h || mask->scale.cols() != cols)) {
    throw Error(ErrorKind::ShapeMismatch, "dropout mask has the wrong shape");
  }

  u.inputs.resize(static_cast<Index>(p.embed_dim()), cols);
  for (Index t = 0; t < L; ++t) {
    for (Index b = 0; b < B; ++b) {
      u.inputs.col(t * B + b) = p.embedding.col(batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]);
    }
  }
  Matrix proj = p.w_in * u.inputs;
  proj.colwise() += p.bias.col(0);

  u.states = Matrix::Zero(h, (L + 1) * B);
  u.acts.resize(proj.rows(), cols);
  if (p.cell == CellKind::Rnn) {
    for (Index t = 0; t < L; ++t) {
      Matrix z = proj.middleCols(t * B, B) + p.w_tran * u.states.middleCols(t * B, B);
      u.acts.middleCols(t * B, B) = logistic_of(z);
      u.states.middleCols((t + 1) * B, B) = u.acts.middleCols(t * B, B);
    }
  } else {
    u.cells = Matrix::Zero(h, (L + 1) * B);
    u.tanh_cells.resize(h, cols);
    for (Index t = 0; t < L; ++t) {
      Matrix z = proj.middleCols(t * B, B) + p.w_tran * u.states.middleCols(t * B, B);
      auto a = u.acts.middleCols(t * B, B);
      a.topRows(3 * h) = logistic_of(z.topRows(3 * h));
      a.bottomRows(h) = z.bottomRows(h).array().tanh();
      const auto i = a.middleRows(0, h).array();
      const auto f = a.middleRows(h, h).array();
      const auto o = a.middleRows(2 * h, h).array();
      const auto g = a.middleRows(3 * h, h).array();
      u.cells.middleCols((t + 1) * B, B) = f * u.cells.middleCols(t * B, B).array() + i * g;
      u.tanh_cells.middleCols(t * B, B) = u.cells.middleCols((t + 1) * B, B).array().tanh();
      u.states.middleCols((t + 1) * B, B) = o * u.tanh_cells.middleCols(t * B, B).array();
    }
  }
  u.outputs = u.states.rightCols(cols);
  if (mask) u.outputs.array() *= mask->scale.array();
  return u;
}

// Gradient of the loss w.r.t. the dropped-out outputs plus the loss value.
struct OutputLoss {
  double loss = 0.0;
  Matrix d_outputs;  // h x L*B
};

OutputLoss softmax_loss(const LanguageModelParams& p, std::span<const TokenIds> batch,
                        const Unrolled& u, LanguageModelParams* grad) {
  const Index L = u.length, B = u.batch;
  const double log_v = std::log(static_cast<double>(p.vocab_size()));
  OutputLoss out;
  out.loss = static_cast<double>(B) * log_v;  // first tokens, predicted from the zero state
  if (grad) out.d_outputs = Matrix::Zero(u.outputs.rows(), L * B);
  if (L < 2) return out;

  const Index n = (L - 1) * B;
  const auto h_pred = u.outputs.leftCols(n);
  Matrix logits = p.output.transpose() * h_pred;  // V x n
  for (Index c = 0; c < n; ++c) {
    const Index t = c / B, b = c % B;
    const TokenId target = batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t + 1)];
    auto col = logits.col(c);
    const double mx = col.maxCoeff();
    col.array() = (col.array() - mx).exp();
    const double z = col.sum();
    out.loss -= std::log(col(target) / z);
    if (grad) {
      col /= z;
      col(target) -= 1.0;
    }
  }
  if (grad) {
    grad->output.noalias() = h_pred * logits.transpose();
    out.d_outputs.leftCols(n).noalias() = p.output * logits;
  }
  return out;
}

OutputLoss nce_batch_loss(const LanguageModelParams& p, std::span<const TokenIds> batch,
                          const Unrolled& u, const StepNoise& step, LanguageModelParams* grad) {
  const Index L = u.length, B = u.batch;
  const std::size_t k = step.samples_per_target;
  if (!step.noise || k == 0) throw Error(ErrorKind::ConfigInvalid, "NCE needs a noise distribution");
  if (step.noise_ids.size() != static_cast<std::size_t>(L * B) * k) {
    throw Error(ErrorKind::ShapeMismatch, "noise sample count does not match the batch");
  }
  const auto& noise = *step.noise;
  const double log_k = std::log(static_cast<double>(k));
  auto log_kq = [&](TokenId w) {
    const double q = noise.prob(w);
    if (!(q > 0.0)) {
      throw Error(ErrorKind::ZeroNoiseProbability, "token " + std::to_string(w) + " has q = 0");
    }
    return log_k + std::log(q);
  };

  OutputLoss out;
  if (grad) {
    out.d_outputs = Matrix::Zero(u.outputs.rows(), L * B);
    grad->output.setZero();
  }
  for (Index t = 0; t < L; ++t) {
    for (Index b = 0; b < B; ++b) {
      const TokenId target = batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
      const TokenId* noise_ids = step.noise_ids.data() + static_cast<std::size_t>(t * B + b) * k;
      if (t == 0) {
        // Zero state: every score is 0 and nothing depends on the parameters.
        out.loss += softplus(log_kq(target));
        for (std::size_t j = 0; j < k; ++j) out.loss += softplus(-log_kq(noise_ids[j]));
        continue;
      }
      const Index c = (t - 1) * B + b;
      const auto state = u.outputs.col(c);
      const double d_true = p.output.col(target).dot(state) - log_kq(target);
      out.loss += softplus(-d_true);
      if (grad) {
        const double g = logistic(d_true) - 1.0;
        grad->output.col(target) += g * state;
        out.d_outputs.col(c) += g * p.output.col(target);
      }
      for (std::size_t j = 0; j < k; ++j) {
        const TokenId w = noise_ids[j];
        const double d_noise = p.output.col(w).dot(state) - log_kq(w);
        out.loss += softplus(d_noise);
        if (grad) {
          const double g = logistic(d_noise);
          grad->output.col(w) += g * state;
          out.d_outputs.col(c) += g * p.output.col(w);
        }
      }
    }
  }
  return out;
}

void backprop_through_time(const LanguageModelParams& p, std::span<const TokenIds> batch,
                           const Unrolled& u, const DropoutMask* mask, Matrix d_outputs,
                           LanguageModelParams* grad) {
  const Index L = u.length, B = u.batch;
  const Index h = static_cast<Index>(p.state_dim());
  if (mask) d_outputs.array() *= mask->scale.array();

  Matrix d_pre(u.acts.rows(), L * B);
  Matrix d_state = Matrix::Zero(h, B);  // gradient flowing back from step t+1
  if (p.cell == CellKind::Rnn) {
    for (Index t = L - 1; t >= 0; --t) {
      d_state += d_outputs.middleCols(t * B, B);
      const auto s = u.acts.middleCols(t * B, B).array();
      d_pre.middleCols(t * B, B) = d_state.array() * s * (1.0 - s);
      d_state.noalias() = p.w_tran.transpose() * d_pre.middleCols(t * B, B);
    }
  } else {
    Matrix d_cell = Matrix::Zero(h, B);
    for (Index t = L - 1; t >= 0; --t) {
      d_state += d_outputs.middleCols(t * B, B);
      const auto a = u.acts.middleCols(t * B, B);
      const auto i = a.middleRows(0, h).array();
      const auto f = a.middleRows(h, h).array();
      const auto o = a.middleRows(2 * h, h).array();
      const auto g = a.middleRows(3 * h, h).array();
      const auto tc = u.tanh_cells.middleCols(t * B, B).array();
      const auto c_prev = u.cells.middleCols(t * B, B).array();

      d_cell.array() += d_state.array() * o * (1.0 - tc * tc);
      auto dz = d_pre.middleCols(t * B, B);
      dz.middleRows(0, h) = d_cell.array() * g * i * (1.0 - i);
      dz.middleRows(h, h) = d_cell.array() * c_prev * f * (1.0 - f);
      dz.middleRows(2 * h, h) = d_state.array() * tc * o * (1.0 - o);
      dz.middleRows(3 * h, h) = d_cell.array() * i * (1.0 - g * g);
      d_cell.array() *= f;
      d_state.noalias() = p.w_tran.transpose() * dz;
    }
  }

  grad->w_in.noalias() = d_pre * u.inputs.transpose();
  grad->w_tran.noalias() = d_pre * u.states.leftCols(L * B).transpose();
  grad->bias = d_pre.rowwise().sum();
  const Matrix d_inputs = p.w_in.transpose() * d_pre;
  grad->embedding.setZero();
  for (Index t = 0; t < L; ++t) {
    for (Index b = 0; b < B; ++b) {
      grad->embedding.col(batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]) +=
          d_inputs.col(t * B + b);
    }
  }
}

}  // namespace

TokenStateSequence forward_sequence(const LanguageModelParams& p, const TokenIds& ids,
                                    const DropoutMask* mask) {
  const TokenIds* one = &ids;
  const auto u = run_forward(p, std::span<const TokenIds>(one, 1), mask);
  return TokenStateSequence{u.outputs};
}

StepNoise StepNoise::draw(const NoiseDistribution& noise, std::size_t k, std::size_t length,
                          std::size_t batch, Rng& rng) {
  StepNoise s;
  s.noise = &noise;
  s.samples_per_target = k;
  s.noise_ids.resize(length * batch * k);
  for (auto& id : s.noise_ids) id = noise.sample(rng);
  return s;
}

double loss_and_gradient(const LanguageModelParams& p, std::span<const TokenIds> batch,
                         LossKind kind, const StepNoise& step, LanguageModelParams* grad) {
  const auto u = run_forward(p, batch, step.dropout);
  if (grad) {
    if (grad->cell != p.cell || grad->vocab_size() != p.vocab_size() ||
        grad->embed_dim() != p.embed_dim() || grad->state_dim() != p.state_dim()) {
      *grad = p.zeros_like();
    }
  }
  OutputLoss out = kind == LossKind::Softmax ? softmax_loss(p, batch, u, grad)
                                             : nce_batch_loss(p, batch, u, step, grad);
  if (grad) backprop_through_time(p, batch, u, step.dropout, std::move(out.d_outputs), grad);
  return out.loss;
}

LanguageModelParams backward(const LanguageModelParams& p, const TokenIds& ids, LossKind kind,
                             const StepNoise& step, double* loss) {
  auto grad = p.zeros_like();
  const double l = loss_and_gradient(p, std::span<const TokenIds>(&ids, 1), kind, step, &grad);
  if (loss) *loss = l;
  return grad;
}

double sequence_log_loss(const LanguageModelParams& p, const TokenIds& ids) {
  return loss_and_gradient(p, std::span<const TokenIds>(&ids, 1), LossKind::Softmax, {}, nullptr);
}

NllTotal corpus_nll(const LanguageModelParams& p, std::span<const TokenIds> sequences) {
  // Keeps the V x (L*B) logit block at a few million entries.
  constexpr std::size_t kLogitBudget = 1u << 22;
  std::map<std::size_t, std::vector<TokenIds>> by_length;
  for (const auto& s : sequences) {
    if (s.empty()) throw Error(ErrorKind::EmptySequence, "empty sequence in evaluation corpus");
    by_length[s.size()].push_back(s);
  }
  NllTotal total;
  for (const auto& [len, group] : by_length) {
    const std::size_t eval_batch =
        std::clamp<std::size_t>(kLogitBudget / (p.vocab_size() * len), 1, 64);
    for (std::size_t start = 0; start < group.size(); start += eval_batch) {
      const std::size_t n = std::min(eval_batch, group.size() - start);
      total.nats += loss_and_gradient(p, std::span<const TokenIds>(group.data() + start, n),
                                      LossKind::Softmax, {}, nullptr);
      total.tokens += n * len;
    }
  }
  return total;
}

double perplexity(const LanguageModelParams& p, std::span<const TokenIds> sequences) {
  if (sequences.empty()) throw Error(ErrorKind::EmptyCorpus, "no sequences to evaluate");
  const auto total = corpus_nll(p, sequences);
  return total.nats / std::log(2.0) / static_cast<double>(total.tokens);
}

}  // namespace vulnlm
