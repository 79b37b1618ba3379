#include <algorithm>
#include <cmath>

#include "vulnlm/error.hpp"
#include "vulnlm/lm.hpp"

namespace vulnlm {

std::string cell_kind_name(CellKind kind) { return kind == CellKind::Rnn ? "rnn" : "lstm"; }

CellKind parse_cell_kind(std::string_view name) {
  if (name == "rnn") return CellKind::Rnn;
  if (name == "lstm") return CellKind::Lstm;
  throw Error(ErrorKind::ConfigInvalid, "unknown cell kind '" + std::string(name) + "'");
}

std::string loss_kind_name(LossKind kind) { return kind == LossKind::Nce ? "nce" : "softmax"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "nce") return LossKind::Nce;
  if (name == "softmax") return LossKind::Softmax;
  throw Error(ErrorKind::ConfigInvalid, "unknown loss kind '" + std::string(name) + "'");
}

LanguageModelParams LanguageModelParams::zeros(CellKind cell, std::size_t vocab_size,
                                               std::size_t embed_dim, std::size_t state_dim) {
  if (vocab_size == 0 || embed_dim == 0 || state_dim == 0) {
    throw Error(ErrorKind::ShapeMismatch, "model dimensions must be positive");
  }
  const auto v = static_cast<Eigen::Index>(vocab_size);
  const auto d = static_cast<Eigen::Index>(embed_dim);
  const auto h = static_cast<Eigen::Index>(state_dim);
  const Eigen::Index gates = cell == CellKind::Lstm ? 4 : 1;
  LanguageModelParams p;
  p.cell = cell;
  p.embedding = Matrix::Zero(d, v);
  p.output = Matrix::Zero(h, v);
  p.w_in = Matrix::Zero(gates * h, d);
  p.w_tran = Matrix::Zero(gates * h, h);
  p.bias = Matrix::Zero(gates * h, 1);
  return p;
}

LanguageModelParams LanguageModelParams::init(CellKind cell, std::size_t vocab_size,
                                              std::size_t embed_dim, std::size_t state_dim,
                                              std::uint64_t seed, double scale) {
  auto p = zeros(cell, vocab_size, embed_dim, state_dim);
  std::uint64_t stream = 0;
  for (auto& [name, m] : p.blocks()) {
    Rng rng(derive_seed(seed, stream++));
    for (Eigen::Index j = 0; j < m->cols(); ++j) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) (*m)(i, j) = uniform_real(rng, -scale, scale);
    }
  }
  return p;
}

LanguageModelParams LanguageModelParams::zeros_like() const {
  return zeros(cell, vocab_size(), embed_dim(), state_dim());
}

std::vector<std::pair<std::string, Matrix*>> LanguageModelParams::blocks() {
  return {{"embedding", &embedding}, {"output", &output}, {"w_in", &w_in},
          {"w_tran", &w_tran},       {"bias", &bias}};
}

std::vector<std::pair<std::string, const Matrix*>> LanguageModelParams::blocks() const {
  return {{"embedding", &embedding}, {"output", &output}, {"w_in", &w_in},
          {"w_tran", &w_tran},       {"bias", &bias}};
}

void LanguageModelParams::check_shapes() const {
  const auto h = output.rows();
  const Eigen::Index gates = cell == CellKind::Lstm ? 4 : 1;
  const bool ok = embedding.cols() == output.cols() && embedding.cols() > 0 && h > 0 &&
                  embedding.rows() > 0 && w_in.rows() == gates * h &&
                  w_in.cols() == embedding.rows() && w_tran.rows() == gates * h &&
                  w_tran.cols() == h && bias.rows() == gates * h && bias.cols() == 1;
  if (!ok) throw Error(ErrorKind::ShapeMismatch, "inconsistent language model parameter shapes");
}

bool LanguageModelParams::all_finite() const {
  for (const auto& [name, m] : blocks()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

bool operator==(const LanguageModelParams& a, const LanguageModelParams& b) {
  if (a.cell != b.cell) return false;
  const auto ba = a.blocks();
  const auto bb = b.blocks();
  for (std::size_t i = 0; i < ba.size(); ++i) {
    const Matrix& x = *ba[i].second;
    const Matrix& y = *bb[i].second;
    if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
  }
  return true;
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_step_inputs(const LanguageModelParams& p, CellKind expected, const Vector& x,
                       const Vector& s_prev) {
  p.check_shapes();
  if (p.cell != expected) {
    throw Error(ErrorKind::ShapeMismatch, "step called for the wrong cell kind");
  }
  if (static_cast<std::size_t>(x.size()) != p.embed_dim() ||
      static_cast<std::size_t>(s_prev.size()) != p.state_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "step input has the wrong length");
  }
}

}  // namespace

Vector rnn_step(const LanguageModelParams& p, const Vector& x, const Vector& s_prev) {
  check_step_inputs(p, CellKind::Rnn, x, s_prev);
  Vector a = p.bias.col(0) + p.w_tran * s_prev + p.w_in * x;
  return a.unaryExpr([](double v) { return logistic(v); });
}

LstmState lstm_step(const LanguageModelParams& p, const Vector& x, const Vector& s_prev,
                    const Vector& c_prev) {
  check_step_inputs(p, CellKind::Lstm, x, s_prev);
  const auto h = static_cast<Eigen::Index>(p.state_dim());
  if (c_prev.size() != h) throw Error(ErrorKind::ShapeMismatch, "cell input has the wrong length");
  const Vector z = p.bias.col(0) + p.w_tran * s_prev + p.w_in * x;
  auto sig = [](double v) { return logistic(v); };
  const Vector i = z.segment(0 * h, h).unaryExpr(sig);
  const Vector f = z.segment(1 * h, h).unaryExpr(sig);
  const Vector o = z.segment(2 * h, h).unaryExpr(sig);
  const Vector g = z.segment(3 * h, h).array().tanh();
  LstmState out;
  out.cell = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  out.state = o.cwiseProduct(Vector(out.cell.array().tanh()));
  return out;
}

DropoutMask DropoutMask::sample(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  DropoutMask m;
  m.scale = Matrix::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                             1.0 / (1.0 - rate));
  if (rate <= 0.0) return m;
  for (Eigen::Index j = 0; j < m.scale.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.scale.rows(); ++i) {
      if (uniform01(rng) < rate) m.scale(i, j) = 0.0;
    }
  }
  return m;
}

Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return e / e.sum();
}

Vector next_token_distribution(const LanguageModelParams& p, const Vector& state) {
  if (static_cast<std::size_t>(state.size()) != p.state_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "state has the wrong length");
  }
  return softmax(p.output.transpose() * state);
}

NoiseDistribution::NoiseDistribution(std::vector<double> probabilities)
    : probs_(std::move(probabilities)), sampler_(probs_) {}

NoiseDistribution NoiseDistribution::unigram(std::span<const TokenIds> sequences,
                                             std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  double total = 0.0;
  for (const auto& seq : sequences) {
    for (TokenId id : seq) {
      counts.at(static_cast<std::size_t>(id)) += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw Error(ErrorKind::EmptyCorpus, "no tokens for the noise distribution");
  for (double& c : counts) c /= total;
  return NoiseDistribution(std::move(counts));
}

double nce_loss(const LanguageModelParams& p, const Vector& state, TokenId true_id,
                std::span<const TokenId> noise_ids, const NoiseDistribution& noise) {
  const double k = static_cast<double>(noise_ids.size());
  auto delta = [&](TokenId w) {
    const double q = noise.prob(w);
    if (!(q > 0.0)) {
      throw Error(ErrorKind::ZeroNoiseProbability, "token " + std::to_string(w) + " has q = 0");
    }
    return p.output.col(w).dot(state) - std::log(k * q);
  };
  // -log sigma(x) = log1p(exp(-x)), -log(1 - sigma(x)) = log1p(exp(x)), computed stably.
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  double loss = softplus(-delta(true_id));
  for (TokenId w : noise_ids) loss += softplus(delta(w));
  return loss;
}

}  // namespace vulnlm
