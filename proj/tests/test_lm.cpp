#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vulnlm/checkpoint.hpp"
#include "vulnlm/error.hpp"
#include "vulnlm/lm.hpp"
#include "vulnlm/lm_train.hpp"

using namespace vulnlm;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::FormatError;
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = uniform_real(rng, -1, 1);
  return v;
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

TokenIds random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  TokenIds ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(uniform_index(rng, vocab));
  return ids;
}

}  // namespace

TEST_CASE("rnn_step") {
  auto zero = LanguageModelParams::zeros(CellKind::Rnn, 4, 3, 3);
  Rng rng(5);
  const Vector s = rnn_step(zero, random_vector(3, rng), random_vector(3, rng));
  for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(s(i) == 0.5);

  zero.bias.setConstant(25.0);
  const Vector sat = rnn_step(zero, random_vector(3, rng), random_vector(3, rng));
  for (Eigen::Index i = 0; i < sat.size(); ++i) CHECK(sat(i) == doctest::Approx(1.0).epsilon(1e-8));

  const auto p = LanguageModelParams::init(CellKind::Rnn, 4, 3, 3, 11, 0.7);
  const Vector x = random_vector(3, rng), prev = random_vector(3, rng);
  const auto expect = oracle::rnn_step(p, to_std(x), to_std(prev));
  const Vector got = rnn_step(p, x, prev);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got(static_cast<Eigen::Index>(i)) == doctest::Approx(expect[i]).epsilon(1e-12));

  auto bad = p;
  bad.w_tran.resize(2, 2);
  CHECK(kind_of([&] { rnn_step(bad, x, prev); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("lstm_step") {
  Rng rng(7);
  const auto zero = LanguageModelParams::zeros(CellKind::Lstm, 4, 4, 4);
  const auto z = lstm_step(zero, random_vector(4, rng), random_vector(4, rng), Vector::Zero(4));
  CHECK(z.state.isZero(0.0));

  const auto p = LanguageModelParams::init(CellKind::Lstm, 6, 4, 4, 13, 0.6);
  const Vector x = random_vector(4, rng), s = random_vector(4, rng), c = random_vector(4, rng);
  const auto expect = oracle::lstm_step(p, to_std(x), to_std(s), to_std(c));
  const auto got = lstm_step(p, x, s, c);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(got.state(static_cast<Eigen::Index>(i)) == doctest::Approx(expect.state[i]).epsilon(1e-12));
    CHECK(got.cell(static_cast<Eigen::Index>(i)) == doctest::Approx(expect.cell[i]).epsilon(1e-12));
  }
}

TEST_CASE("saturated gates carry the memory cell unchanged") {
  auto p = LanguageModelParams::init(CellKind::Lstm, 5, 4, 4, 3, 0.1);
  p.bias.block(0, 0, 4, 1).setConstant(-40.0);  // input gate closed
  p.bias.block(4, 0, 4, 1).setConstant(40.0);   // forget gate open
  Rng rng(1);
  Vector c = random_vector(4, rng);
  Vector s = Vector::Zero(4);
  const Vector c0 = c;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto out = lstm_step(p, p.embedding.col(t % 5), s, c);
    worst = std::max(worst, (out.cell - c).cwiseAbs().maxCoeff());
    s = out.state;
    c = out.cell;
  }
  CHECK(worst <= 1e-6);
  CHECK((c - c0).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("forward_sequence") {
  const auto p = LanguageModelParams::init(CellKind::Lstm, 9, 5, 6, 21, 0.5);
  Rng rng(2);
  const TokenIds ids = random_ids(10, 9, rng);
  const auto full = forward_sequence(p, ids);
  CHECK(full.size() == 10);
  const auto oracle_states = oracle::states(p, ids);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(full.states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) ==
            doctest::Approx(oracle_states[t][i]).epsilon(1e-12));
    }
  }
  const TokenIds prefix(ids.begin(), ids.begin() + 4);
  CHECK(forward_sequence(p, prefix).states == full.states.leftCols(4));

  TokenIds changed = ids;
  changed[6] = (changed[6] + 1) % 9;
  CHECK(forward_sequence(p, changed).states.leftCols(6) == full.states.leftCols(6));

  const auto mask = DropoutMask::sample(6, 10, 0.0, rng);
  CHECK(forward_sequence(p, ids, &mask).states == full.states);
  CHECK(kind_of([&] { forward_sequence(p, {}); }) == ErrorKind::EmptySequence);
}

TEST_CASE("softmax normalization") {
  const Vector probs = softmax((Vector(3) << 1, 2, 3).finished());
  CHECK(probs(0) == doctest::Approx(0.0900).epsilon(1e-4));
  CHECK(probs(1) == doctest::Approx(0.2447).epsilon(1e-4));
  CHECK(probs(2) == doctest::Approx(0.6652).epsilon(1e-4));

  const auto zero_u = LanguageModelParams::zeros(CellKind::Lstm, 7, 3, 3);
  const Vector uni = next_token_distribution(zero_u, Vector::Ones(3));
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(uni(i) == doctest::Approx(1.0 / 7).epsilon(1e-15));

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Vector z = random_vector(20, rng) * 50.0;
    const Vector p = softmax(z);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    const Vector shifted = softmax(z.array() + 37.5);
    CHECK((shifted - p).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("sequence log loss") {
  const auto uniform = LanguageModelParams::zeros(CellKind::Rnn, 13, 4, 4);
  const TokenIds ids = {1, 5, 3, 3, 12};
  CHECK(sequence_log_loss(uniform, ids) == doctest::Approx(5 * std::log(13.0)).epsilon(1e-14));

  const auto p = LanguageModelParams::init(CellKind::Lstm, 5, 3, 3, 8, 0.9);
  const TokenIds four = {2, 0, 4, 1};
  CHECK(sequence_log_loss(p, four) == doctest::Approx(oracle::sequence_nll(p, four)).epsilon(1e-12));

  // Compose from next_token_distribution directly.
  const auto states = forward_sequence(p, four);
  double composed = -std::log(next_token_distribution(p, Vector::Zero(3))(four[0]));
  for (std::size_t t = 1; t < four.size(); ++t) {
    composed -= std::log(next_token_distribution(p, states.states.col(static_cast<Eigen::Index>(t - 1)))(four[t]));
  }
  CHECK(sequence_log_loss(p, four) == doctest::Approx(composed).epsilon(1e-12));
  CHECK(kind_of([&] { sequence_log_loss(p, {}); }) == ErrorKind::EmptySequence);
}

TEST_CASE("nce loss matches the binary objective") {
  const auto p = LanguageModelParams::init(CellKind::Lstm, 6, 3, 3, 17, 0.8);
  const NoiseDistribution noise({0.1, 0.2, 0.3, 0.15, 0.05, 0.2});
  Rng rng(9);
  const Vector s = random_vector(3, rng);
  const std::vector<TokenId> noise_ids = {1, 4, 4, 0};
  const double k = static_cast<double>(noise_ids.size());
  auto score = [&](TokenId w) { return p.output.col(w).dot(s); };
  double expect = oracle::softplus(-(score(2) - std::log(k * noise.prob(2))));
  for (TokenId w : noise_ids) expect += oracle::softplus(score(w) - std::log(k * noise.prob(w)));
  CHECK(nce_loss(p, s, 2, noise_ids, noise) == doctest::Approx(expect).epsilon(1e-12));

  auto sharp = LanguageModelParams::zeros(CellKind::Lstm, 3, 2, 2);
  sharp.output(0, 0) = 1e3;
  sharp.output(0, 1) = -1e3;
  sharp.output(0, 2) = -1e3;
  const NoiseDistribution flat({1.0 / 3, 1.0 / 3, 1.0 / 3});
  const std::vector<TokenId> others = {1, 2};
  CHECK(nce_loss(sharp, Vector::Unit(2, 0), 0, others, flat) < 1e-12);

  const NoiseDistribution holes({0.5, 0.0, 0.5});
  const std::vector<TokenId> bad = {1};
  CHECK(kind_of([&] { nce_loss(p, s, 0, bad, holes); }) == ErrorKind::ZeroNoiseProbability);
}

TEST_CASE("nce gradient agrees in sign with the softmax gradient") {
  const auto p = LanguageModelParams::init(CellKind::Lstm, 5, 4, 4, 23, 0.5);
  const TokenIds ids = {3, 1};
  std::vector<TokenId> per_position;
  for (int pos = 0; pos < 2; ++pos) {
    for (TokenId w = 0; w < 5; ++w) {
      if (w != ids[static_cast<std::size_t>(pos)]) per_position.push_back(w);
    }
  }
  const NoiseDistribution flat(std::vector<double>(5, 0.2));
  StepNoise nce;
  nce.noise = &flat;
  nce.samples_per_target = 4;
  nce.noise_ids = per_position;
  const auto g_nce = backward(p, ids, LossKind::Nce, nce);
  const auto g_soft = backward(p, ids, LossKind::Softmax, StepNoise{});
  int compared = 0;
  for (Eigen::Index i = 0; i < g_soft.output.size(); ++i) {
    const double a = g_soft.output.data()[i], b = g_nce.output.data()[i];
    if (std::abs(a) < 1e-12) continue;
    CHECK((a > 0) == (b > 0));
    ++compared;
  }
  CHECK(compared > 0);
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(31);
  const NoiseDistribution noise = NoiseDistribution::unigram(
      std::vector<TokenIds>{random_ids(200, 20, rng)}, 20);
  for (CellKind cell : {CellKind::Rnn, CellKind::Lstm}) {
    for (LossKind kind : {LossKind::Softmax, LossKind::Nce}) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto p = LanguageModelParams::init(cell, 20, 8, 8, 100 + static_cast<std::uint64_t>(trial), 0.5);
        const std::vector<TokenIds> batch = {random_ids(12, 20, rng), random_ids(12, 20, rng)};
        StepNoise step = kind == LossKind::Nce ? StepNoise::draw(noise, 6, 12, 2, rng) : StepNoise{};
        const auto mask = DropoutMask::sample(8, 24, 0.3, rng);
        step.dropout = &mask;
        const auto r = oracle::gradient_check(p, batch, kind, step);
        INFO(cell_kind_name(cell), " ", loss_kind_name(kind), " ", r.worst_block);
        CHECK(r.worst_relative_error <= 1e-4);
      }
    }
  }
}

TEST_CASE("softmax gradient identities") {
  auto p = LanguageModelParams::init(CellKind::Rnn, 6, 3, 3, 41, 0.5);
  p.output.setZero();
  const TokenIds ids = {0, 2, 2, 5};
  const auto g = backward(p, ids, LossKind::Softmax, StepNoise{});
  CHECK(g.output.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(g.output.col(2).norm() > 0.0);
  // Token 4 never appears as input, so its embedding column is untouched.
  CHECK(g.embedding.col(4).isZero(0.0));
  CHECK(g.embedding.col(5).isZero(0.0));
}

TEST_CASE("rmsprop update") {
  auto p = LanguageModelParams::init(CellKind::Rnn, 4, 2, 2, 1, 0.3);
  const auto before = p;
  auto state = OptimizerState::for_params(p);
  CHECK(state.config.learning_rate == 0.02);
  CHECK(state.config.rho == 0.99);
  CHECK(state.config.epsilon == 1e-7);
  for (auto& [name, m] : state.accumulators.blocks()) m->setConstant(0.5);
  rmsprop_update(p, p.zeros_like(), state);
  CHECK(p == before);
  CHECK(state.accumulators.bias(0, 0) == doctest::Approx(0.495).epsilon(1e-15));

  auto q = LanguageModelParams::zeros(CellKind::Rnn, 1, 1, 1);
  auto g = q.zeros_like();
  g.bias(0, 0) = 0.3;
  auto st = OptimizerState::for_params(q);
  double a = 0.0, x = 0.0, last_step = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double prev = q.bias(0, 0);
    rmsprop_update(q, g, st);
    a = 0.99 * a + 0.01 * 0.09;
    x -= 0.02 * 0.3 / std::sqrt(a + 1e-7);
    last_step = prev - q.bias(0, 0);
  }
  CHECK(q.bias(0, 0) == doctest::Approx(x).epsilon(1e-10));
  CHECK(last_step == doctest::Approx(0.02 * 0.3 / std::sqrt(0.09 + 1e-7)).epsilon(1e-6));

  g.bias(0, 0) = std::nan("");
  const auto frozen = q;
  CHECK(kind_of([&] { rmsprop_update(q, g, st); }) == ErrorKind::NonFiniteGradient);
  CHECK(q == frozen);
}

TEST_CASE("train config defaults") {
  const TrainConfig cfg;
  CHECK(cfg.batch_size == 50);
  CHECK(cfg.dropout == 0.5);
  CHECK(cfg.nce_samples == 100);
  CHECK(cfg.loss == LossKind::Nce);
  CHECK(cfg.optimizer.learning_rate == 0.02);
}

TEST_CASE("training decreases loss on a memorizable sequence and is deterministic") {
  const TokenIds seq = {1, 4, 2, 7, 3, 3, 5, 0, 6, 2, 1, 4};
  const std::vector<TokenIds> train(20, seq);
  TrainConfig cfg;
  cfg.loss = LossKind::Softmax;
  cfg.dropout = 0.0;
  cfg.batch_size = 5;
  cfg.max_epochs = 5;
  cfg.patience = 0;
  const auto init = LanguageModelParams::init(CellKind::Lstm, 8, 6, 6, 3);
  const auto a = train_lm(init, train, std::vector<TokenIds>{seq}, cfg);
  REQUIRE(a.log.size() == 5);
  for (std::size_t e = 1; e < a.log.size(); ++e) CHECK(a.log[e].train_loss < a.log[e - 1].train_loss);
  const auto b = train_lm(init, train, std::vector<TokenIds>{seq}, cfg);
  CHECK(a.params == b.params);

  cfg.loss = LossKind::Nce;
  cfg.nce_samples = 4;
  cfg.dropout = 0.5;
  const auto c = train_lm(init, train, cfg);
  const auto d = train_lm(init, train, cfg);
  CHECK(c.params == d.params);
  CHECK(c.log.size() == d.log.size());
}

TEST_CASE("early stopping keeps the best validation epoch") {
  Rng rng(12);
  std::vector<TokenIds> train, valid;
  for (int i = 0; i < 40; ++i) train.push_back(random_ids(15, 10, rng));
  for (int i = 0; i < 10; ++i) valid.push_back(random_ids(15, 10, rng));
  TrainConfig cfg;
  cfg.loss = LossKind::Softmax;
  cfg.dropout = 0.0;
  cfg.max_epochs = 12;
  cfg.patience = 2;
  cfg.batch_size = 8;
  cfg.optimizer.learning_rate = 0.05;
  const auto r = train_lm(LanguageModelParams::init(CellKind::Rnn, 10, 8, 8, 5), train, valid, cfg);
  std::size_t argmin = 0;
  for (std::size_t e = 0; e < r.log.size(); ++e) {
    if (r.log[e].valid_bits < r.log[argmin].valid_bits) argmin = e;
  }
  CHECK(r.best_epoch == r.log[argmin].epoch);
  CHECK(perplexity(r.params, valid) == doctest::Approx(r.log[argmin].valid_bits).epsilon(1e-12));
  CHECK(format_training_log(r.log, r.best_epoch).find("best") != std::string::npos);
}

TEST_CASE("perplexity") {
  const auto uniform = LanguageModelParams::zeros(CellKind::Lstm, 1024, 2, 2);
  const std::vector<TokenIds> seqs = {{1, 2, 3}, {1000, 5}};
  CHECK(perplexity(uniform, seqs) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(kind_of([&] { perplexity(uniform, std::vector<TokenIds>{}); }) == ErrorKind::EmptyCorpus);
}

TEST_CASE("cyclic corpus is memorized") {
  Rng rng(77);
  std::vector<TokenIds> train, test;
  auto cyclic = [&](std::vector<TokenIds>& out, int n) {
    for (int i = 0; i < n; ++i) {
      TokenIds s(50);
      TokenId start = static_cast<TokenId>(uniform_index(rng, 10));
      for (std::size_t t = 0; t < s.size(); ++t) s[t] = static_cast<TokenId>((start + t) % 10);
      out.push_back(std::move(s));
    }
  };
  cyclic(train, 200);
  cyclic(test, 20);
  TrainConfig cfg;
  cfg.loss = LossKind::Softmax;
  cfg.dropout = 0.0;
  cfg.max_epochs = 15;
  cfg.patience = 0;
  const auto r = train_lm(LanguageModelParams::init(CellKind::Lstm, 10, 10, 16, 9), train, test, cfg);
  CHECK(perplexity(r.params, test) <= 0.2);
}

TEST_CASE("checkpoint round trip") {
  const auto p = LanguageModelParams::init(CellKind::Lstm, 7, 3, 4, 5);
  const std::string bytes = encode_checkpoint(p, 0xabcdef);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.params == p);
  CHECK(back.vocab_hash == 0xabcdefULL);
  CHECK(encode_checkpoint(back.params, back.vocab_hash) == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "vulnlm_ckpt";
  save_checkpoint(dir / "m.ckpt", p, 1);
  CHECK(load_checkpoint(dir / "m.ckpt").params == p);
  std::filesystem::remove_all(dir);

  std::string broken = bytes;
  broken[0] = 'X';
  CHECK(kind_of([&] { decode_checkpoint(broken); }) == ErrorKind::FormatError);
  CHECK(kind_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); }) == ErrorKind::FormatError);
}
