#include "vulnlm/codebook.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

#include "vulnlm/error.hpp"
#include "vulnlm/rng.hpp"

namespace vulnlm {
namespace {

using Index = Eigen::Index;

std::size_t count_distinct_columns(const Matrix& points, std::size_t stop_at) {
  std::vector<Index> order(static_cast<std::size_t>(points.cols()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  auto less = [&](Index a, Index b) {
    for (Index r = 0; r < points.rows(); ++r) {
      if (points(r, a) != points(r, b)) return points(r, a) < points(r, b);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size() && distinct < stop_at; ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.cols());
  Matrix centroids(points.rows(), static_cast<Index>(k));
  std::size_t first = uniform_index(rng, n);
  centroids.col(0) = points.col(static_cast<Index>(first));
  Vector best = (points.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
  for (std::size_t c = 1; c < k; ++c) {
    const double total = best.sum();
    std::size_t next = 0;
    if (total <= 0.0) {
      next = uniform_index(rng, n);
    } else {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      next = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += best(static_cast<Index>(i));
        if (acc > target && best(static_cast<Index>(i)) > 0.0) {
          next = i;
          break;
        }
      }
      // Never pick a point that already coincides with a centroid.
      while (best(static_cast<Index>(next)) <= 0.0 && next > 0) --next;
    }
    centroids.col(static_cast<Index>(c)) = points.col(static_cast<Index>(next));
    best = best.cwiseMin(
        (points.colwise() - centroids.col(static_cast<Index>(c))).colwise().squaredNorm().transpose());
  }
  return centroids;
}

}  // namespace

std::size_t nearest_centroid(const Matrix& centroids, const Eigen::Ref<const Vector>& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centroids.cols(); ++c) {
    const double d = (centroids.col(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

Codebook build_codebook(const Matrix& states, std::size_t k, std::uint64_t seed,
                        std::size_t max_iterations) {
  if (k == 0) throw Error(ErrorKind::ConfigInvalid, "codebook size must be positive");
  const auto n = static_cast<std::size_t>(states.cols());
  if (n < k || count_distinct_columns(states, k) < k) {
    throw Error(ErrorKind::TooFewStates, "need at least " + std::to_string(k) +
                                             " distinct states, have " + std::to_string(n) + " states");
  }
  Rng rng(derive_seed(seed, 11));
  Codebook cb;
  cb.centroids = seed_plus_plus(states, k, rng);

  std::vector<std::size_t> assign(n, k);
  Vector dist(static_cast<Index>(n));
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iterations, 1); ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = states.col(static_cast<Index>(i));
      const std::size_t c = nearest_centroid(cb.centroids, col);
      if (c != assign[i]) changed = true;
      assign[i] = c;
      dist(static_cast<Index>(i)) = (cb.centroids.col(static_cast<Index>(c)) - col).squaredNorm();
      inertia += dist(static_cast<Index>(i));
    }
    cb.inertia = inertia;
    cb.inertia_history.push_back(inertia);
    cb.iterations = iter + 1;
    if (!changed) {
      cb.converged = true;
      break;
    }
    if (iter + 1 == max_iterations) break;

    Matrix sums = Matrix::Zero(states.rows(), static_cast<Index>(k));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(static_cast<Index>(assign[i])) += states.col(static_cast<Index>(i));
      ++counts[assign[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        cb.centroids.col(static_cast<Index>(c)) = sums.col(static_cast<Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist(static_cast<Index>(i)) > far_d) {
          far_d = dist(static_cast<Index>(i));
          far = i;
        }
      }
      taken[far] = true;
      dist(static_cast<Index>(far)) = 0.0;
      cb.centroids.col(static_cast<Index>(c)) = states.col(static_cast<Index>(far));
    }
  }
  return cb;
}

std::vector<std::size_t> semantic_features(std::span<const TokenStateSequence> file_states,
                                           const Codebook& codebook) {
  std::vector<std::size_t> counts(codebook.k(), 0);
  for (const auto& seq : file_states) {
    if (seq.states.rows() != codebook.centroids.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "state length differs from the codebook");
    }
    for (Index t = 0; t < seq.states.cols(); ++t) {
      ++counts[nearest_centroid(codebook.centroids, seq.states.col(t))];
    }
  }
  return counts;
}

std::string codebook_to_json(const Codebook& codebook) {
  nlohmann::ordered_json j;
  j["k"] = codebook.k();
  j["dim"] = codebook.centroids.rows();
  j["inertia"] = codebook.inertia;
  j["iterations"] = codebook.iterations;
  j["converged"] = codebook.converged;
  j["inertia_history"] = codebook.inertia_history;
  auto cents = nlohmann::ordered_json::array();
  for (Index c = 0; c < codebook.centroids.cols(); ++c) {
    std::vector<double> v(codebook.centroids.col(c).data(),
                          codebook.centroids.col(c).data() + codebook.centroids.rows());
    cents.push_back(v);
  }
  j["centroids"] = std::move(cents);
  return j.dump() + "\n";
}

Codebook codebook_from_json(std::string_view text) {
  Codebook cb;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto k = j.at("k").get<Index>();
    const auto dim = j.at("dim").get<Index>();
    cb.inertia = j.at("inertia").get<double>();
    cb.iterations = j.at("iterations").get<std::size_t>();
    cb.converged = j.at("converged").get<bool>();
    cb.inertia_history = j.at("inertia_history").get<std::vector<double>>();
    cb.centroids.resize(dim, k);
    const auto& cents = j.at("centroids");
    if (static_cast<Index>(cents.size()) != k) throw Error(ErrorKind::FormatError, "centroid count");
    for (Index c = 0; c < k; ++c) {
      const auto v = cents[static_cast<std::size_t>(c)].get<std::vector<double>>();
      if (static_cast<Index>(v.size()) != dim) throw Error(ErrorKind::FormatError, "centroid length");
      for (Index r = 0; r < dim; ++r) cb.centroids(r, c) = v[static_cast<std::size_t>(r)];
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("codebook: ") + e.what());
  }
  return cb;
}

}  // namespace vulnlm
