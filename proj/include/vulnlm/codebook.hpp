#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulnlm/lm.hpp"

namespace vulnlm {

struct Codebook {
  Matrix centroids;  // d' x k
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per assignment step
  std::size_t iterations = 0;
  bool converged = false;  // assignment reached a fixpoint

  std::size_t k() const { return static_cast<std::size_t>(centroids.cols()); }
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iterations is reached. Empty clusters are re-seeded with the
// point farthest from its centroid. Columns of `states` are the points.
// Throws Error{TooFewStates} when there are fewer than k distinct points.
Codebook build_codebook(const Matrix& states, std::size_t k, std::uint64_t seed,
                        std::size_t max_iterations = 300);

// Squared Euclidean distance to every centroid; ties go to the lowest index.
std::size_t nearest_centroid(const Matrix& centroids, const Eigen::Ref<const Vector>& point);

// Centroid occurrence counts over all token states of one file.
std::vector<std::size_t> semantic_features(std::span<const TokenStateSequence> file_states,
                                           const Codebook& codebook);

std::string codebook_to_json(const Codebook& codebook);
Codebook codebook_from_json(std::string_view text);

}  // namespace vulnlm
