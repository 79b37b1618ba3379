#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vulnlm/lm.hpp"

namespace vulnlm {

// Statistical pooling over a set of vectors. Variance pooling is the square
// root of the mean squared deviation (a population standard deviation), so
// Variance and Std produce identical values.
enum class Pooling { Mean, Variance, MeanVariance, Std, Min, Max };

std::string pooling_name(Pooling kind);
Pooling parse_pooling(std::string_view name);
std::size_t pooled_length(Pooling kind, std::size_t dim);

// Columns of `vectors` are the items being pooled. Throws Error{EmptyStates}.
Vector mean_pool(const Matrix& vectors);
Vector variance_pool(const Matrix& vectors);
Vector pool(const Matrix& vectors, Pooling kind);

// Each chunk of at most `split_length` tokens runs from a fresh zero state,
// is pooled with `pooling`, and the chunk vectors are averaged uniformly.
// Throws Error{EmptyMethod}.
Vector method_feature(const LanguageModelParams& params, const TokenIds& method,
                      std::size_t split_length, Pooling pooling);

// Pools method vectors (columns) into one file vector. Throws Error{NoMethods}.
Vector file_syntactic_features(const Matrix& method_vectors, Pooling pooling);
Vector file_syntactic_features(std::span<const Vector> method_vectors, Pooling pooling);

// Token states for every chunk of every method in a file.
std::vector<TokenStateSequence> file_token_states(const LanguageModelParams& params,
                                                  std::span<const TokenIds> methods,
                                                  std::size_t split_length);

struct FileFeatureVector {
  Vector syntactic;
  std::vector<std::size_t> semantic;
  Vector joint;
};

FileFeatureVector join_features(const Vector& syntactic, const std::vector<std::size_t>& semantic);

}  // namespace vulnlm
