#include "vulnlm/features.hpp"

#include <cmath>

#include "vulnlm/error.hpp"
#include "vulnlm/vocabulary.hpp"

namespace vulnlm {

std::string pooling_name(Pooling kind) {
  switch (kind) {
    case Pooling::Mean: return "mean";
    case Pooling::Variance: return "variance";
    case Pooling::MeanVariance: return "mean+variance";
    case Pooling::Std: return "std";
    case Pooling::Min: return "min";
    case Pooling::Max: return "max";
  }
  return "mean";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "variance") return Pooling::Variance;
  if (name == "mean+variance" || name == "concat") return Pooling::MeanVariance;
  if (name == "std") return Pooling::Std;
  if (name == "min") return Pooling::Min;
  if (name == "max") return Pooling::Max;
  throw Error(ErrorKind::ConfigInvalid, "unknown pooling '" + std::string(name) + "'");
}

std::size_t pooled_length(Pooling kind, std::size_t dim) {
  return kind == Pooling::MeanVariance ? 2 * dim : dim;
}

Vector mean_pool(const Matrix& vectors) {
  if (vectors.cols() == 0) throw Error(ErrorKind::EmptyStates, "nothing to pool");
  return vectors.rowwise().mean();
}

Vector variance_pool(const Matrix& vectors) {
  const Vector mean = mean_pool(vectors);
  const Matrix centered = vectors.colwise() - mean;
  return (centered.array().square().rowwise().sum() / static_cast<double>(vectors.cols())).sqrt();
}

Vector pool(const Matrix& vectors, Pooling kind) {
  if (vectors.cols() == 0) throw Error(ErrorKind::EmptyStates, "nothing to pool");
  switch (kind) {
    case Pooling::Mean: return mean_pool(vectors);
    case Pooling::Variance:
    case Pooling::Std: return variance_pool(vectors);
    case Pooling::MeanVariance: {
      Vector out(2 * vectors.rows());
      out << mean_pool(vectors), variance_pool(vectors);
      return out;
    }
    case Pooling::Min: return vectors.rowwise().minCoeff();
    case Pooling::Max: return vectors.rowwise().maxCoeff();
  }
  return mean_pool(vectors);
}

Vector method_feature(const LanguageModelParams& params, const TokenIds& method,
                      std::size_t split_length, Pooling pooling) {
  if (method.empty()) throw Error(ErrorKind::EmptyMethod, "method has no tokens");
  const auto chunks = split_sequences(method, split_length);
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(pooled_length(pooling, params.state_dim())));
  for (const auto& chunk : chunks) acc += pool(forward_sequence(params, chunk).states, pooling);
  return acc / static_cast<double>(chunks.size());
}

Vector file_syntactic_features(const Matrix& method_vectors, Pooling pooling) {
  if (method_vectors.cols() == 0) throw Error(ErrorKind::NoMethods, "file has no method vectors");
  return pool(method_vectors, pooling);
}

Vector file_syntactic_features(std::span<const Vector> method_vectors, Pooling pooling) {
  if (method_vectors.empty()) throw Error(ErrorKind::NoMethods, "file has no method vectors");
  Matrix m(method_vectors.front().size(), static_cast<Eigen::Index>(method_vectors.size()));
  for (std::size_t i = 0; i < method_vectors.size(); ++i) {
    if (method_vectors[i].size() != m.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "method vectors differ in length");
    }
    m.col(static_cast<Eigen::Index>(i)) = method_vectors[i];
  }
  return file_syntactic_features(m, pooling);
}

std::vector<TokenStateSequence> file_token_states(const LanguageModelParams& params,
                                                  std::span<const TokenIds> methods,
                                                  std::size_t split_length) {
  std::vector<TokenStateSequence> out;
  for (const auto& m : methods) {
    if (m.empty()) continue;
    for (const auto& chunk : split_sequences(m, split_length)) {
      out.push_back(forward_sequence(params, chunk));
    }
  }
  return out;
}

FileFeatureVector join_features(const Vector& syntactic, const std::vector<std::size_t>& semantic) {
  FileFeatureVector f;
  f.syntactic = syntactic;
  f.semantic = semantic;
  f.joint.resize(syntactic.size() + static_cast<Eigen::Index>(semantic.size()));
  f.joint.head(syntactic.size()) = syntactic;
  for (std::size_t j = 0; j < semantic.size(); ++j) {
    f.joint(syntactic.size() + static_cast<Eigen::Index>(j)) = static_cast<double>(semantic[j]);
  }
  return f;
}

}  // namespace vulnlm
