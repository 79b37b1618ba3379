#include "vulnlm/bow.hpp"

#include "vulnlm/error.hpp"

namespace vulnlm {

std::vector<std::size_t> bow_features(const ExperimentRecord& file, const Vocabulary& vocab) {
  std::vector<std::size_t> counts(vocab.size(), 0);
  for (const auto& m : file.methods) {
    for (const auto& t : m.tokens) ++counts[static_cast<std::size_t>(vocab.id(t))];
  }
  return counts;
}

std::vector<std::size_t> discretize(const std::vector<std::size_t>& counts, std::size_t threshold) {
  if (threshold < 1) throw Error(ErrorKind::ConfigInvalid, "discretization threshold must be >= 1");
  std::vector<std::size_t> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace vulnlm
