#pragma once

#include <cstddef>
#include <vector>

#include "vulnlm/corpus.hpp"
#include "vulnlm/vocabulary.hpp"

namespace vulnlm {

// Token counts over the whole file (header included), indexed by vocabulary
// id; unknown tokens count under <unk>.
std::vector<std::size_t> bow_features(const ExperimentRecord& file, const Vocabulary& vocab);

// 1 where count > threshold, else 0.
std::vector<std::size_t> discretize(const std::vector<std::size_t>& counts, std::size_t threshold = 5);

}  // namespace vulnlm
