#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "vulnlm/lm.hpp"

namespace oracle {

struct GradCheck {
  double worst_relative_error = 0.0;
  std::string worst_block;
};

// Central finite differences over every parameter, compared block by block as
// ||numeric - analytic|| / max(||numeric||, ||analytic||).
inline GradCheck gradient_check(vulnlm::LanguageModelParams p, std::span<const vulnlm::TokenIds> batch,
                                vulnlm::LossKind kind, const vulnlm::StepNoise& step, double h = 1e-5) {
  using namespace vulnlm;
  LanguageModelParams analytic = p.zeros_like();
  loss_and_gradient(p, batch, kind, step, &analytic);
  GradCheck out;
  auto pb = p.blocks();
  auto gb = analytic.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    Matrix& m = *pb[b].second;
    Matrix numeric(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double* x = m.data() + i;
      const double orig = *x;
      *x = orig + h;
      const double up = loss_and_gradient(p, batch, kind, step, nullptr);
      *x = orig - h;
      const double down = loss_and_gradient(p, batch, kind, step, nullptr);
      *x = orig;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const Matrix& a = *gb[b].second;
    const double scale = std::max({numeric.norm(), a.norm(), 1e-12});
    const double rel = (numeric - a).norm() / scale;
    if (rel > out.worst_relative_error) {
      out.worst_relative_error = rel;
      out.worst_block = pb[b].first;
    }
  }
  return out;
}

}  // namespace oracle
