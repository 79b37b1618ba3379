#include "vulnlm/forest.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vulnlm/error.hpp"
#include "vulnlm/rng.hpp"

namespace vulnlm {
namespace {

using Index = Eigen::Index;

struct TreeBuilder {
  const FeatureMatrix& x;
  const std::vector<bool>& y;
  const ForestParams& params;
  std::size_t per_node;
  Rng rng;
  DecisionTree tree;

  int grow(std::vector<std::size_t> rows, std::size_t depth) {
    TreeNode node;
    node.depth = depth;
    for (std::size_t r : rows) (y[r] ? node.positives : node.negatives)++;
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);
    if (node.positives == 0 || node.negatives == 0 || depth >= params.max_depth ||
        rows.size() < params.min_samples_split) {
      return id;
    }
    const auto split = best_split(x, y, rows, draw_features());
    if (!split) return id;

    std::vector<std::size_t> left, right;
    const auto f = static_cast<Index>(split->feature);
    for (std::size_t r : rows) {
      (x(static_cast<Index>(r), f) <= split->threshold ? left : right).push_back(r);
    }
    rows = {};
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& n = tree.nodes[static_cast<std::size_t>(id)];
    n.feature = static_cast<int>(split->feature);
    n.threshold = split->threshold;
    n.left = l;
    n.right = r;
    return id;
  }

  std::vector<std::size_t> draw_features() {
    const auto p = static_cast<std::size_t>(x.cols());
    std::vector<std::size_t> all(p);
    for (std::size_t i = 0; i < p; ++i) all[i] = i;
    for (std::size_t i = 0; i < per_node; ++i) std::swap(all[i], all[i + uniform_index(rng, p - i)]);
    all.resize(per_node);
    std::sort(all.begin(), all.end());
    return all;
  }
};

}  // namespace

std::size_t ForestParams::features_per_node(std::size_t n_features) const {
  if (n_features == 0) return 0;
  std::size_t m = max_features;
  if (m == 0) m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features))));
  return std::clamp<std::size_t>(m, 1, n_features);
}

double gini_counts(std::size_t negatives, std::size_t positives) {
  const double n = static_cast<double>(negatives + positives);
  if (n == 0) throw Error(ErrorKind::EmptyLabels, "gini of an empty label set");
  const double p0 = static_cast<double>(negatives) / n;
  const double p1 = static_cast<double>(positives) / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

double gini(const std::vector<bool>& labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  return gini_counts(labels.size() - pos, pos);
}

std::optional<Split> best_split(const FeatureMatrix& x, const std::vector<bool>& y,
                                std::span<const std::size_t> rows,
                                std::span<const std::size_t> candidate_features) {
  const std::size_t n = rows.size();
  if (n < 2) return std::nullopt;
  std::size_t total_pos = 0;
  for (std::size_t r : rows) total_pos += y[r] ? 1 : 0;
  const double parent = gini_counts(n - total_pos, total_pos);

  std::optional<Split> best;
  std::vector<std::pair<double, bool>> column(n);
  for (std::size_t f : candidate_features) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = {x(static_cast<Index>(rows[i]), static_cast<Index>(f)), y[rows[i]]};
    }
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t left_pos = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_pos += column[i].second ? 1 : 0;
      const double lo = column[i].first;
      const double hi = column[i + 1].first;
      if (!(lo < hi)) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      const std::size_t right_pos = total_pos - left_pos;
      // Equal positive proportions on both sides leave the impurity unchanged.
      if (left_pos * nr == right_pos * nl) continue;
      const double weighted =
          (static_cast<double>(nl) * gini_counts(nl - left_pos, left_pos) +
           static_cast<double>(nr) * gini_counts(nr - right_pos, right_pos)) /
          static_cast<double>(n);
      const double decrease = parent - weighted;
      if (!best || decrease > best->decrease) {
        double mid = lo + (hi - lo) / 2.0;
        if (!(mid < hi)) mid = lo;
        best = Split{f, mid, decrease};
      }
    }
  }
  return best;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i];
}

bool DecisionTree::predict(std::span<const double> x) const {
  const auto& leaf = leaf_for(x);
  return leaf.positives > leaf.negatives;
}

std::size_t DecisionTree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

ForestModel train_forest(const FeatureMatrix& x, const std::vector<bool>& y, const ForestParams& params) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorKind::ShapeMismatch, "feature rows and labels differ in count");
  }
  if (y.empty()) throw Error(ErrorKind::EmptyLabels, "no training rows");
  if (params.n_trees == 0 || params.min_samples_split < 2) {
    throw Error(ErrorKind::ConfigInvalid, "need n_trees >= 1 and min_samples_split >= 2");
  }
  ForestModel model;
  model.params = params;
  model.n_features = static_cast<std::size_t>(x.cols());
  const std::size_t n = y.size();
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), true));
  model.single_class = pos == 0 || pos == n;

  const std::size_t per_node = params.features_per_node(model.n_features);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    TreeBuilder b{x, y, params, per_node, Rng(derive_seed(params.seed, t)), {}};
    std::vector<std::size_t> rows(n);
    std::vector<std::uint32_t> counts(n, 0);
    for (auto& r : rows) {
      r = uniform_index(b.rng, n);
      ++counts[r];
    }
    std::sort(rows.begin(), rows.end());
    if (model.n_features == 0) {
      TreeNode leaf;
      for (std::size_t r : rows) (y[r] ? leaf.positives : leaf.negatives)++;
      b.tree.nodes.push_back(leaf);
    } else {
      b.grow(std::move(rows), 0);
    }
    model.trees.push_back(std::move(b.tree));
    model.in_bag.push_back(std::move(counts));
  }
  return model;
}

Prediction predict(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(model.n_features) +
                                              " features, got " + std::to_string(x.size()));
  }
  std::size_t votes = 0;
  for (const auto& t : model.trees) votes += t.predict(x) ? 1 : 0;
  Prediction p;
  p.vote_fraction = static_cast<double>(votes) / static_cast<double>(model.trees.size());
  p.positive = 2 * votes > model.trees.size();
  return p;
}

std::vector<Prediction> predict_rows(const ForestModel& model, const FeatureMatrix& x) {
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    out.push_back(predict(model, row));
  }
  return out;
}

OobScore oob_score(const ForestModel& model, const FeatureMatrix& x, const std::vector<bool>& y) {
  if (model.in_bag.size() != model.trees.size()) {
    throw Error(ErrorKind::MissingArtifact, "out-of-bag data is only available for freshly trained forests");
  }
  OobScore score;
  std::size_t correct = 0;
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(static_cast<Index>(i), j);
    std::size_t votes = 0, voters = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      if (model.in_bag[t][i] > 0) continue;
      ++voters;
      votes += model.trees[t].predict(row) ? 1 : 0;
    }
    if (voters == 0) continue;
    ++score.evaluated;
    if ((2 * votes > voters) == y[i]) ++correct;
  }
  if (score.evaluated > 0) {
    score.accuracy = static_cast<double>(correct) / static_cast<double>(score.evaluated);
  }
  return score;
}

std::string forest_to_json(const ForestModel& model) {
  nlohmann::ordered_json j;
  j["n_trees"] = model.params.n_trees;
  j["max_depth"] = model.params.max_depth;
  j["min_samples_split"] = model.params.min_samples_split;
  j["max_features"] = model.params.max_features;
  j["seed"] = model.params.seed;
  j["n_features"] = model.n_features;
  j["single_class"] = model.single_class;
  auto trees = nlohmann::ordered_json::array();
  for (const auto& t : model.trees) {
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"neg", n.negatives}, {"pos", n.positives}, {"depth", n.depth}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
                         {"right", n.right}, {"neg", n.negatives}, {"pos", n.positives},
                         {"depth", n.depth}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump() + "\n";
}

ForestModel forest_from_json(std::string_view text) {
  ForestModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.params.n_trees = j.at("n_trees").get<std::size_t>();
    m.params.max_depth = j.at("max_depth").get<std::size_t>();
    m.params.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    m.params.max_features = j.at("max_features").get<std::size_t>();
    m.params.seed = j.at("seed").get<std::uint64_t>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.single_class = j.at("single_class").get<bool>();
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      for (const auto& jn : jt) {
        TreeNode n;
        n.negatives = jn.at("neg").get<std::size_t>();
        n.positives = jn.at("pos").get<std::size_t>();
        n.depth = jn.at("depth").get<std::size_t>();
        if (jn.contains("feature")) {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        }
        t.nodes.push_back(n);
      }
      const auto count = static_cast<int>(t.nodes.size());
      for (const auto& n : t.nodes) {
        if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                             n.feature >= static_cast<int>(m.n_features))) {
          throw Error(ErrorKind::FormatError, "forest node references are out of range");
        }
      }
      if (t.nodes.empty()) throw Error(ErrorKind::FormatError, "empty tree");
      m.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("forest: ") + e.what());
  }
  if (m.trees.empty()) throw Error(ErrorKind::FormatError, "forest has no trees");
  return m;
}

}  // namespace vulnlm
