#include <algorithm>
#include <cmath>
#include <numeric>

#include "credalens/learners.hpp"
#include "tree_builder.hpp"

namespace credalens::learners {

double DecisionTree::predict(std::span<const double> x) const {
  std::int32_t i = 0;
  for (;;) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    if (n.is_leaf()) return n.leaf_value;
    i = x[static_cast<std::size_t>(n.split_col)] <= n.threshold ? n.left : n.right;
  }
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

std::vector<double> sum_trees(const std::vector<DecisionTree>& trees, const Matrix& X) {
  constexpr std::size_t kBlock = 256;
  std::vector<double> out(X.rows(), 0.0);
  for (std::size_t start = 0; start < X.rows(); start += kBlock) {
    const std::size_t end = std::min(X.rows(), start + kBlock);
    for (const auto& t : trees) {
      for (std::size_t r = start; r < end; ++r) out[r] += t.predict(X.row(r));
    }
  }
  return out;
}

std::vector<double> ForestModel::predict(const Matrix& X) const {
  auto out = sum_trees(trees, X);
  if (trees.empty()) return out;
  for (double& v : out) v /= static_cast<double>(trees.size());
  return out;
}

double ForestModel::predict(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return trees.empty() ? 0.0 : s / static_cast<double>(trees.size());
}

ForestModel fit_forest(const Matrix& X, std::span<const int> y, ForestMode mode,
                       const ForestParams& params, std::uint64_t seed, unsigned threads) {
  const std::size_t n = X.rows();
  const std::size_t width = X.cols();
  if (n == 0 || y.size() != n) throw Error(ErrorKind::InvalidArgument, "forest needs matching, non-empty X and y");
  if (params.n_trees < 1) throw Error(ErrorKind::InvalidArgument, "n_trees must be >= 1");
  if (params.min_leaf < 1) throw Error(ErrorKind::InvalidArgument, "min_leaf must be >= 1");
  if (params.max_depth < 0) throw Error(ErrorKind::InvalidArgument, "max_depth must be >= 0");
  const int mtry = params.mtry > 0 ? params.mtry
                                   : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(width))));
  if (mtry < 1 || static_cast<std::size_t>(mtry) > width) {
    throw Error(ErrorKind::InvalidArgument, "mtry must lie in [1, width]");
  }

  ForestModel model;
  model.mode = mode;
  model.mtry = mtry;
  model.min_leaf = params.min_leaf;
  model.max_depth = params.max_depth;
  model.bootstrap = mode == ForestMode::DRF;
  model.width = width;
  model.trees.resize(static_cast<std::size_t>(params.n_trees));
  model.per_tree_seeds.resize(model.trees.size());
  for (std::size_t t = 0; t < model.trees.size(); ++t) model.per_tree_seeds[t] = derive_seed(seed, {t});

  const auto cols = detail::RankedColumns::build(X);
  detail::TreeGrowParams grow;
  grow.criterion = detail::SplitCriterion::Gini;
  grow.thresholds = mode == ForestMode::DRF ? detail::ThresholdMode::Exhaustive
                                            : detail::ThresholdMode::Random;
  grow.max_depth = params.max_depth;
  grow.min_leaf = params.min_leaf;
  grow.mtry = mtry;
  grow.allowed_cols.resize(width);
  std::iota(grow.allowed_cols.begin(), grow.allowed_cols.end(), 0);
  const detail::TreeTargets targets{y, {}};
  const detail::LeafValueFn class_fraction = [&](std::span<const std::uint32_t> rows) {
    double pos = 0.0;
    for (auto r : rows) pos += y[r];
    return pos / static_cast<double>(rows.size());
  };

  parallel_for(model.trees.size(), threads, [&](std::size_t t) {
    Rng rng(model.per_tree_seeds[t]);
    std::vector<std::uint32_t> rows(n);
    if (model.bootstrap) {
      for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), 0u);
    }
    model.trees[t] = detail::grow_tree(cols, targets, std::move(rows), grow, rng, class_fraction);
  });
  return model;
}

}  // namespace credalens::learners
