#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "credalens/learners.hpp"

namespace credalens::learners::detail {

// Column-major rank encoding of a training matrix: rank[c][r] indexes the
// sorted distinct values uniq[c]. Split search works on ranks only, so it
// never touches the row-major value matrix.
struct RankedColumns {
  std::vector<std::vector<double>> uniq;
  std::vector<std::vector<std::uint32_t>> rank;
  std::size_t n_rows = 0;

  static RankedColumns build(const Matrix& X);
  std::size_t width() const noexcept { return uniq.size(); }
};

enum class SplitCriterion { Gini, Variance };
enum class ThresholdMode { Exhaustive, Random };

struct TreeGrowParams {
  SplitCriterion criterion = SplitCriterion::Gini;
  ThresholdMode thresholds = ThresholdMode::Exhaustive;
  int max_depth = 20;
  int min_leaf = 1;
  int mtry = 1;                           // candidate features per node
  std::vector<std::size_t> allowed_cols;  // feature pool sampled per node
};

// Per-row targets. Gini reads `label`; Variance reads `residual`.
struct TreeTargets {
  std::span<const int> label;
  std::span<const double> residual;
};

// Leaf value from the rows that reached the leaf (duplicates included).
using LeafValueFn = std::function<double(std::span<const std::uint32_t> rows)>;

// Grows one tree on `rows` (duplicates allowed, e.g. a bootstrap sample).
// Nodes are emitted depth-first, left subtree first.
DecisionTree grow_tree(const RankedColumns& cols, const TreeTargets& targets,
                       std::vector<std::uint32_t> rows, const TreeGrowParams& params, Rng& rng,
                       const LeafValueFn& leaf_value);

}  // namespace credalens::learners::detail
