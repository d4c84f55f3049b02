#include "tree_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace credalens::learners::detail {

RankedColumns RankedColumns::build(const Matrix& X) {
  RankedColumns rc;
  rc.n_rows = X.rows();
  const std::size_t n = X.rows();
  rc.uniq.resize(X.cols());
  rc.rank.resize(X.cols());
  std::vector<std::pair<double, std::uint32_t>> buf(n);
  for (std::size_t c = 0; c < X.cols(); ++c) {
    for (std::size_t r = 0; r < n; ++r) buf[r] = {X(r, c), static_cast<std::uint32_t>(r)};
    std::sort(buf.begin(), buf.end());
    auto& uniq = rc.uniq[c];
    auto& rank = rc.rank[c];
    rank.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (uniq.empty() || buf[i].first != uniq.back()) uniq.push_back(buf[i].first);
      rank[buf[i].second] = static_cast<std::uint32_t>(uniq.size() - 1);
    }
  }
  return rc;
}

namespace {

struct Stats {
  double n = 0.0;
  double s = 0.0;
};

struct Candidate {
  double gain = 0.0;
  std::int32_t col = -1;
  std::uint32_t cut = 0;  // rows with rank <= cut go left
  double threshold = 0.0;
};

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m < b ? m : a;
}

class Grower {
 public:
  Grower(const RankedColumns& cols, const TreeTargets& targets, const TreeGrowParams& params,
         Rng& rng, const LeafValueFn& leaf_value)
      : cols_(cols), targets_(targets), params_(params), rng_(rng), leaf_value_(leaf_value) {
    std::size_t max_u = 0;
    for (const auto& u : cols.uniq) max_u = std::max(max_u, u.size());
    bucket_n_.assign(max_u, 0.0);
    bucket_s_.assign(max_u, 0.0);
    pool_ = params.allowed_cols;
  }

  DecisionTree run(std::vector<std::uint32_t> rows) {
    rows_ = std::move(rows);
    tree_.max_depth = params_.max_depth;
    build(0, rows_.size(), 0);
    return std::move(tree_);
  }

 private:
  double target(std::uint32_t r) const {
    return params_.criterion == SplitCriterion::Gini ? static_cast<double>(targets_.label[r])
                                                     : targets_.residual[r];
  }

  double score(const Stats& st) const {
    if (st.n <= 0.0) return 0.0;
    if (params_.criterion == SplitCriterion::Gini) return 2.0 * st.s * (st.n - st.s) / st.n;
    return st.s * st.s / st.n;
  }

  // Impurity decrease (Gini) or variance reduction (Variance); >= 0 up to rounding.
  double gain(const Stats& parent, const Stats& left) const {
    const Stats right{parent.n - left.n, parent.s - left.s};
    if (params_.criterion == SplitCriterion::Gini) {
      return score(parent) - score(left) - score(right);
    }
    return score(left) + score(right) - score(parent);
  }

  bool leaf_sizes_ok(const Stats& parent, const Stats& left) const {
    const double min_leaf = params_.min_leaf;
    return left.n >= min_leaf && parent.n - left.n >= min_leaf;
  }

  void consider(Candidate& best, double g, std::size_t col, std::uint32_t cut, double thr) const {
    if (g > best.gain) best = {g, static_cast<std::int32_t>(col), cut, thr};
  }

  void scan_exhaustive(std::size_t col, std::size_t begin, std::size_t end, const Stats& parent,
                       Candidate& best) {
    const auto& rank = cols_.rank[col];
    const auto& uniq = cols_.uniq[col];
    const std::size_t n = end - begin;
    const std::size_t u = uniq.size();
    if (u < 2) return;
    Stats left;
    if (u <= 4 * n) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = rows_[i];
        bucket_n_[rank[r]] += 1.0;
        bucket_s_[rank[r]] += target(r);
      }
      std::ptrdiff_t prev = -1;
      for (std::size_t b = 0; b < u; ++b) {
        if (bucket_n_[b] == 0.0) continue;
        if (prev >= 0 && leaf_sizes_ok(parent, left)) {
          consider(best, gain(parent, left), col, static_cast<std::uint32_t>(prev),
                   midpoint(uniq[static_cast<std::size_t>(prev)], uniq[b]));
        }
        left.n += bucket_n_[b];
        left.s += bucket_s_[b];
        bucket_n_[b] = 0.0;
        bucket_s_[b] = 0.0;
        prev = static_cast<std::ptrdiff_t>(b);
      }
      return;
    }
    sort_buf_.clear();
    for (std::size_t i = begin; i < end; ++i) sort_buf_.emplace_back(rank[rows_[i]], target(rows_[i]));
    std::sort(sort_buf_.begin(), sort_buf_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t i = 0;
    while (i < sort_buf_.size()) {
      const std::uint32_t rk = sort_buf_[i].first;
      if (i > 0 && leaf_sizes_ok(parent, left)) {
        const std::uint32_t prev = sort_buf_[i - 1].first;
        consider(best, gain(parent, left), col, prev, midpoint(uniq[prev], uniq[rk]));
      }
      while (i < sort_buf_.size() && sort_buf_[i].first == rk) {
        left.n += 1.0;
        left.s += sort_buf_[i].second;
        ++i;
      }
    }
  }

  void scan_random(std::size_t col, std::size_t begin, std::size_t end, const Stats& parent,
                   Candidate& best) {
    const auto& rank = cols_.rank[col];
    const auto& uniq = cols_.uniq[col];
    std::uint32_t lo = rank[rows_[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = std::min(lo, rank[rows_[i]]);
      hi = std::max(hi, rank[rows_[i]]);
    }
    if (lo == hi) return;
    double thr = rng_.uniform(uniq[lo], uniq[hi]);
    if (!(thr < uniq[hi])) thr = uniq[lo];
    const auto cut = static_cast<std::uint32_t>(
        std::upper_bound(uniq.begin(), uniq.end(), thr) - uniq.begin() - 1);
    Stats left;
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      if (rank[r] <= cut) {
        left.n += 1.0;
        left.s += target(r);
      }
    }
    if (leaf_sizes_ok(parent, left)) consider(best, gain(parent, left), col, cut, thr);
  }

  std::int32_t build(std::size_t begin, std::size_t end, int depth) {
    const auto index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    Stats parent;
    for (std::size_t i = begin; i < end; ++i) {
      parent.n += 1.0;
      parent.s += target(rows_[i]);
    }
    tree_.nodes[index].n_samples = static_cast<std::uint32_t>(end - begin);

    const bool pure = params_.criterion == SplitCriterion::Gini &&
                      (parent.s == 0.0 || parent.s == parent.n);
    Candidate best;
    if (depth < params_.max_depth && parent.n >= 2.0 * params_.min_leaf && !pure) {
      // Partial Fisher-Yates draws mtry distinct candidates from the pool.
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params_.mtry), pool_.size());
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t pick = j + rng_.below(pool_.size() - j);
        std::swap(pool_[j], pool_[pick]);
        const std::size_t col = pool_[j];
        if (params_.thresholds == ThresholdMode::Exhaustive) {
          scan_exhaustive(col, begin, end, parent, best);
        } else {
          scan_random(col, begin, end, parent, best);
        }
      }
    }

    if (best.col < 0 || !(best.gain > 1e-12)) {
      tree_.nodes[index].leaf_value =
          leaf_value_(std::span<const std::uint32_t>(rows_.data() + begin, end - begin));
      return index;
    }

    const auto& rank = cols_.rank[static_cast<std::size_t>(best.col)];
    auto mid_it = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                 rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                 [&](std::uint32_t r) { return rank[r] <= best.cut; });
    const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
    {
      TreeNode& node = tree_.nodes[index];
      node.split_col = best.col;
      node.threshold = best.threshold;
      node.gain = best.gain;
    }
    const std::int32_t left = build(begin, mid, depth + 1);
    const std::int32_t right = build(mid, end, depth + 1);
    tree_.nodes[index].left = left;
    tree_.nodes[index].right = right;
    return index;
  }

  const RankedColumns& cols_;
  const TreeTargets& targets_;
  const TreeGrowParams& params_;
  Rng& rng_;
  const LeafValueFn& leaf_value_;
  std::vector<std::uint32_t> rows_;
  std::vector<std::size_t> pool_;
  std::vector<double> bucket_n_, bucket_s_;
  std::vector<std::pair<std::uint32_t, double>> sort_buf_;
  DecisionTree tree_;
};

}  // namespace

DecisionTree grow_tree(const RankedColumns& cols, const TreeTargets& targets,
                       std::vector<std::uint32_t> rows, const TreeGrowParams& params, Rng& rng,
                       const LeafValueFn& leaf_value) {
  Grower g(cols, targets, params, rng, leaf_value);
  return g.run(std::move(rows));
}

}  // namespace credalens::learners::detail
