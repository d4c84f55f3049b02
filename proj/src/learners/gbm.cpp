#include <algorithm>
#include <cmath>
#include <numeric>

#include "credalens/learners.hpp"
#include "tree_builder.hpp"

namespace credalens::learners {

namespace {

constexpr double kPriorClip = 1e-6;

double mean_log_loss(std::span<const double> raw, std::span<const int> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double z = raw[i];
    // log(1 + e^z) - y*z, computed without overflow
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    s += softplus - (y[i] ? z : 0.0);
  }
  return s / static_cast<double>(raw.size());
}

}  // namespace

double GbmModel::raw_score(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return base_score + learning_rate * s;
}

std::vector<double> GbmModel::predict(const Matrix& X) const {
  auto out = sum_trees(trees, X);
  for (double& v : out) v = sigmoid(base_score + learning_rate * v);
  return out;
}

GbmModel fit_gbm(const Matrix& X, std::span<const int> y, const GbmParams& params,
                 std::uint64_t seed, std::vector<double>* staged_losses) {
  const std::size_t n = X.rows();
  const std::size_t width = X.cols();
  if (n == 0 || y.size() != n) throw Error(ErrorKind::InvalidArgument, "GBM needs matching, non-empty X and y");
  if (params.n_rounds < 0) throw Error(ErrorKind::InvalidArgument, "n_rounds must be >= 0");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "learning_rate must lie in (0, 1]");
  }
  if (!(params.subsample_rows > 0.0 && params.subsample_rows <= 1.0) ||
      !(params.subsample_cols > 0.0 && params.subsample_cols <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "subsample fractions must lie in (0, 1]");
  }
  if (params.min_leaf < 1) throw Error(ErrorKind::InvalidArgument, "min_leaf must be >= 1");

  GbmModel model;
  model.learning_rate = params.learning_rate;
  model.n_rounds = params.n_rounds;
  model.width = width;

  double pos = 0.0;
  for (int v : y) pos += v;
  double prior = pos / static_cast<double>(n);
  if (pos == 0.0 || pos == static_cast<double>(n)) model.degenerate_prior = true;
  prior = std::clamp(prior, kPriorClip, 1.0 - kPriorClip);
  model.base_score = logit(prior);

  std::vector<double> raw(n, model.base_score);
  if (staged_losses) staged_losses->clear();
  if (params.n_rounds == 0) return model;

  const auto cols = detail::RankedColumns::build(X);
  const std::size_t n_rows_round =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.subsample_rows * static_cast<double>(n))));
  const std::size_t n_cols_tree = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.subsample_cols * static_cast<double>(width))));

  detail::TreeGrowParams grow;
  grow.criterion = detail::SplitCriterion::Variance;
  grow.thresholds = detail::ThresholdMode::Exhaustive;
  grow.max_depth = params.max_depth;
  grow.min_leaf = params.min_leaf;

  std::vector<double> residual(n), hess(n);
  const detail::TreeTargets targets{{}, residual};
  // One-step Newton estimate for the binomial deviance.
  const detail::LeafValueFn newton_leaf = [&](std::span<const std::uint32_t> rows) {
    double num = 0.0, den = 0.0;
    for (auto r : rows) {
      num += residual[r];
      den += hess[r];
    }
    return den > 1e-12 ? num / den : 0.0;
  };

  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0u);
  std::vector<std::size_t> all_cols(width);
  std::iota(all_cols.begin(), all_cols.end(), 0);

  model.trees.reserve(static_cast<std::size_t>(params.n_rounds));
  for (int round = 0; round < params.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(raw[i]);
      residual[i] = y[i] - p;
      hess[i] = p * (1.0 - p);
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(round)}));

    std::vector<std::uint32_t> rows = all_rows;
    if (n_rows_round < n) {
      for (std::size_t j = 0; j < n_rows_round; ++j) std::swap(rows[j], rows[j + rng.below(n - j)]);
      rows.resize(n_rows_round);
      std::sort(rows.begin(), rows.end());
    }
    grow.allowed_cols = all_cols;
    if (n_cols_tree < width) {
      for (std::size_t j = 0; j < n_cols_tree; ++j) {
        std::swap(grow.allowed_cols[j], grow.allowed_cols[j + rng.below(width - j)]);
      }
      grow.allowed_cols.resize(n_cols_tree);
      std::sort(grow.allowed_cols.begin(), grow.allowed_cols.end());
    }
    grow.mtry = static_cast<int>(grow.allowed_cols.size());

    DecisionTree tree = detail::grow_tree(cols, targets, std::move(rows), grow, rng, newton_leaf);
    for (std::size_t i = 0; i < n; ++i) raw[i] += params.learning_rate * tree.predict(X.row(i));
    model.trees.push_back(std::move(tree));

    const double loss = staged_losses ? mean_log_loss(raw, y) : 0.0;
    if (staged_losses) staged_losses->push_back(loss);
    if (!std::isfinite(raw[0])) throw Error(ErrorKind::NonFinite, "GBM raw scores became non-finite");
  }
  return model;
}

}  // namespace credalens::learners
