#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "credalens/core.hpp"
#include "credalens/data.hpp"

namespace credalens::explain {

// Batch probability function over encoded rows.
using PredictFn = std::function<std::vector<double>(const Matrix&)>;

// Encoded columns of each source feature; a categorical feature's indicator
// block is swapped as a unit.
using FeatureBlocks = std::vector<std::vector<std::size_t>>;

FeatureBlocks singleton_blocks(std::size_t width);

struct BackgroundSet {
  Matrix rows;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return rows.rows(); }
};

// b rows drawn without replacement (all rows when b >= n), kept in row order.
BackgroundSet sample_background(const Matrix& train, std::size_t b, std::uint64_t seed);

// Sorted row indices of a seeded sample without replacement.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t k, std::uint64_t seed);

// Interventional value of coalition `in_coalition` (one flag per feature):
// mean model output with coalition features taken from x and the rest from
// each background row. The full coalition returns f(x) itself.
double value_function(const PredictFn& f, std::span<const double> x, const std::vector<bool>& in_coalition,
                      const BackgroundSet& background, const FeatureBlocks& blocks);

struct ShapResult {
  std::vector<double> phi;
  double base_value = 0.0;
  double output = 0.0;        // f(x)
  std::vector<double> std_err;  // zeros for the exact estimator
};

inline constexpr std::size_t kDefaultExactLimit = 12;

// Enumerates every coalition; throws TooManyFeatures beyond exact_limit.
ShapResult shap_exact(const PredictFn& f, std::span<const double> x, const BackgroundSet& background,
                      const FeatureBlocks& blocks, std::size_t exact_limit = kDefaultExactLimit);

// Monte Carlo over m seeded feature orderings; throws InvalidSampleCount for m = 0.
ShapResult shap_permutation(const PredictFn& f, std::span<const double> x, const BackgroundSet& background,
                            const FeatureBlocks& blocks, std::size_t m, std::uint64_t seed);

enum class Estimator { Exact, Permutation };
std::string_view to_string(Estimator e);
Estimator estimator_from_string(std::string_view s);

struct AttributionMatrix {
  Matrix phi;      // n_explain x n_features
  Matrix std_err;  // same shape, zero for Exact
  double base_value = 0.0;
  std::vector<double> instance_outputs;
  std::vector<std::size_t> instance_ids;
  std::vector<std::string> features;  // display labels, schema order
  Estimator estimator = Estimator::Permutation;
  std::size_t samples_m = 0;
  std::uint64_t seed = 0;
  std::size_t background_size = 0;

  std::size_t n_instances() const noexcept { return phi.rows(); }
  std::size_t n_features() const noexcept { return phi.cols(); }
};

struct ShapSettings {
  Estimator estimator = Estimator::Permutation;
  std::size_t samples_m = 2000;
  std::size_t exact_limit = kDefaultExactLimit;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Instance i uses seed derive_seed(settings.seed, {instance_ids[i]}).
AttributionMatrix shap_batch(const PredictFn& f, const Matrix& X_explain, std::span<const std::size_t> instance_ids,
                             const BackgroundSet& background, const FeatureBlocks& blocks,
                             std::vector<std::string> features, const ShapSettings& settings);

// Mean |phi| per feature.
std::vector<double> mean_abs_phi(const AttributionMatrix& a);

// Features ordered by mean |phi| descending (ties: schema order).
std::vector<std::size_t> summary_order(const AttributionMatrix& a);

// Mean AUC drop over `repeats` seeded within-column shuffles of each feature
// block. Raw values; may be negative. Throws SingleClass.
std::vector<double> permutation_importance(const PredictFn& f, const Matrix& X, std::span<const int> y,
                                           const FeatureBlocks& blocks, std::size_t repeats, std::uint64_t seed);

struct HeatmapModel {
  std::string id;
  std::map<std::string, double> native;  // by feature name; empty means use permutation importance
  PredictFn predict;
};

struct ImportanceHeatmap {
  std::vector<std::string> features;  // display labels, row order
  std::vector<std::string> model_ids;
  std::vector<std::string> method;    // "native" or "permutation" per model
  Matrix values;                      // features x models, scaled to [0,1]
  Matrix raw;                         // unscaled, same layout (permutation values unclipped)
};

// Models appear in the given order (callers pass leaderboard order).
ImportanceHeatmap importance_heatmap(const std::vector<HeatmapModel>& models, const data::EncodedMatrix& val,
                                     std::size_t repeats, std::uint64_t seed, unsigned threads = 1);

}  // namespace credalens::explain
