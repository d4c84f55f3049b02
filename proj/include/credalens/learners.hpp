#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "credalens/core.hpp"

namespace credalens::learners {

enum class ModelFamily { GLM, DRF, XRT, GBM, DL };

inline constexpr ModelFamily kAllFamilies[] = {ModelFamily::GLM, ModelFamily::DRF, ModelFamily::XRT,
                                               ModelFamily::GBM, ModelFamily::DL};

std::string_view to_string(ModelFamily f);
ModelFamily family_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Hyperparameters (defaults are the engine defaults)
// ---------------------------------------------------------------------------

struct GlmParams {
  double l2 = 1e-4;
  bool non_negative = false;
  bool standardize = true;
  int max_iter = 100;
  double tol = 1e-8;
};

struct ForestParams {
  int n_trees = 200;
  int max_depth = 20;
  int mtry = 0;  // 0: ceil(sqrt(width))
  int min_leaf = 1;
};

struct GbmParams {
  int n_rounds = 300;
  double learning_rate = 0.1;
  int max_depth = 5;
  int min_leaf = 10;
  double subsample_rows = 0.8;
  double subsample_cols = 0.8;
};

struct MlpParams {
  std::vector<int> hidden_sizes{32, 32};
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 0.01;
  double l2 = 1e-4;
};

using Hyperparams = std::variant<GlmParams, ForestParams, GbmParams, MlpParams>;

// Engine defaults per family (XRT uses min_leaf 5).
Hyperparams default_params(ModelFamily family);

// ---------------------------------------------------------------------------
// GLM (binomial family, logit link)
// ---------------------------------------------------------------------------

struct GlmModel {
  std::vector<double> coefficients;  // on the standardized scale, one per input column
  double intercept = 0.0;
  double l2 = 0.0;
  bool non_negative = false;
  std::vector<double> means;  // standardization used at fit time
  std::vector<double> stddevs;  // 0 marks a zero-variance column (coefficient fixed at 0)
  int iterations = 0;

  std::size_t width() const noexcept { return coefficients.size(); }
  double linear_predictor(std::span<const double> x) const;
  // Coefficients and intercept mapped back to the raw input scale.
  std::vector<double> raw_coefficients() const;
  double raw_intercept() const;
};

// Logistic regression. Unconstrained fits use Newton/IRLS; non-negative fits
// use projected coordinate descent on the same quadratic model. Both apply
// step halving on the penalized objective.
GlmModel fit_glm(const Matrix& X, std::span<const int> y, const GlmParams& params);

// Mean log-loss + (l2/2)*||beta||^2 on the standardized scale.
double glm_objective(const GlmModel& model, const Matrix& X, std::span<const int> y);

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

struct TreeNode {
  std::int32_t split_col = -1;  // -1 for leaves
  double threshold = 0.0;       // rows with x[split_col] <= threshold go left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double leaf_value = 0.0;
  double gain = 0.0;
  std::uint32_t n_samples = 0;

  bool is_leaf() const noexcept { return split_col < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int max_depth = 0;

  double predict(std::span<const double> x) const;
  int depth() const;
};

// Per row, the sum of tree outputs added in tree order. Walks tree-major over
// row blocks; the result equals summing DecisionTree::predict row by row.
std::vector<double> sum_trees(const std::vector<DecisionTree>& trees, const Matrix& X);

enum class ForestMode { DRF, XRT };

struct ForestModel {
  std::vector<DecisionTree> trees;
  ForestMode mode = ForestMode::DRF;
  int mtry = 1;
  int min_leaf = 1;
  int max_depth = 20;
  bool bootstrap = true;
  std::vector<std::uint64_t> per_tree_seeds;
  std::size_t width = 0;

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& X) const;
};

// DRF: bootstrap rows, best Gini split over mtry random features with
// exhaustive thresholds. XRT: all rows, one uniform threshold per candidate
// feature. Tree i is grown from derive_seed(seed, {i}) alone, so the result is
// independent of `threads`.
ForestModel fit_forest(const Matrix& X, std::span<const int> y, ForestMode mode,
                       const ForestParams& params, std::uint64_t seed, unsigned threads = 1);

struct GbmModel {
  double base_score = 0.0;  // log-odds of the training prior
  std::vector<DecisionTree> trees;
  double learning_rate = 0.1;
  int n_rounds = 0;
  bool degenerate_prior = false;  // training labels were a single class
  std::size_t width = 0;

  double raw_score(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return sigmoid(raw_score(x)); }
  std::vector<double> predict(const Matrix& X) const;
};

// Binomial-deviance boosting with Newton leaf values. If `staged_losses` is
// given it receives the full-training-set log-loss after each round.
GbmModel fit_gbm(const Matrix& X, std::span<const int> y, const GbmParams& params,
                 std::uint64_t seed, std::vector<double>* staged_losses = nullptr);

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out
};

struct MlpModel {
  std::vector<DenseLayer> layers;  // hidden layers (ReLU) then the sigmoid output layer
  std::vector<int> hidden_sizes;
  std::vector<double> means;
  std::vector<double> stddevs;
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 0;

  std::size_t width() const noexcept { return means.size(); }
  // Batch prediction on raw (unstandardized) rows.
  std::vector<double> predict(const Matrix& X) const;
};

MlpModel fit_mlp(const Matrix& X, std::span<const int> y, const MlpParams& params,
                 std::uint64_t seed);

// Mean binary cross-entropy + (l2/2)*sum(W^2) over the given raw rows and the
// gradient with respect to every parameter, flattened layer by layer as
// [weights..., bias...]. Exposed for gradient checking.
struct MlpLossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
MlpLossGrad mlp_loss_and_gradient(const MlpModel& model, const Matrix& X, std::span<const int> y);
std::vector<double> mlp_flatten(const MlpModel& model);
void mlp_unflatten(MlpModel& model, std::span<const double> params);

// ---------------------------------------------------------------------------
// FittedModel
// ---------------------------------------------------------------------------

using ModelPayload = std::variant<GlmModel, ForestModel, GbmModel, MlpModel>;

struct FittedModel {
  std::string id;
  ModelFamily family = ModelFamily::GLM;
  ModelPayload payload;
  Hyperparams hyperparams;
  std::uint64_t train_seed = 0;
  std::size_t width = 0;
};

FittedModel fit_model(ModelFamily family, const Hyperparams& params, const Matrix& X,
                      std::span<const int> y, std::uint64_t seed, std::string id = {},
                      unsigned threads = 1);

// Class-1 probabilities clamped into [0, 1]. Throws WidthMismatch.
std::vector<double> predict_proba(const FittedModel& model, const Matrix& X);

// Per encoded column: |standardized coefficient| (GLM) or total split gain
// (trees). Empty for DL, whose importance comes from permutation instead.
std::vector<double> native_importance_columns(const FittedModel& model);

// Column scores summed into source features through source_of; empty for DL.
std::map<std::string, double> native_importance(const FittedModel& model,
                                                std::span<const std::size_t> source_of,
                                                std::span<const std::string> feature_names);

}  // namespace credalens::learners
