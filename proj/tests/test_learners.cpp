#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "credalens/learners.hpp"
#include "credalens/model_io.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace credalens;
using namespace credalens::learners;
using fixtures::accuracy;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double max_abs_error(const GlmModel& m, const std::vector<double>& beta, double intercept) {
  const auto raw = m.raw_coefficients();
  double e = std::abs(m.raw_intercept() - intercept);
  for (std::size_t c = 0; c < beta.size(); ++c) e = std::max(e, std::abs(raw[c] - beta[c]));
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// GLM
// ---------------------------------------------------------------------------

TEST_CASE("GLM recovers logistic coefficients at n = 50,000") {
  const auto d = fixtures::logistic_data(50000, {1.0, -2.0}, 0.5, 11);
  GlmParams p;
  p.l2 = 0.0;
  const GlmModel m = fit_glm(d.X, d.y, p);
  const auto raw = m.raw_coefficients();
  CHECK(std::abs(raw[0] - 1.0) <= 0.05);
  CHECK(std::abs(raw[1] + 2.0) <= 0.05);
  CHECK(std::abs(m.raw_intercept() - 0.5) <= 0.05);
}

TEST_CASE("GLM coefficient error shrinks as n grows") {
  const std::vector<double> beta{1.0, -2.0};
  GlmParams p;
  p.l2 = 0.0;
  double prev = 1e9;
  for (std::size_t n : {1000u, 10000u, 50000u}) {
    const auto d = fixtures::logistic_data(n, beta, 0.5, 5);
    const double e = max_abs_error(fit_glm(d.X, d.y, p), beta, 0.5);
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("GLM zero-variance column gets coefficient exactly 0") {
  auto d = fixtures::logistic_data(500, {1.0, 0.0}, 0.0, 3);
  for (std::size_t r = 0; r < d.X.rows(); ++r) d.X(r, 1) = 4.2;
  const GlmModel m = fit_glm(d.X, d.y, GlmParams{});
  CHECK(m.coefficients[1] == 0.0);
  CHECK(m.raw_coefficients()[1] == 0.0);
}

TEST_CASE("non-negative GLM with a negative unconstrained slope") {
  const auto d = fixtures::logistic_data(2000, {-1.5}, 0.3, 8);
  GlmParams p;
  p.non_negative = true;
  p.l2 = 0.0;
  const GlmModel m = fit_glm(d.X, d.y, p);
  CHECK(m.coefficients[0] == 0.0);
  const double ybar = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(d.y.size());
  CHECK(m.intercept == doctest::Approx(logit(ybar)).epsilon(1e-8));
}

TEST_CASE("non-negative GLM coefficients are never negative") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> beta(4);
    for (auto& b : beta) b = rng.uniform(-2.0, 2.0);
    const auto d = fixtures::logistic_data(400, beta, rng.uniform(-1, 1), rng.next());
    GlmParams p;
    p.non_negative = true;
    p.standardize = trial % 2 == 0;
    const GlmModel m = fit_glm(d.X, d.y, p);
    for (double c : m.coefficients) CHECK(c >= 0.0);
  }
}

TEST_CASE("GLM zero model predicts 0.5") {
  FittedModel f;
  f.family = ModelFamily::GLM;
  f.width = 2;
  GlmModel g;
  g.coefficients = {0.0, 0.0};
  g.means = {0.0, 0.0};
  g.stddevs = {1.0, 1.0};
  f.payload = g;
  const auto p = predict_proba(f, Matrix(3, 2, 7.0));
  CHECK(p == std::vector<double>{0.5, 0.5, 0.5});
  CHECK_THROWS_AS(predict_proba(f, Matrix(3, 3)), Error);
}

// ---------------------------------------------------------------------------
// Forests
// ---------------------------------------------------------------------------

TEST_CASE("forest on pure labels predicts 1 everywhere") {
  auto d = fixtures::xor_data(100, 1);
  std::fill(d.y.begin(), d.y.end(), 1);
  for (ForestMode mode : {ForestMode::DRF, ForestMode::XRT}) {
    ForestParams p;
    p.n_trees = 10;
    const ForestModel m = fit_forest(d.X, d.y, mode, p, 3);
    for (std::size_t r = 0; r < d.X.rows(); ++r) CHECK(m.predict(d.X.row(r)) == 1.0);
  }
}

TEST_CASE("DRF learns XOR") {
  const auto d = fixtures::xor_data(1000, 2);
  ForestParams p;
  p.n_trees = 100;
  p.max_depth = 4;
  FittedModel m = fit_model(ModelFamily::DRF, p, d.X, d.y, 5, "drf", 1);
  CHECK(accuracy(predict_proba(m, d.X), d.y) >= 0.95);
  const auto& f = std::get<ForestModel>(m.payload);
  CHECK(f.bootstrap);
  CHECK(f.mtry == 2);
}

TEST_CASE("forest fit is independent of worker count") {
  const auto d = fixtures::logistic_data(600, {1.0, -1.0, 0.5, 0.0}, 0.0, 4);
  for (ForestMode mode : {ForestMode::DRF, ForestMode::XRT}) {
    ForestParams p;
    p.n_trees = 24;
    const auto a = model_to_json(fit_model(mode == ForestMode::DRF ? ModelFamily::DRF : ModelFamily::XRT, p,
                                           d.X, d.y, 9, "f", 1));
    const auto b = model_to_json(fit_model(mode == ForestMode::DRF ? ModelFamily::DRF : ModelFamily::XRT, p,
                                           d.X, d.y, 9, "f", 8));
    CHECK(a.dump() == b.dump());
  }
}

TEST_CASE("XRT is invariant to training row order") {
  const auto d = fixtures::logistic_data(300, {1.0, -1.0, 0.5}, 0.0, 21);
  std::vector<std::size_t> perm(d.X.rows());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(5);
  rng.shuffle(perm);
  const Matrix Xp = d.X.take_rows(perm);
  std::vector<int> yp(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) yp[i] = d.y[perm[i]];
  ForestParams p;
  p.n_trees = 20;
  p.min_leaf = 5;
  const ForestModel a = fit_forest(d.X, d.y, ForestMode::XRT, p, 77);
  const ForestModel b = fit_forest(Xp, yp, ForestMode::XRT, p, 77);
  CHECK_FALSE(a.bootstrap);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      CHECK(a.trees[t].nodes[k].split_col == b.trees[t].nodes[k].split_col);
      CHECK(a.trees[t].nodes[k].threshold == b.trees[t].nodes[k].threshold);
    }
  }
  for (std::size_t r = 0; r < d.X.rows(); ++r) CHECK(a.predict(d.X.row(r)) == b.predict(d.X.row(r)));
}

TEST_CASE("forest of two trees voting 1 and 0 predicts 0.5") {
  ForestModel f;
  f.width = 1;
  DecisionTree one, zero;
  one.nodes.push_back(TreeNode{});
  one.nodes[0].leaf_value = 1.0;
  zero.nodes.push_back(TreeNode{});
  f.trees = {one, zero};
  const std::vector<double> x{0.0};
  CHECK(f.predict(x) == 0.5);
}

TEST_CASE("tree structure invariants") {
  const auto d = fixtures::logistic_data(500, {1.0, -1.0, 2.0}, 0.0, 6);
  ForestParams p;
  p.n_trees = 5;
  const ForestModel m = fit_forest(d.X, d.y, ForestMode::DRF, p, 1);
  for (const auto& t : m.trees) {
    std::vector<int> parents(t.nodes.size(), 0);
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.is_leaf()) {
        CHECK(n.left == -1);
        CHECK(n.right == -1);
      } else {
        CHECK(n.gain >= 0.0);
        REQUIRE(n.left > static_cast<int>(i));
        REQUIRE(n.right > static_cast<int>(i));
        ++parents[static_cast<std::size_t>(n.left)];
        ++parents[static_cast<std::size_t>(n.right)];
      }
    }
    CHECK(parents[0] == 0);
    for (std::size_t i = 1; i < parents.size(); ++i) CHECK(parents[i] == 1);
    CHECK(t.depth() <= p.max_depth);
  }
}

// ---------------------------------------------------------------------------
// GBM
// ---------------------------------------------------------------------------

TEST_CASE("GBM with zero rounds predicts the prior") {
  auto d = fixtures::xor_data(400, 3);
  for (std::size_t i = 0; i < d.y.size(); ++i) d.y[i] = i % 4 == 0;
  GbmParams p;
  p.n_rounds = 0;
  const GbmModel m = fit_gbm(d.X, d.y, p, 1);
  CHECK(m.trees.empty());
  for (std::size_t r = 0; r < 10; ++r) CHECK(m.predict(d.X.row(r)) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("GBM flags a degenerate prior") {
  auto d = fixtures::xor_data(50, 3);
  std::fill(d.y.begin(), d.y.end(), 0);
  GbmParams p;
  p.n_rounds = 3;
  const GbmModel m = fit_gbm(d.X, d.y, p, 1);
  CHECK(m.degenerate_prior);
  CHECK(std::isfinite(m.base_score));
}

TEST_CASE("GBM stumps separate a perfectly separable feature") {
  Matrix X(200, 1);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    X(i, 0) = static_cast<double>(i);
    y[i] = i >= 120;
  }
  GbmParams p;
  p.n_rounds = 50;
  p.learning_rate = 0.3;
  p.max_depth = 1;
  p.min_leaf = 1;
  p.subsample_rows = 1.0;
  p.subsample_cols = 1.0;
  const GbmModel m = fit_gbm(X, y, p, 2);
  std::vector<double> pred;
  for (std::size_t i = 0; i < 200; ++i) pred.push_back(m.predict(X.row(i)));
  CHECK(accuracy(pred, y) == 1.0);
}

TEST_CASE("GBM full-data training log-loss is non-increasing") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = fixtures::logistic_data(500, {1.0, -1.0, 0.5, 2.0}, 0.2, rng.next());
    GbmParams p;
    p.n_rounds = 60;
    p.subsample_rows = 1.0;
    p.subsample_cols = 1.0;
    p.min_leaf = 1 + static_cast<int>(rng.below(10));
    p.max_depth = 1 + static_cast<int>(rng.below(5));
    std::vector<double> staged;
    fit_gbm(d.X, d.y, p, rng.next(), &staged);
    REQUIRE(staged.size() == 60);
    for (std::size_t t = 1; t < staged.size(); ++t) CHECK(staged[t] <= staged[t - 1] + 1e-12);
  }
}

TEST_CASE("GBM unused feature has zero native importance") {
  auto d = fixtures::logistic_data(300, {2.0, 0.0}, 0.0, 12);
  for (std::size_t r = 0; r < d.X.rows(); ++r) d.X(r, 1) = 1.0;
  GbmParams p;
  p.n_rounds = 20;
  const auto m = fit_model(ModelFamily::GBM, p, d.X, d.y, 4, "gbm", 1);
  const std::vector<std::size_t> source_of{0, 1};
  const std::vector<std::string> names{"a", "b"};
  const auto imp = native_importance(m, source_of, names);
  CHECK(imp.at("b") == 0.0);
  CHECK(imp.at("a") > 0.0);
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

TEST_CASE("MLP separates blobs") {
  const auto d = fixtures::blobs(400, 8);
  MlpParams p;
  p.hidden_sizes = {8};
  p.epochs = 50;
  const MlpModel m = fit_mlp(d.X, d.y, p, 3);
  CHECK(accuracy(m.predict(d.X), d.y) >= 0.99);
}

TEST_CASE("MLP analytic gradient matches central differences") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = fixtures::logistic_data(5, {1.0, -0.5, 0.25}, 0.0, rng.next());
    MlpParams p;
    p.hidden_sizes = {4, 3};
    p.epochs = 1;
    p.l2 = 1e-3;
    MlpModel m = fit_mlp(d.X, d.y, p, rng.next());
    // Generic parameters: fresh biases keep every ReLU pre-activation away from 0.
    auto theta = mlp_flatten(m);
    for (double& t : theta) t = rng.uniform(-1.0, 1.0);
    mlp_unflatten(m, theta);
    const auto lg = mlp_loss_and_gradient(m, d.X, d.y);
    const double h = 1e-5;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double keep = theta[k];
      theta[k] = keep + h;
      mlp_unflatten(m, theta);
      const double up = mlp_loss_and_gradient(m, d.X, d.y).loss;
      theta[k] = keep - h;
      mlp_unflatten(m, theta);
      const double down = mlp_loss_and_gradient(m, d.X, d.y).loss;
      theta[k] = keep;
      mlp_unflatten(m, theta);
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(lg.grad[k]), 1e-6});
      CHECK(std::abs(numeric - lg.grad[k]) / denom <= 1e-4);
    }
  }
}

TEST_CASE("MLP training is deterministic") {
  const auto d = fixtures::blobs(200, 1);
  MlpParams p;
  p.hidden_sizes = {6, 4};
  p.epochs = 5;
  const MlpModel a = fit_mlp(d.X, d.y, p, 42);
  const MlpModel b = fit_mlp(d.X, d.y, p, 42);
  CHECK(same_bits(mlp_flatten(a), mlp_flatten(b)));
  const MlpModel c = fit_mlp(d.X, d.y, p, 43);
  CHECK_FALSE(same_bits(mlp_flatten(a), mlp_flatten(c)));
}

TEST_CASE("MLP rejects bad hyperparameters") {
  const auto d = fixtures::blobs(20, 1);
  MlpParams p;
  p.epochs = 0;
  CHECK_THROWS_AS(fit_mlp(d.X, d.y, p, 1), Error);
  p = MlpParams{};
  p.hidden_sizes.clear();
  CHECK_THROWS_AS(fit_mlp(d.X, d.y, p, 1), Error);
  p = MlpParams{};
  p.learning_rate = 1e6;
  p.epochs = 20;
  try {
    fit_mlp(d.X, d.y, p, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
}

// ---------------------------------------------------------------------------
// Shared contracts
// ---------------------------------------------------------------------------

TEST_CASE("every family predicts in [0,1] on arbitrary finite input and reloads bit-exactly") {
  const auto d = fixtures::logistic_data(300, {1.0, -2.0, 0.5}, 0.1, 31);
  Matrix wild(50, 3);
  Rng rng(4);
  for (auto& v : wild.data()) v = rng.uniform(-1e6, 1e6);
  for (ModelFamily fam : kAllFamilies) {
    Hyperparams hp = default_params(fam);
    if (auto* f = std::get_if<ForestParams>(&hp)) f->n_trees = 10;
    if (auto* g = std::get_if<GbmParams>(&hp)) g->n_rounds = 20;
    if (auto* m = std::get_if<MlpParams>(&hp)) m->epochs = 5;
    const FittedModel m = fit_model(fam, hp, d.X, d.y, 8, std::string(to_string(fam)), 1);
    for (const Matrix* X : std::initializer_list<const Matrix*>{&d.X, &wild}) {
      const auto p = predict_proba(m, *X);
      for (double v : p) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
    const FittedModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    CHECK(same_bits(predict_proba(m, d.X), predict_proba(back, d.X)));
    CHECK(model_to_json(back).dump() == model_to_json(m).dump());

    const auto batch = predict_proba(m, d.X);
    for (std::size_t r = 0; r < d.X.rows(); r += 37) {
      const std::vector<std::size_t> one{r};
      CHECK(predict_proba(m, d.X.take_rows(one))[0] == batch[r]);
    }
  }
}

TEST_CASE("native importance examples") {
  FittedModel glm;
  glm.family = ModelFamily::GLM;
  glm.width = 2;
  GlmModel g;
  g.coefficients = {3.0, -4.0};
  g.means = {0, 0};
  g.stddevs = {1, 1};
  glm.payload = g;
  CHECK(native_importance_columns(glm) == std::vector<double>{3.0, 4.0});

  FittedModel gbm;
  gbm.family = ModelFamily::GBM;
  gbm.width = 3;
  GbmModel b;
  b.width = 3;
  DecisionTree t;
  auto split = [](int col, double gain, int l, int r) {
    TreeNode n;
    n.split_col = col;
    n.gain = gain;
    n.left = l;
    n.right = r;
    return n;
  };
  t.nodes = {split(0, 0.2, 1, 2), split(1, 0.1, 3, 4), TreeNode{}, TreeNode{}, TreeNode{}};
  b.trees = {t};
  gbm.payload = b;
  const std::vector<std::size_t> source_of{0, 0, 0};
  const std::vector<std::string> names{"colour"};
  CHECK(native_importance(gbm, source_of, names).at("colour") == doctest::Approx(0.3).epsilon(1e-15));

  FittedModel dl;
  dl.family = ModelFamily::DL;
  dl.payload = MlpModel{};
  CHECK(native_importance(dl, source_of, names).empty());
}
