#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "credalens/explain.hpp"
#include "credalens/learners.hpp"
#include "fixtures.hpp"

namespace axioms {

using credalens::Matrix;
using credalens::Rng;
using credalens::explain::BackgroundSet;
using credalens::explain::PredictFn;
using credalens::learners::ModelFamily;

struct Worst {
  double efficiency = 0.0;
  double symmetry = 0.0;
  double dummy = 0.0;
  double linearity = 0.0;
  int models = 0;
};

// A small model of the family, fit on random logistic data with p features.
inline credalens::learners::FittedModel random_model(ModelFamily fam, std::size_t p, Rng& rng) {
  std::vector<double> beta(p);
  for (auto& b : beta) b = rng.uniform(-2.0, 2.0);
  const auto d = fixtures::logistic_data(120, beta, rng.uniform(-0.5, 0.5), rng.next());
  auto hp = credalens::learners::default_params(fam);
  if (auto* f = std::get_if<credalens::learners::ForestParams>(&hp)) {
    f->n_trees = 4;
    f->max_depth = 6;
  }
  if (auto* g = std::get_if<credalens::learners::GbmParams>(&hp)) {
    g->n_rounds = 8;
    g->max_depth = 3;
  }
  if (auto* m = std::get_if<credalens::learners::MlpParams>(&hp)) {
    m->hidden_sizes = {6};
    m->epochs = 2;
  }
  return credalens::learners::fit_model(fam, hp, d.X, d.y, rng.next(), "m", 1);
}

inline PredictFn as_fn(const credalens::learners::FittedModel& m) {
  return [m](const Matrix& X) { return credalens::learners::predict_proba(m, X); };
}

inline Matrix random_rows(std::size_t n, std::size_t p, Rng& rng) {
  Matrix M(n, p);
  for (auto& v : M.data()) v = rng.uniform(-2.0, 2.0);
  return M;
}

// Efficiency, symmetry, dummy and linearity of shap_exact for `trials` random
// models of one family with 2 <= p <= 8 features. Returns the worst violations.
inline Worst run_suite(ModelFamily fam, int trials, std::uint64_t seed) {
  using credalens::explain::shap_exact;
  using credalens::explain::singleton_blocks;
  Rng rng(seed);
  Worst w;
  for (int t = 0; t < trials; ++t) {
    const std::size_t p = 2 + rng.below(7);
    const auto blocks = singleton_blocks(p);
    const auto f = random_model(fam, p, rng);
    const auto g = random_model(fam, p, rng);
    const PredictFn ff = as_fn(f), gf = as_fn(g);
    const BackgroundSet bg{random_rows(6, p, rng), 0};
    const Matrix xm = random_rows(1, p, rng);
    const auto x = xm.row(0);

    const auto r = shap_exact(ff, x, bg, blocks);
    double total = r.base_value;
    for (double v : r.phi) total += v;
    w.efficiency = std::max(w.efficiency, std::abs(total - r.output));

    // Symmetrize f in features 0 and 1, close the background under the swap,
    // and give x equal values in both.
    const PredictFn sym = [&](const Matrix& X) {
      Matrix S = X;
      for (std::size_t i = 0; i < S.rows(); ++i) std::swap(S(i, 0), S(i, 1));
      auto a = ff(X);
      const auto b = ff(S);
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5 * (a[i] + b[i]);
      return a;
    };
    Matrix bg2(2 * bg.size(), p);
    for (std::size_t i = 0; i < bg.size(); ++i) {
      for (std::size_t c = 0; c < p; ++c) {
        bg2(i, c) = bg.rows(i, c);
        bg2(bg.size() + i, c) = bg.rows(i, c);
      }
      std::swap(bg2(bg.size() + i, 0), bg2(bg.size() + i, 1));
    }
    Matrix xs = xm;
    xs(0, 1) = xs(0, 0);
    const auto rs = shap_exact(sym, xs.row(0), BackgroundSet{bg2, 0}, blocks);
    w.symmetry = std::max(w.symmetry, std::abs(rs.phi[0] - rs.phi[1]));

    // The last feature is pinned to a constant before f sees it.
    const std::size_t d = p - 1;
    const PredictFn dummy = [&](const Matrix& X) {
      Matrix D = X;
      for (std::size_t i = 0; i < D.rows(); ++i) D(i, d) = 0.25;
      return ff(D);
    };
    w.dummy = std::max(w.dummy, std::abs(shap_exact(dummy, x, bg, blocks).phi[d]));

    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    const PredictFn lin = [&](const Matrix& X) {
      auto u = ff(X);
      const auto v = gf(X);
      for (std::size_t i = 0; i < u.size(); ++i) u[i] = a * u[i] + b * v[i];
      return u;
    };
    const auto rl = shap_exact(lin, x, bg, blocks);
    const auto rg = shap_exact(gf, x, bg, blocks);
    for (std::size_t j = 0; j < p; ++j) {
      w.linearity = std::max(w.linearity, std::abs(rl.phi[j] - (a * r.phi[j] + b * rg.phi[j])));
    }
    ++w.models;
  }
  return w;
}

// f(x1, x2) = x1 AND x2 with the uniform background over {0,1}^2.
inline PredictFn and_model() {
  return [](const Matrix& X) {
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = (X(i, 0) == 1.0 && X(i, 1) == 1.0) ? 1.0 : 0.0;
    return out;
  };
}

inline BackgroundSet and_background() {
  Matrix B(4, 2);
  B(1, 1) = 1;
  B(2, 0) = 1;
  B(3, 0) = 1;
  B(3, 1) = 1;
  return BackgroundSet{B, 0};
}

}  // namespace axioms
