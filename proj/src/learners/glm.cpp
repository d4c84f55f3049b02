#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "credalens/learners.hpp"

namespace credalens::learners {

namespace {

constexpr double kL2Floor = 1e-8;
constexpr int kMaxHalvings = 40;

// Standardized design restricted to the active (non-constant) columns, with a
// leading column of ones for the intercept.
struct Design {
  Eigen::MatrixXd Z;
  std::vector<std::size_t> active;
};

Design build_design(const Matrix& X, const GlmModel& m) {
  Design d;
  for (std::size_t c = 0; c < X.cols(); ++c) {
    if (m.stddevs[c] > 0.0) d.active.push_back(c);
  }
  d.Z.resize(static_cast<Eigen::Index>(X.rows()), static_cast<Eigen::Index>(d.active.size() + 1));
  for (std::size_t r = 0; r < X.rows(); ++r) {
    d.Z(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t j = 0; j < d.active.size(); ++j) {
      const std::size_t c = d.active[j];
      d.Z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j + 1)) =
          (X(r, c) - m.means[c]) / m.stddevs[c];
    }
  }
  return d;
}

double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double objective(const Eigen::MatrixXd& Z, std::span<const int> y, const Eigen::VectorXd& beta,
                 double l2) {
  const Eigen::VectorXd eta = Z * beta;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    loss += log1pexp(eta[i]) - (y[static_cast<std::size_t>(i)] ? eta[i] : 0.0);
  }
  loss /= static_cast<double>(eta.size());
  return loss + 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string("GLM ") + what + " is not finite");
}

// Gradient and Hessian of the penalized mean log-loss at beta.
void gradient_hessian(const Eigen::MatrixXd& Z, std::span<const int> y, const Eigen::VectorXd& beta,
                      double l2, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
  const Eigen::Index n = Z.rows();
  const Eigen::VectorXd eta = Z * beta;
  Eigen::VectorXd resid(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = sigmoid(eta[i]);
    resid[i] = p - y[static_cast<std::size_t>(i)];
    w[i] = std::max(p * (1.0 - p), 1e-12);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  g = Z.transpose() * resid * inv_n;
  H = Z.transpose() * w.asDiagonal() * Z * inv_n;
  for (Eigen::Index j = 1; j < beta.size(); ++j) {
    g[j] += l2 * beta[j];
    H(j, j) += l2;
  }
}

// Minimizes g.d + d'Hd/2 subject to beta + d >= 0 on every non-intercept
// coordinate, by cyclic coordinate descent.
Eigen::VectorXd constrained_newton_direction(const Eigen::VectorXd& beta, const Eigen::VectorXd& g,
                                             const Eigen::MatrixXd& H, double tol) {
  const Eigen::Index p = beta.size();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd Hd = Eigen::VectorXd::Zero(p);
  for (int pass = 0; pass < 1000; ++pass) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (H(j, j) <= 0.0) continue;
      double dj = d[j] - (g[j] + Hd[j]) / H(j, j);
      if (j > 0) dj = std::max(dj, -beta[j]);
      const double change = dj - d[j];
      if (change != 0.0) {
        Hd += H.col(j) * change;
        d[j] = dj;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change < tol * 1e-2) break;
  }
  return d;
}

}  // namespace

double GlmModel::linear_predictor(std::span<const double> x) const {
  double eta = intercept;
  for (std::size_t c = 0; c < coefficients.size(); ++c) {
    if (stddevs[c] > 0.0 && coefficients[c] != 0.0) {
      eta += coefficients[c] * (x[c] - means[c]) / stddevs[c];
    }
  }
  return eta;
}

std::vector<double> GlmModel::raw_coefficients() const {
  std::vector<double> out(coefficients.size(), 0.0);
  for (std::size_t c = 0; c < coefficients.size(); ++c) {
    if (stddevs[c] > 0.0) out[c] = coefficients[c] / stddevs[c];
  }
  return out;
}

double GlmModel::raw_intercept() const {
  double b = intercept;
  for (std::size_t c = 0; c < coefficients.size(); ++c) {
    if (stddevs[c] > 0.0) b -= coefficients[c] * means[c] / stddevs[c];
  }
  return b;
}

double glm_objective(const GlmModel& model, const Matrix& X, std::span<const int> y) {
  Design d = build_design(X, model);
  Eigen::VectorXd beta(static_cast<Eigen::Index>(d.active.size() + 1));
  beta[0] = model.intercept;
  for (std::size_t j = 0; j < d.active.size(); ++j) {
    beta[static_cast<Eigen::Index>(j + 1)] = model.coefficients[d.active[j]];
  }
  return objective(d.Z, y, beta, std::max(model.l2, kL2Floor));
}

GlmModel fit_glm(const Matrix& X, std::span<const int> y, const GlmParams& params) {
  if (params.max_iter < 1) throw Error(ErrorKind::InvalidArgument, "GLM max_iter must be >= 1");
  if (!(params.tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "GLM tol must be > 0");
  if (!(params.l2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "GLM l2 must be >= 0");
  if (X.rows() != y.size() || X.rows() == 0) {
    throw Error(ErrorKind::InvalidArgument, "GLM needs matching, non-empty X and y");
  }

  const std::size_t n = X.rows();
  const std::size_t width = X.cols();
  GlmModel m;
  m.l2 = params.l2;
  m.non_negative = params.non_negative;
  m.coefficients.assign(width, 0.0);
  m.means.assign(width, 0.0);
  m.stddevs.assign(width, 1.0);
  for (std::size_t c = 0; c < width; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += X(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (X(r, c) - mean) * (X(r, c) - mean);
    var /= static_cast<double>(n);
    if (params.standardize) {
      m.means[c] = mean;
      m.stddevs[c] = std::sqrt(var);
    }
    bool constant = true;
    for (std::size_t r = 1; r < n && constant; ++r) constant = X(r, c) == X(0, c);
    if (constant || !(var > 0.0)) m.stddevs[c] = 0.0;
  }

  const double l2 = std::max(params.l2, kL2Floor);
  Design d = build_design(X, m);
  const Eigen::Index p = d.Z.cols();

  double ybar = 0.0;
  for (int v : y) ybar += v;
  ybar /= static_cast<double>(n);
  ybar = std::clamp(ybar, 1e-6, 1.0 - 1e-6);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta[0] = logit(ybar);

  double f = objective(d.Z, y, beta, l2);
  check_finite(f, "loss");
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  int it = 0;
  for (; it < params.max_iter; ++it) {
    gradient_hessian(d.Z, y, beta, l2, g, H);
    Eigen::VectorXd dir;
    if (params.non_negative) {
      dir = constrained_newton_direction(beta, g, H, params.tol);
    } else {
      dir = -H.ldlt().solve(g);
    }
    for (Eigen::Index j = 0; j < p; ++j) check_finite(dir[j], "update");

    // Step halving keeps the penalized objective monotone. The feasible set is
    // convex, so every shortened constrained step stays feasible.
    double t = 1.0;
    Eigen::VectorXd next = beta + dir;
    double f_next = objective(d.Z, y, next, l2);
    int halvings = 0;
    while (!(f_next <= f) && halvings < kMaxHalvings) {
      t *= 0.5;
      next = beta + t * dir;
      f_next = objective(d.Z, y, next, l2);
      ++halvings;
    }
    if (!(f_next <= f)) {
      ++it;
      break;  // no descent possible at machine precision
    }
    const double max_step = (t * dir).cwiseAbs().maxCoeff();
    beta = next;
    if (params.non_negative) {
      for (Eigen::Index j = 1; j < p; ++j) beta[j] = std::max(beta[j], 0.0);
    }
    f = f_next;
    check_finite(f, "loss");
    if (max_step < params.tol) {
      ++it;
      break;
    }
  }

  m.iterations = it;
  m.intercept = beta[0];
  for (std::size_t j = 0; j < d.active.size(); ++j) {
    m.coefficients[d.active[j]] = beta[static_cast<Eigen::Index>(j + 1)];
  }
  check_finite(m.intercept, "intercept");
  return m;
}

}  // namespace credalens::learners
