#pragma once

#include <cmath>
#include <vector>

#include "credalens/core.hpp"

namespace fixtures {

struct Labeled {
  credalens::Matrix X;
  std::vector<int> y;
};

// Rows drawn from P(y=1|x) = sigmoid(intercept + beta . x), x ~ N(0,1) via Box-Muller.
inline Labeled logistic_data(std::size_t n, const std::vector<double>& beta, double intercept,
                             std::uint64_t seed) {
  credalens::Rng rng(seed);
  Labeled d{credalens::Matrix(n, beta.size()), std::vector<int>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    double z = intercept;
    for (std::size_t c = 0; c < beta.size(); ++c) {
      const double u1 = 1.0 - rng.uniform();
      const double u2 = rng.uniform();
      const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
      d.X(r, c) = g;
      z += beta[c] * g;
    }
    d.y[r] = rng.uniform() < credalens::sigmoid(z) ? 1 : 0;
  }
  return d;
}

inline Labeled xor_data(std::size_t n, std::uint64_t seed) {
  credalens::Rng rng(seed);
  Labeled d{credalens::Matrix(n, 2), std::vector<int>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    const int a = static_cast<int>(rng.below(2));
    const int b = static_cast<int>(rng.below(2));
    d.X(r, 0) = a;
    d.X(r, 1) = b;
    d.y[r] = a ^ b;
  }
  return d;
}

// Two well separated Gaussian blobs in the plane.
inline Labeled blobs(std::size_t n, std::uint64_t seed) {
  credalens::Rng rng(seed);
  Labeled d{credalens::Matrix(n, 2), std::vector<int>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    const int cls = static_cast<int>(r % 2);
    const double centre = cls ? 3.0 : -3.0;
    d.X(r, 0) = centre + rng.uniform(-1.0, 1.0);
    d.X(r, 1) = centre + rng.uniform(-1.0, 1.0);
    d.y[r] = cls;
  }
  return d;
}

inline double accuracy(const std::vector<double>& p, const std::vector<int>& y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += ((p[i] >= 0.5) == (y[i] == 1));
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

}  // namespace fixtures
