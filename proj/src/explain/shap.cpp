#include <algorithm>
#include <cmath>
#include <numeric>

#include "credalens/explain.hpp"

namespace credalens::explain {

namespace {

constexpr std::size_t kMaxBatchRows = 1 << 15;

void check_inputs(std::span<const double> x, const BackgroundSet& background, const FeatureBlocks& blocks) {
  if (background.size() == 0) throw Error(ErrorKind::InvalidArgument, "background set is empty");
  if (x.size() != background.rows.cols()) {
    throw Error(ErrorKind::WidthMismatch, "instance width " + std::to_string(x.size()) +
                                              " differs from background width " +
                                              std::to_string(background.rows.cols()));
  }
  for (const auto& b : blocks) {
    for (auto c : b) {
      if (c >= x.size()) throw Error(ErrorKind::WidthMismatch, "feature block refers to a column past the width");
    }
  }
}

// Writes the b composite rows of one coalition into `out` starting at row `at`.
void write_composites(Matrix& out, std::size_t at, std::span<const double> x, const std::vector<bool>& in,
                      const BackgroundSet& bg, const FeatureBlocks& blocks) {
  for (std::size_t r = 0; r < bg.size(); ++r) {
    auto dst = out.row(at + r);
    auto src = bg.rows.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      if (!in[j]) continue;
      for (auto c : blocks[j]) dst[c] = x[c];
    }
  }
}

double single_output(const PredictFn& f, std::span<const double> x) {
  Matrix one(1, x.size());
  std::copy(x.begin(), x.end(), one.row(0).begin());
  return f(one).at(0);
}

double block_mean(const std::vector<double>& p, std::size_t start, std::size_t b) {
  double m = p[start];
  for (std::size_t r = 1; r < b; ++r) m += (p[start + r] - m) / static_cast<double>(r + 1);
  return m;
}

// Values of many coalitions, batched into as few model calls as the row cap allows.
std::vector<double> coalition_values(const PredictFn& f, std::span<const double> x,
                                     const std::vector<std::vector<bool>>& coalitions, const BackgroundSet& bg,
                                     const FeatureBlocks& blocks) {
  const std::size_t b = bg.size();
  const std::size_t per_batch = std::max<std::size_t>(1, kMaxBatchRows / b);
  std::vector<double> out(coalitions.size());
  for (std::size_t start = 0; start < coalitions.size(); start += per_batch) {
    const std::size_t len = std::min(per_batch, coalitions.size() - start);
    Matrix comp(len * b, x.size());
    for (std::size_t i = 0; i < len; ++i) write_composites(comp, i * b, x, coalitions[start + i], bg, blocks);
    const auto p = f(comp);
    for (std::size_t i = 0; i < len; ++i) out[start + i] = block_mean(p, i * b, b);
  }
  return out;
}

}  // namespace

FeatureBlocks singleton_blocks(std::size_t width) {
  FeatureBlocks b(width);
  for (std::size_t c = 0; c < width; ++c) b[c] = {c};
  return b;
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  Rng rng(seed);
  for (std::size_t j = 0; j < k; ++j) std::swap(idx[j], idx[j + rng.below(n - j)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

BackgroundSet sample_background(const Matrix& train, std::size_t b, std::uint64_t seed) {
  if (b == 0) throw Error(ErrorKind::InvalidArgument, "background size must be >= 1");
  if (train.rows() == 0) throw Error(ErrorKind::InvalidArgument, "cannot draw a background from no rows");
  const auto rows = sample_rows(train.rows(), b, seed);
  return BackgroundSet{train.take_rows(rows), seed};
}

double value_function(const PredictFn& f, std::span<const double> x, const std::vector<bool>& in_coalition,
                      const BackgroundSet& background, const FeatureBlocks& blocks) {
  check_inputs(x, background, blocks);
  if (in_coalition.size() != blocks.size()) {
    throw Error(ErrorKind::InvalidArgument, "coalition flags do not match the feature count");
  }
  if (std::all_of(in_coalition.begin(), in_coalition.end(), [](bool v) { return v; })) return single_output(f, x);
  return coalition_values(f, x, {in_coalition}, background, blocks)[0];
}

ShapResult shap_exact(const PredictFn& f, std::span<const double> x, const BackgroundSet& background,
                      const FeatureBlocks& blocks, std::size_t exact_limit) {
  check_inputs(x, background, blocks);
  const std::size_t p = blocks.size();
  if (p > exact_limit) {
    throw Error(ErrorKind::TooManyFeatures, std::to_string(p) + " features exceed the exact limit of " +
                                                std::to_string(exact_limit) + "; use the permutation estimator");
  }
  if (p >= 63) throw Error(ErrorKind::TooManyFeatures, "exact enumeration needs fewer than 63 features");
  const std::size_t n_sets = std::size_t{1} << p;
  const std::size_t full = n_sets - 1;

  std::vector<std::vector<bool>> coalitions;
  coalitions.reserve(n_sets - 1);
  for (std::size_t mask = 0; mask < full; ++mask) {
    std::vector<bool> in(p);
    for (std::size_t j = 0; j < p; ++j) in[j] = (mask >> j) & 1U;
    coalitions.push_back(std::move(in));
  }
  std::vector<double> v = coalition_values(f, x, coalitions, background, blocks);
  ShapResult res;
  res.output = single_output(f, x);
  v.push_back(res.output);  // v[full]

  // weight[s] = s! (p - s - 1)! / p!
  std::vector<double> weight(p, 0.0);
  for (std::size_t s = 0; s < p; ++s) {
    double w = 1.0 / static_cast<double>(p);
    // 1 / (p * C(p-1, s))
    for (std::size_t t = 1; t <= s; ++t) w *= static_cast<double>(t) / static_cast<double>(p - t);
    weight[s] = w;
  }
  res.phi.assign(p, 0.0);
  res.std_err.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
      if (mask & bit) continue;
      acc += weight[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
    }
    res.phi[j] = acc;
  }
  res.base_value = v[0];
  return res;
}

ShapResult shap_permutation(const PredictFn& f, std::span<const double> x, const BackgroundSet& background,
                            const FeatureBlocks& blocks, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw Error(ErrorKind::InvalidSampleCount, "permutation estimator needs m >= 1");
  check_inputs(x, background, blocks);
  const std::size_t p = blocks.size();
  const std::size_t b = background.size();

  ShapResult res;
  res.output = single_output(f, x);
  res.base_value = coalition_values(f, x, {std::vector<bool>(p, false)}, background, blocks)[0];
  res.phi.assign(p, 0.0);
  res.std_err.assign(p, 0.0);
  if (p == 0) return res;

  std::vector<double> m2(p, 0.0);
  std::vector<std::size_t> order(p);
  const std::size_t inner = p - 1;  // prefixes strictly between the empty and the full coalition
  const std::size_t per_batch = inner == 0 ? m : std::max<std::size_t>(1, kMaxBatchRows / (inner * b));
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> orders;
  std::size_t count = 0;

  for (std::size_t start = 0; start < m; start += per_batch) {
    const std::size_t len = std::min(per_batch, m - start);
    orders.assign(len, {});
    for (auto& o : orders) {
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      o = order;
    }
    std::vector<double> preds;
    if (inner > 0) {
      Matrix comp(len * inner * b, x.size());
      std::vector<bool> in(p);
      for (std::size_t i = 0; i < len; ++i) {
        std::fill(in.begin(), in.end(), false);
        for (std::size_t k = 0; k < inner; ++k) {
          in[orders[i][k]] = true;
          write_composites(comp, (i * inner + k) * b, x, in, background, blocks);
        }
      }
      preds = f(comp);
    }
    for (std::size_t i = 0; i < len; ++i) {
      double prev = res.base_value;
      ++count;
      for (std::size_t k = 0; k < p; ++k) {
        const double cur = k + 1 == p ? res.output : block_mean(preds, (i * inner + k) * b, b);
        const std::size_t j = orders[i][k];
        const double delta = cur - prev;
        // Welford update of mean and sum of squared deviations.
        const double diff = delta - res.phi[j];
        res.phi[j] += diff / static_cast<double>(count);
        m2[j] += diff * (delta - res.phi[j]);
        prev = cur;
      }
    }
  }
  if (m > 1) {
    for (std::size_t j = 0; j < p; ++j) {
      res.std_err[j] = std::sqrt(m2[j] / static_cast<double>(m - 1)) / std::sqrt(static_cast<double>(m));
    }
  }
  return res;
}

std::string_view to_string(Estimator e) { return e == Estimator::Exact ? "exact" : "permutation"; }

Estimator estimator_from_string(std::string_view s) {
  if (s == "exact") return Estimator::Exact;
  if (s == "permutation") return Estimator::Permutation;
  throw Error(ErrorKind::InvalidConfig, "unknown estimator '" + std::string(s) + "' (expected exact or permutation)");
}

AttributionMatrix shap_batch(const PredictFn& f, const Matrix& X_explain, std::span<const std::size_t> instance_ids,
                             const BackgroundSet& background, const FeatureBlocks& blocks,
                             std::vector<std::string> features, const ShapSettings& settings) {
  const std::size_t n = X_explain.rows();
  const std::size_t p = blocks.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "nothing to explain");
  if (instance_ids.size() != n) throw Error(ErrorKind::InvalidArgument, "one instance id per explained row required");
  if (features.size() != p) throw Error(ErrorKind::InvalidArgument, "one feature label per block required");
  if (settings.estimator == Estimator::Exact && p > settings.exact_limit) {
    throw Error(ErrorKind::TooManyFeatures, std::to_string(p) + " features exceed the exact limit of " +
                                                std::to_string(settings.exact_limit) +
                                                "; use the permutation estimator");
  }
  if (settings.estimator == Estimator::Permutation && settings.samples_m == 0) {
    throw Error(ErrorKind::InvalidSampleCount, "permutation estimator needs m >= 1");
  }

  AttributionMatrix a;
  a.phi = Matrix(n, p);
  a.std_err = Matrix(n, p);
  a.instance_outputs.assign(n, 0.0);
  a.instance_ids.assign(instance_ids.begin(), instance_ids.end());
  a.features = std::move(features);
  a.estimator = settings.estimator;
  a.samples_m = settings.estimator == Estimator::Permutation ? settings.samples_m : 0;
  a.seed = settings.seed;
  a.background_size = background.size();

  std::vector<double> bases(n);
  parallel_for(n, settings.threads, [&](std::size_t i) {
    const auto x = X_explain.row(i);
    const ShapResult r =
        settings.estimator == Estimator::Exact
            ? shap_exact(f, x, background, blocks, settings.exact_limit)
            : shap_permutation(f, x, background, blocks, settings.samples_m,
                               derive_seed(settings.seed, {static_cast<std::uint64_t>(instance_ids[i])}));
    for (std::size_t j = 0; j < p; ++j) {
      a.phi(i, j) = r.phi[j];
      a.std_err(i, j) = r.std_err[j];
    }
    a.instance_outputs[i] = r.output;
    bases[i] = r.base_value;
  });
  a.base_value = bases[0];
  return a;
}

std::vector<double> mean_abs_phi(const AttributionMatrix& a) {
  std::vector<double> out(a.n_features(), 0.0);
  for (std::size_t i = 0; i < a.n_instances(); ++i) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += std::abs(a.phi(i, j));
  }
  for (double& v : out) v /= static_cast<double>(a.n_instances());
  return out;
}

std::vector<std::size_t> summary_order(const AttributionMatrix& a) {
  const auto m = mean_abs_phi(a);
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) { return m[l] > m[r]; });
  return idx;
}

}  // namespace credalens::explain
