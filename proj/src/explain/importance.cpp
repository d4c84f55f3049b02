#include <algorithm>
#include <numeric>

#include "credalens/automl.hpp"
#include "credalens/explain.hpp"

namespace credalens::explain {

std::vector<double> permutation_importance(const PredictFn& f, const Matrix& X, std::span<const int> y,
                                           const FeatureBlocks& blocks, std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw Error(ErrorKind::InvalidArgument, "permutation importance needs repeats >= 1");
  if (y.size() != X.rows()) throw Error(ErrorKind::InvalidArgument, "labels do not match the rows");
  const double baseline = automl::auc(y, f(X));
  const std::size_t n = X.rows();
  std::vector<double> out(blocks.size(), 0.0);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    double total = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(r)}));
      rng.shuffle(perm);
      Matrix shuffled = X;
      for (std::size_t i = 0; i < n; ++i) {
        for (auto c : blocks[j]) shuffled(i, c) = X(perm[i], c);
      }
      total += baseline - automl::auc(y, f(shuffled));
    }
    out[j] = total / static_cast<double>(repeats);
  }
  return out;
}

ImportanceHeatmap importance_heatmap(const std::vector<HeatmapModel>& models, const data::EncodedMatrix& val,
                                     std::size_t repeats, std::uint64_t seed, unsigned threads) {
  if (models.empty()) throw Error(ErrorKind::InvalidArgument, "heatmap needs at least one model");
  const std::size_t p = val.feature_names.size();
  const std::size_t k = models.size();
  const auto blocks = val.feature_blocks();

  ImportanceHeatmap h;
  h.raw = Matrix(p, k);
  h.method.assign(k, "");
  parallel_for(k, threads, [&](std::size_t m) {
    const HeatmapModel& model = models[m];
    if (!model.native.empty()) {
      h.method[m] = "native";
      for (std::size_t j = 0; j < p; ++j) {
        const auto it = model.native.find(val.feature_names[j]);
        h.raw(j, m) = it == model.native.end() ? 0.0 : it->second;
      }
    } else {
      h.method[m] = "permutation";
      const auto imp = permutation_importance(model.predict, val.values, val.target, blocks, repeats,
                                              derive_seed(seed, {static_cast<std::uint64_t>(m)}));
      for (std::size_t j = 0; j < p; ++j) h.raw(j, m) = imp[j];
    }
  });

  Matrix scaled(p, k);
  for (std::size_t m = 0; m < k; ++m) {
    double mx = 0.0;
    for (std::size_t j = 0; j < p; ++j) mx = std::max(mx, std::max(h.raw(j, m), 0.0));
    for (std::size_t j = 0; j < p; ++j) scaled(j, m) = mx > 0.0 ? std::max(h.raw(j, m), 0.0) / mx : 0.0;
  }
  std::vector<double> row_mean(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t m = 0; m < k; ++m) row_mean[j] += scaled(j, m);
    row_mean[j] /= static_cast<double>(k);
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row_mean[a] > row_mean[b]; });

  h.values = Matrix(p, k);
  Matrix raw_sorted(p, k);
  for (std::size_t r = 0; r < p; ++r) {
    h.features.push_back(val.feature_labels[order[r]]);
    for (std::size_t m = 0; m < k; ++m) {
      h.values(r, m) = scaled(order[r], m);
      raw_sorted(r, m) = h.raw(order[r], m);
    }
  }
  h.raw = std::move(raw_sorted);
  for (const auto& m : models) h.model_ids.push_back(m.id);
  return h;
}

}  // namespace credalens::explain
