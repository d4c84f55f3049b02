#include <algorithm>
#include <cmath>

#include "credalens/learners.hpp"

namespace credalens::learners {

std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::GLM: return "GLM";
    case ModelFamily::DRF: return "DRF";
    case ModelFamily::XRT: return "XRT";
    case ModelFamily::GBM: return "GBM";
    case ModelFamily::DL: return "DL";
  }
  return "?";
}

ModelFamily family_from_string(std::string_view s) {
  for (ModelFamily f : kAllFamilies) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown model family '" + std::string(s) + "'");
}

Hyperparams default_params(ModelFamily family) {
  switch (family) {
    case ModelFamily::GLM: return GlmParams{};
    case ModelFamily::DRF: return ForestParams{};
    case ModelFamily::XRT: {
      ForestParams p;
      p.min_leaf = 5;
      return p;
    }
    case ModelFamily::GBM: return GbmParams{};
    case ModelFamily::DL: return MlpParams{};
  }
  return GlmParams{};
}

namespace {

template <typename T>
const T& params_as(const Hyperparams& hp, ModelFamily family) {
  if (const T* p = std::get_if<T>(&hp)) return *p;
  throw Error(ErrorKind::InvalidArgument,
              "hyperparameters do not match family " + std::string(to_string(family)));
}

}  // namespace

FittedModel fit_model(ModelFamily family, const Hyperparams& params, const Matrix& X,
                      std::span<const int> y, std::uint64_t seed, std::string id,
                      unsigned threads) {
  FittedModel m;
  m.id = std::move(id);
  m.family = family;
  m.hyperparams = params;
  m.train_seed = seed;
  m.width = X.cols();
  switch (family) {
    case ModelFamily::GLM:
      m.payload = fit_glm(X, y, params_as<GlmParams>(params, family));
      break;
    case ModelFamily::DRF:
      m.payload = fit_forest(X, y, ForestMode::DRF, params_as<ForestParams>(params, family), seed, threads);
      break;
    case ModelFamily::XRT:
      m.payload = fit_forest(X, y, ForestMode::XRT, params_as<ForestParams>(params, family), seed, threads);
      break;
    case ModelFamily::GBM:
      m.payload = fit_gbm(X, y, params_as<GbmParams>(params, family), seed);
      break;
    case ModelFamily::DL:
      m.payload = fit_mlp(X, y, params_as<MlpParams>(params, family), seed);
      break;
  }
  return m;
}

std::vector<double> predict_proba(const FittedModel& model, const Matrix& X) {
  if (X.cols() != model.width) {
    throw Error(ErrorKind::WidthMismatch, "model '" + model.id + "' expects width " +
                                              std::to_string(model.width) + ", got " +
                                              std::to_string(X.cols()));
  }
  std::vector<double> out(X.rows());
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          for (std::size_t r = 0; r < X.rows(); ++r) out[r] = sigmoid(p.linear_predictor(X.row(r)));
        } else {
          out = p.predict(X);
        }
      },
      model.payload);
  for (double& v : out) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "model '" + model.id + "' produced a non-finite prediction");
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

namespace {

void add_gains(const std::vector<DecisionTree>& trees, std::vector<double>& out) {
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) out[static_cast<std::size_t>(n.split_col)] += n.gain;
    }
  }
}

}  // namespace

std::vector<double> native_importance_columns(const FittedModel& model) {
  std::vector<double> out;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          out.resize(p.coefficients.size());
          for (std::size_t c = 0; c < out.size(); ++c) out[c] = std::abs(p.coefficients[c]);
        } else if constexpr (std::is_same_v<T, ForestModel> || std::is_same_v<T, GbmModel>) {
          out.assign(p.width, 0.0);
          add_gains(p.trees, out);
        }
      },
      model.payload);
  return out;
}

std::map<std::string, double> native_importance(const FittedModel& model,
                                                std::span<const std::size_t> source_of,
                                                std::span<const std::string> feature_names) {
  std::map<std::string, double> out;
  const auto cols = native_importance_columns(model);
  if (cols.empty()) return out;
  if (cols.size() != source_of.size()) {
    throw Error(ErrorKind::WidthMismatch, "source_of does not match model width");
  }
  for (const auto& name : feature_names) out[name] = 0.0;
  for (std::size_t c = 0; c < cols.size(); ++c) out[feature_names[source_of[c]]] += cols[c];
  return out;
}

}  // namespace credalens::learners
