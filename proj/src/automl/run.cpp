#include <chrono>
#include <cmath>
#include <limits>

#include "credalens/automl.hpp"

namespace credalens::automl {

using learners::ForestParams;
using learners::GbmParams;
using learners::GlmParams;
using learners::MlpParams;

namespace {

constexpr std::uint64_t kFoldStream = 0x666f6c6473ULL;
constexpr std::uint64_t kGridStream = 0x67726964ULL;
constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;

GlmParams glm(double l2) {
  GlmParams p;
  p.l2 = l2;
  return p;
}

ForestParams forest(int n_trees, int max_depth, int min_leaf) {
  ForestParams p;
  p.n_trees = n_trees;
  p.max_depth = max_depth;
  p.min_leaf = min_leaf;
  return p;
}

GbmParams gbm(int rounds, double lr, int depth, int min_leaf, double rows, double cols) {
  return GbmParams{rounds, lr, depth, min_leaf, rows, cols};
}

MlpParams mlp(std::vector<int> hidden, int epochs, int batch, double lr, double l2) {
  return MlpParams{std::move(hidden), epochs, batch, lr, l2};
}

std::size_t family_index(ModelFamily f) {
  for (std::size_t i = 0; i < std::size(learners::kAllFamilies); ++i) {
    if (learners::kAllFamilies[i] == f) return i;
  }
  return 0;
}

}  // namespace

std::map<ModelFamily, Grid> default_grids() {
  std::map<ModelFamily, Grid> g;
  g[ModelFamily::GLM] = {glm(1e-4), glm(1e-3), glm(1e-2), glm(1e-1), glm(1.0)};
  g[ModelFamily::DRF] = {forest(200, 20, 1), forest(200, 10, 1), forest(200, 20, 5), forest(300, 16, 3)};
  g[ModelFamily::XRT] = {forest(200, 20, 5), forest(200, 12, 5), forest(200, 20, 10), forest(300, 20, 2)};
  g[ModelFamily::GBM] = {gbm(300, 0.1, 5, 10, 0.8, 0.8), gbm(200, 0.05, 3, 10, 0.8, 0.8),
                         gbm(150, 0.1, 3, 20, 0.7, 0.7), gbm(400, 0.05, 4, 10, 0.8, 0.8),
                         gbm(100, 0.2, 6, 20, 0.8, 0.8)};
  g[ModelFamily::DL] = {mlp({32, 32}, 50, 64, 0.01, 1e-4), mlp({64}, 50, 64, 0.01, 1e-4),
                        mlp({16, 16}, 60, 32, 0.005, 1e-3), mlp({32, 32}, 30, 64, 0.01, 1e-2)};
  return g;
}

void AutoMLConfig::validate() const {
  if (max_models < 5) {
    throw Error(ErrorKind::InvalidConfig, "max_models must be >= 5 (one per family), got " + std::to_string(max_models));
  }
  if (cv_folds < 2) throw Error(ErrorKind::InvalidConfig, "cv_folds must be >= 2, got " + std::to_string(cv_folds));
  if (explain_sample < 1) throw Error(ErrorKind::InvalidConfig, "explain_sample must be >= 1");
  if (background_sample < 1) throw Error(ErrorKind::InvalidConfig, "background_sample must be >= 1");
  for (ModelFamily f : learners::kAllFamilies) {
    const auto it = grids.find(f);
    if (it == grids.end() || it->second.empty()) {
      throw Error(ErrorKind::InvalidConfig, "empty hyperparameter grid for " + std::string(learners::to_string(f)));
    }
    for (const auto& hp : it->second) {
      const bool match = std::visit(
          [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            switch (f) {
              case ModelFamily::GLM: return std::is_same_v<T, GlmParams>;
              case ModelFamily::DRF:
              case ModelFamily::XRT: return std::is_same_v<T, ForestParams>;
              case ModelFamily::GBM: return std::is_same_v<T, GbmParams>;
              case ModelFamily::DL: return std::is_same_v<T, MlpParams>;
            }
            return false;
          },
          hp);
      if (!match) {
        throw Error(ErrorKind::InvalidConfig, "grid entry type does not match family " + std::string(learners::to_string(f)));
      }
    }
  }
}

std::vector<ModelPlan> plan_models(const AutoMLConfig& config) {
  const auto& fams = learners::kAllFamilies;
  std::map<ModelFamily, std::vector<std::size_t>> order;
  for (ModelFamily f : fams) {
    const std::size_t g = config.grids.at(f).size();
    std::vector<std::size_t> rest;
    for (std::size_t i = 1; i < g; ++i) rest.push_back(i);
    Rng rng(derive_seed(config.master_seed, {kGridStream, family_index(f)}));
    rng.shuffle(rest);
    order[f] = std::move(rest);
  }
  std::vector<ModelPlan> plans;
  std::map<ModelFamily, std::size_t> draws;
  for (int i = 0; i < config.max_models; ++i) {
    const ModelFamily f = fams[static_cast<std::size_t>(i) % std::size(fams)];
    const std::size_t j = draws[f]++;
    const auto& rest = order[f];
    const std::size_t gi = (j == 0 || rest.empty()) ? 0 : rest[(j - 1) % rest.size()];
    ModelPlan p;
    p.id = std::string(learners::to_string(f)) + "_" + std::to_string(i + 1);
    p.family = f;
    p.grid_index = gi;
    p.params = config.grids.at(f)[gi];
    p.seed = derive_seed(config.master_seed, {kModelStream, static_cast<std::uint64_t>(i)});
    plans.push_back(std::move(p));
  }
  return plans;
}

AnyModel AutoMLResult::leader() const {
  auto m = find(leaderboard.leader().model_id);
  if (!m) throw Error(ErrorKind::InvalidArgument, "leader model not found");
  return *m;
}

std::optional<AnyModel> AutoMLResult::find(const std::string& id) const {
  for (const auto& b : base) {
    if (b.ok && b.plan.id == id) return AnyModel{b.model};
  }
  for (const auto& e : ensembles) {
    if (e.stack.id == id) return AnyModel{e};
  }
  return std::nullopt;
}

AutoMLResult run_automl(const data::EncodedMatrix& train, const data::EncodedMatrix& test,
                        const AutoMLConfig& config) {
  config.validate();
  if (train.width() != test.width()) {
    throw Error(ErrorKind::WidthMismatch, "train and test encodings differ in width");
  }
  const Matrix& X = train.values;
  const std::vector<int>& y = train.target;
  const std::size_t n = X.rows();

  AutoMLResult res;
  res.folds = make_folds(y, config.cv_folds, derive_seed(config.master_seed, {kFoldStream}));
  const auto plans = plan_models(config);
  const std::size_t n_models = plans.size();
  const auto k = static_cast<std::size_t>(config.cv_folds);
  const std::size_t units_per_model = k + 1;

  res.base.resize(n_models);
  std::vector<std::string> unit_error(n_models * units_per_model);
  std::vector<double> unit_seconds(n_models * units_per_model, 0.0);
  for (std::size_t i = 0; i < n_models; ++i) {
    res.base[i].plan = plans[i];
    res.base[i].oof.assign(n, std::numeric_limits<double>::quiet_NaN());
  }

  std::vector<std::vector<std::size_t>> fold_train(k), fold_hold(k);
  for (std::size_t r = 0; r < n; ++r) {
    const auto f = static_cast<std::size_t>(res.folds.fold_of[r]);
    fold_hold[f].push_back(r);
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) fold_train[g].push_back(r);
    }
  }
  std::vector<Matrix> X_train(k), X_hold(k);
  std::vector<std::vector<int>> y_train(k);
  for (std::size_t f = 0; f < k; ++f) {
    X_train[f] = X.take_rows(fold_train[f]);
    X_hold[f] = X.take_rows(fold_hold[f]);
    for (auto r : fold_train[f]) y_train[f].push_back(y[r]);
  }

  // Every (model, fold) fit and every refit is an independent work unit with
  // its own derived seed, so the result does not depend on the worker count.
  parallel_for(n_models * units_per_model, config.threads, [&](std::size_t u) {
    const std::size_t i = u / units_per_model;
    const std::size_t f = u % units_per_model;
    const ModelPlan& plan = plans[i];
    BaseResult& br = res.base[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (f == k) {
        br.model = learners::fit_model(plan.family, plan.params, X, y, derive_seed(plan.seed, {kAllFolds}), plan.id, 1);
        br.test_pred = learners::predict_proba(br.model, test.values);
      } else {
        const auto m = learners::fit_model(plan.family, plan.params, X_train[f], y_train[f],
                                           derive_seed(plan.seed, {f}), plan.id, 1);
        const auto pred = learners::predict_proba(m, X_hold[f]);
        for (std::size_t j = 0; j < pred.size(); ++j) br.oof[fold_hold[f][j]] = pred[j];
      }
    } catch (const std::exception& e) {
      unit_error[u] = (f == k ? std::string("refit on all rows: ") : "fold " + std::to_string(f) + ": ") + e.what();
    }
    unit_seconds[u] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  for (std::size_t i = 0; i < n_models; ++i) {
    BaseResult& br = res.base[i];
    br.ok = true;
    for (std::size_t f = 0; f < units_per_model; ++f) {
      br.seconds += unit_seconds[i * units_per_model + f];
      if (br.ok && !unit_error[i * units_per_model + f].empty()) {
        br.ok = false;
        br.error = unit_error[i * units_per_model + f];
      }
    }
    if (br.ok) {
      try {
        br.cv_auc = auc(y, br.oof);
        br.cv_logloss = log_loss(y, br.oof);
      } catch (const std::exception& e) {
        br.ok = false;
        br.error = std::string("cross-validation metrics: ") + e.what();
      }
    }
    if (!br.ok) {
      br.model = FittedModel{};
      br.oof.clear();
      br.test_pred.clear();
    }
  }

  std::vector<std::size_t> ok_models;
  for (std::size_t i = 0; i < n_models; ++i) {
    if (res.base[i].ok) ok_models.push_back(i);
  }
  if (ok_models.empty()) throw Error(ErrorKind::InvalidArgument, "every base model failed; nothing to stack");

  const auto cv_metric = [&](const BaseResult& b) {
    return config.sort_metric == SortMetric::AUC ? b.cv_auc : b.cv_logloss;
  };
  std::vector<std::size_t> best_of_family;
  for (ModelFamily fam : learners::kAllFamilies) {
    std::optional<std::size_t> best;
    for (std::size_t i : ok_models) {
      const BaseResult& b = res.base[i];
      if (b.plan.family != fam) continue;
      if (!best || better(config.sort_metric, cv_metric(b), cv_metric(res.base[*best])) ||
          (cv_metric(b) == cv_metric(res.base[*best]) && b.plan.id < res.base[*best].plan.id)) {
        best = i;
      }
    }
    if (best) best_of_family.push_back(*best);
  }

  std::vector<LeaderboardEntry> entries;
  for (const auto& b : res.base) {
    LeaderboardEntry e;
    e.model_id = b.plan.id;
    e.kind = std::string(learners::to_string(b.plan.family));
    if (b.ok) {
      e.auc = auc(test.target, b.test_pred);
      e.logloss = log_loss(test.target, b.test_pred);
      res.test_predictions[b.plan.id] = b.test_pred;
    } else {
      e.status = "failed";
      e.error = b.error;
    }
    entries.push_back(std::move(e));
  }

  for (EnsembleKind kind : {EnsembleKind::AllModels, EnsembleKind::BestOfFamily}) {
    const auto& members = kind == EnsembleKind::AllModels ? ok_models : best_of_family;
    Matrix oof(n, members.size()), test_probs(test.n_rows(), members.size());
    std::vector<std::string> ids;
    StackedEnsemble ens;
    for (std::size_t c = 0; c < members.size(); ++c) {
      const BaseResult& b = res.base[members[c]];
      ids.push_back(b.plan.id);
      ens.members.push_back(b.model);
      for (std::size_t r = 0; r < n; ++r) oof(r, c) = b.oof[r];
      for (std::size_t r = 0; r < test.n_rows(); ++r) test_probs(r, c) = b.test_pred[r];
    }
    ens.stack = fit_stack(oof, y, std::move(ids), kind);
    const auto pred = ens.stack.predict_from_members(test_probs);
    LeaderboardEntry e;
    e.model_id = ens.stack.id;
    e.kind = ens.stack.id;
    e.auc = auc(test.target, pred);
    e.logloss = log_loss(test.target, pred);
    entries.push_back(std::move(e));
    res.test_predictions[ens.stack.id] = pred;
    res.ensembles.push_back(std::move(ens));
  }

  res.leaderboard = rank_leaderboard(std::move(entries), config.sort_metric);
  return res;
}

}  // namespace credalens::automl
