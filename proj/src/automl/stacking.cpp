#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "credalens/automl.hpp"
#include "credalens/model_io.hpp"

namespace credalens::automl {

FoldAssignment make_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "cv_folds must be >= 2");
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.fold_of.assign(labels.size(), -1);
  std::size_t start = 0;
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) rows.push_back(i);
    }
    if (rows.size() < static_cast<std::size_t>(k)) {
      throw Error(ErrorKind::TooFewRows, "class " + std::to_string(cls) + " has " + std::to_string(rows.size()) +
                                             " rows, fewer than " + std::to_string(k) + " folds");
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(cls)}));
    rng.shuffle(rows);
    // Class 1 continues where class 0 stopped so total fold sizes stay within one.
    for (std::size_t j = 0; j < rows.size(); ++j) {
      fa.fold_of[rows[j]] = static_cast<int>((start + j) % static_cast<std::size_t>(k));
    }
    start = (start + rows.size()) % static_cast<std::size_t>(k);
  }
  return fa;
}

OofResult oof_predictions(ModelFamily family, const learners::Hyperparams& params, const Matrix& X,
                          std::span<const int> y, const FoldAssignment& folds,
                          std::uint64_t model_seed, const std::string& id, unsigned threads) {
  const std::size_t n = X.rows();
  if (folds.fold_of.size() != n || y.size() != n) {
    throw Error(ErrorKind::InvalidArgument, "fold assignment does not cover the training rows");
  }
  OofResult res;
  res.oof.assign(n, std::numeric_limits<double>::quiet_NaN());
  res.predicted_by.assign(n, -1);
  res.fold_train_rows.resize(static_cast<std::size_t>(folds.k));

  const auto k = static_cast<std::size_t>(folds.k);
  parallel_for(k + 1, threads, [&](std::size_t unit) {
    if (unit == k) {
      try {
        res.final_model = learners::fit_model(family, params, X, y, derive_seed(model_seed, {kAllFolds}), id, 1);
      } catch (const Error& e) {
        throw Error(e.kind(), "refit on all rows: " + std::string(e.what()));
      }
      return;
    }
    const int f = static_cast<int>(unit);
    std::vector<std::size_t> train_rows, hold_rows;
    for (std::size_t i = 0; i < n; ++i) (folds.fold_of[i] == f ? hold_rows : train_rows).push_back(i);
    try {
      const Matrix Xf = X.take_rows(train_rows);
      std::vector<int> yf(train_rows.size());
      for (std::size_t i = 0; i < train_rows.size(); ++i) yf[i] = y[train_rows[i]];
      const FittedModel m = learners::fit_model(family, params, Xf, yf, derive_seed(model_seed, {unit}), id, 1);
      const auto pred = learners::predict_proba(m, X.take_rows(hold_rows));
      for (std::size_t i = 0; i < hold_rows.size(); ++i) {
        res.oof[hold_rows[i]] = pred[i];
        res.predicted_by[hold_rows[i]] = f;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
    res.fold_train_rows[unit] = std::move(train_rows);
  });
  return res;
}

std::string_view to_string(EnsembleKind k) { return k == EnsembleKind::AllModels ? "AllModels" : "BestOfFamily"; }

std::string ensemble_id(EnsembleKind k) { return "StackedEnsemble_" + std::string(to_string(k)); }

std::vector<double> StackedModel::predict_from_members(const Matrix& member_probs) const {
  if (member_probs.cols() != member_ids.size()) {
    throw Error(ErrorKind::WidthMismatch, "stacked model expects " + std::to_string(member_ids.size()) +
                                              " member columns");
  }
  std::vector<double> out(member_probs.rows());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = std::clamp(sigmoid(meta.linear_predictor(member_probs.row(r))), 0.0, 1.0);
  }
  return out;
}

StackedModel fit_stack(const Matrix& oof_matrix, std::span<const int> y, std::vector<std::string> member_ids,
                       EnsembleKind kind) {
  if (member_ids.empty() || oof_matrix.cols() != member_ids.size()) {
    throw Error(ErrorKind::InvalidArgument, "fit_stack needs one oof column per member (and at least one)");
  }
  learners::GlmParams p;
  p.non_negative = true;
  p.standardize = false;
  p.l2 = 1e-6;
  p.max_iter = 200;
  p.tol = 1e-10;
  StackedModel s;
  s.id = ensemble_id(kind);
  s.kind = kind;
  s.member_ids = std::move(member_ids);
  s.meta = learners::fit_glm(oof_matrix, y, p);
  return s;
}

std::vector<double> StackedEnsemble::predict(const Matrix& X) const {
  Matrix probs(X.rows(), members.size(), 0.0);
  for (std::size_t c = 0; c < members.size(); ++c) {
    // Members with zero weight cannot move the meta output; skip their cost.
    if (stack.meta.coefficients[c] == 0.0) continue;
    const auto p = learners::predict_proba(members[c], X);
    for (std::size_t r = 0; r < X.rows(); ++r) probs(r, c) = p[r];
  }
  return stack.predict_from_members(probs);
}

// ---------------------------------------------------------------------------
// AnyModel
// ---------------------------------------------------------------------------

const std::string& model_id(const AnyModel& m) {
  return std::visit(
      [](const auto& v) -> const std::string& {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, FittedModel>) {
          return v.id;
        } else {
          return v.stack.id;
        }
      },
      m);
}

std::string model_kind(const AnyModel& m) {
  if (const auto* f = std::get_if<FittedModel>(&m)) return std::string(learners::to_string(f->family));
  return ensemble_id(std::get<StackedEnsemble>(m).stack.kind);
}

std::size_t model_width(const AnyModel& m) {
  if (const auto* f = std::get_if<FittedModel>(&m)) return f->width;
  const auto& e = std::get<StackedEnsemble>(m);
  return e.members.empty() ? 0 : e.members.front().width;
}

std::vector<double> predict(const AnyModel& m, const Matrix& X) {
  if (const auto* f = std::get_if<FittedModel>(&m)) return learners::predict_proba(*f, X);
  const auto& e = std::get<StackedEnsemble>(m);
  if (X.cols() != model_width(m)) {
    throw Error(ErrorKind::WidthMismatch, "model '" + e.stack.id + "' expects width " +
                                              std::to_string(model_width(m)) + ", got " + std::to_string(X.cols()));
  }
  return e.predict(X);
}

nlohmann::json any_model_to_json(const AnyModel& m) {
  if (const auto* f = std::get_if<FittedModel>(&m)) {
    nlohmann::json j = learners::model_to_json(*f);
    j["type"] = "base";
    return j;
  }
  const auto& e = std::get<StackedEnsemble>(m);
  nlohmann::json members = nlohmann::json::array();
  for (const auto& mem : e.members) members.push_back(learners::model_to_json(mem));
  return {{"type", "stacked"},
          {"id", e.stack.id},
          {"kind", std::string(to_string(e.stack.kind))},
          {"member_ids", e.stack.member_ids},
          {"meta", learners::glm_to_json(e.stack.meta)},
          {"members", members}};
}

AnyModel any_model_from_json(const nlohmann::json& j) {
  try {
    const std::string type = j.value("type", "base");
    if (type == "base") return learners::model_from_json(j);
    if (type != "stacked") throw Error(ErrorKind::InvalidArgument, "unknown model type '" + type + "'");
    StackedEnsemble e;
    e.stack.id = j.at("id").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "AllModels") {
      e.stack.kind = EnsembleKind::AllModels;
    } else if (kind == "BestOfFamily") {
      e.stack.kind = EnsembleKind::BestOfFamily;
    } else {
      throw Error(ErrorKind::InvalidArgument, "unknown ensemble kind '" + kind + "'");
    }
    e.stack.member_ids = j.at("member_ids").get<std::vector<std::string>>();
    e.stack.meta = learners::glm_from_json(j.at("meta"));
    for (const auto& mj : j.at("members")) e.members.push_back(learners::model_from_json(mj));
    if (e.members.size() != e.stack.member_ids.size() || e.stack.meta.width() != e.members.size()) {
      throw Error(ErrorKind::InvalidArgument, "stacked model members do not match its meta-learner");
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed model JSON: ") + ex.what());
  }
}

void save_model(const std::filesystem::path& path, const AnyModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << any_model_to_json(m).dump() << '\n';
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

AnyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open model file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::InvalidArgument, "model file " + path.string() + " is not JSON: " + ex.what());
  }
  return any_model_from_json(j);
}

}  // namespace credalens::automl
