#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "credalens/data.hpp"
#include "credalens/learners.hpp"
#include "json.hpp"

namespace credalens::automl {

using learners::FittedModel;
using learners::ModelFamily;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class SortMetric { AUC, LogLoss };
std::string_view to_string(SortMetric m);
SortMetric sort_metric_from_string(std::string_view s);

// Rank statistic with ties counted one half. Throws SingleClass.
double auc(std::span<const int> labels, std::span<const double> scores);
double log_loss(std::span<const int> labels, std::span<const double> scores, double eps = 1e-15);
double metric_value(SortMetric m, std::span<const int> labels, std::span<const double> scores);
// True when metric value a is strictly better than b.
bool better(SortMetric m, double a, double b);

// ---------------------------------------------------------------------------
// Cross-validation and stacking
// ---------------------------------------------------------------------------

struct FoldAssignment {
  std::vector<int> fold_of;
  int k = 0;
  std::uint64_t seed = 0;
};

// Stratified round-robin after a seeded per-class shuffle. Throws TooFewRows
// when a class has fewer than k rows.
FoldAssignment make_folds(std::span<const int> labels, int k, std::uint64_t seed);

struct OofResult {
  std::vector<double> oof;
  FittedModel final_model;
  // Bookkeeping for the hygiene check: which fold model predicted each row,
  // and which rows each fold model was trained on.
  std::vector<int> predicted_by;
  std::vector<std::vector<std::size_t>> fold_train_rows;
};

// Fold f is fit with seed derive_seed(model_seed, {f}); the refit on all rows
// uses derive_seed(model_seed, {kAllFolds}).
inline constexpr std::uint64_t kAllFolds = 0xa11f01d5ULL;

OofResult oof_predictions(ModelFamily family, const learners::Hyperparams& params, const Matrix& X,
                          std::span<const int> y, const FoldAssignment& folds,
                          std::uint64_t model_seed, const std::string& id, unsigned threads = 1);

enum class EnsembleKind { AllModels, BestOfFamily };
std::string_view to_string(EnsembleKind k);
std::string ensemble_id(EnsembleKind k);

struct StackedModel {
  std::string id;
  EnsembleKind kind = EnsembleKind::AllModels;
  std::vector<std::string> member_ids;
  learners::GlmModel meta;  // non-negative, one coefficient per member

  // Meta applied to an n x members matrix of member probabilities.
  std::vector<double> predict_from_members(const Matrix& member_probs) const;
};

StackedModel fit_stack(const Matrix& oof_matrix, std::span<const int> y,
                       std::vector<std::string> member_ids, EnsembleKind kind);

// A stacked model bundled with the fitted members it needs for prediction.
struct StackedEnsemble {
  StackedModel stack;
  std::vector<FittedModel> members;  // aligned with stack.member_ids

  std::vector<double> predict(const Matrix& X) const;
};

// Anything that can sit on the leaderboard and be explained.
using AnyModel = std::variant<FittedModel, StackedEnsemble>;

const std::string& model_id(const AnyModel& m);
std::string model_kind(const AnyModel& m);
std::size_t model_width(const AnyModel& m);
std::vector<double> predict(const AnyModel& m, const Matrix& X);

nlohmann::json any_model_to_json(const AnyModel& m);
AnyModel any_model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const AnyModel& m);
AnyModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Leaderboard
// ---------------------------------------------------------------------------

struct LeaderboardEntry {
  std::string model_id;
  std::string kind;  // family name or StackedEnsemble_<kind>
  double auc = 0.0;
  double logloss = 0.0;
  int rank = 0;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;          // failure message when status is "failed"

  bool ok() const noexcept { return status == "ok"; }
};

struct Leaderboard {
  std::vector<LeaderboardEntry> entries;
  SortMetric sort_metric = SortMetric::AUC;

  const LeaderboardEntry& leader() const;
};

// Sort by the metric, then the other metric, then model id. Failed entries
// follow all successful ones, ordered by id.
Leaderboard rank_leaderboard(std::vector<LeaderboardEntry> entries, SortMetric sort_metric);

std::string leaderboard_csv(const Leaderboard& board);

// ---------------------------------------------------------------------------
// The AutoML run
// ---------------------------------------------------------------------------

using Grid = std::vector<learners::Hyperparams>;

// Family default first, then a handful of conventional variations.
std::map<ModelFamily, Grid> default_grids();

struct AutoMLConfig {
  int max_models = 20;
  SortMetric sort_metric = SortMetric::AUC;
  int cv_folds = 5;
  std::uint64_t master_seed = 42;
  std::map<ModelFamily, Grid> grids = default_grids();
  int explain_sample = 500;
  int background_sample = 256;
  unsigned threads = 1;

  // Throws InvalidConfig.
  void validate() const;
};

// Which grid entry the i-th model uses: families round-robin; draw 0 of a
// family is its first grid entry, later draws walk a seeded permutation of
// the rest and cycle once it is exhausted.
struct ModelPlan {
  std::string id;
  ModelFamily family;
  learners::Hyperparams params;
  std::size_t grid_index = 0;
  std::uint64_t seed = 0;
};
std::vector<ModelPlan> plan_models(const AutoMLConfig& config);

struct BaseResult {
  ModelPlan plan;
  bool ok = false;
  std::string error;
  FittedModel model;
  std::vector<double> oof;
  std::vector<double> test_pred;
  double cv_auc = 0.0;
  double cv_logloss = 0.0;
  double seconds = 0.0;  // summed wall-clock of its fits; not part of any deterministic output
};

struct AutoMLResult {
  Leaderboard leaderboard;
  std::vector<BaseResult> base;
  std::vector<StackedEnsemble> ensembles;  // AllModels, BestOfFamily
  std::map<std::string, std::vector<double>> test_predictions;  // id -> probabilities
  FoldAssignment folds;

  // The model at rank 1 (base or ensemble).
  AnyModel leader() const;
  std::optional<AnyModel> find(const std::string& id) const;
};

AutoMLResult run_automl(const data::EncodedMatrix& train, const data::EncodedMatrix& test,
                        const AutoMLConfig& config);

}  // namespace credalens::automl
