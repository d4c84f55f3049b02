#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "credalens/automl.hpp"
#include "credalens/explain.hpp"
#include "json.hpp"

namespace credalens::config {

// Reads the flat TOML subset used by run configs: `key = value` lines with
// basic or literal strings, integers, floats, booleans and single-line
// arrays; `#` comments. Tables and repeated keys are rejected with
// InvalidConfig naming the line.
nlohmann::ordered_json parse_flat_toml(std::string_view text);

// Every key a run config accepts, with the fallback used when it is absent.
//
//   dataset, schema        paths, relative to the config file
//   delimiter              one character, e.g. "," or " " or "\t"
//   seed                   master seed
//   train_fraction         share of rows in the training split, (0, 1)
//   balance, stratify      random under-sampling; class-stratified split
//   max_models, cv_folds   AutoML budget (>= 5) and folds (>= 2)
//   sort_metric            "auc" or "logloss"
//   estimator, samples_m, exact_limit, explain_sample, background_sample
//   importance_repeats     shuffles per feature for permutation importance
//   out_dir                output directory, relative to the working directory
//   <family>.<param>       fixes a hyperparameter across that family's grid;
//                          family is glm, drf, xrt, gbm or dl
struct RunConfig {
  std::filesystem::path base_dir;
  std::string dataset;
  std::string schema;
  std::string delimiter = ",";
  std::uint64_t seed = 42;
  double train_fraction = 0.8;
  bool balance = true;
  bool stratify = true;
  int max_models = 20;
  int cv_folds = 5;
  automl::SortMetric sort_metric = automl::SortMetric::AUC;
  explain::Estimator estimator = explain::Estimator::Permutation;
  std::size_t samples_m = 2000;
  std::size_t exact_limit = explain::kDefaultExactLimit;
  int explain_sample = 500;
  int background_sample = 256;
  std::size_t importance_repeats = 3;
  std::string out_dir = "credalens_out";
  nlohmann::ordered_json overrides = nlohmann::ordered_json::object();  // "<family>.<param>" -> value

  std::filesystem::path dataset_path() const;
  std::filesystem::path schema_path() const;
  char delimiter_char() const;

  // Throws InvalidConfig.
  void validate() const;

  // Grids with overrides applied.
  automl::AutoMLConfig automl_config(unsigned threads) const;

  // Every setting that shapes results; out_dir is left out so runs written
  // to different directories share one manifest.
  nlohmann::ordered_json echo() const;
};

RunConfig parse_run_config(std::string_view toml_text, std::filesystem::path base_dir);

// Throws MissingFile when the file does not exist.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace credalens::config
