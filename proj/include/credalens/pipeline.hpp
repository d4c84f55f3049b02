#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "credalens/automl.hpp"
#include "credalens/config.hpp"
#include "credalens/data.hpp"
#include "credalens/explain.hpp"
#include "credalens/report.hpp"

namespace credalens::pipeline {

struct PreparedData {
  data::Frame dataset;   // as loaded
  data::Frame balanced;  // after under-sampling; the dataset itself when balancing is off
  data::Frame train;
  data::Frame test;
  data::EncodedMatrix train_enc;
  data::EncodedMatrix test_enc;
};

// Load, balance, split and encode, all seeded from config.seed.
PreparedData prepare_data(const config::RunConfig& config);

// Class counts before and after balancing and per split.
nlohmann::ordered_json split_report(const PreparedData& d, const config::RunConfig& config);

std::vector<report::DatasetFingerprint> fingerprints(const PreparedData& d);

// Attributions for a seeded sample of test rows against a seeded training
// background. Throws TooManyFeatures for the exact estimator past exact_limit.
report::ShapTable explain_model(const automl::AnyModel& model, const PreparedData& d,
                                const config::RunConfig& config, unsigned threads);

// Heatmap over `models` (leaderboard order) on the test split.
explain::ImportanceHeatmap importance_for(const std::vector<automl::AnyModel>& models, const PreparedData& d,
                                          const config::RunConfig& config, unsigned threads);

struct PrepareOutcome {
  nlohmann::ordered_json report;
  std::vector<std::string> files;
};

// train.csv, test.csv and split_report.json in out_dir; no training.
PrepareOutcome cmd_prepare(const config::RunConfig& config, const std::filesystem::path& out_dir);

struct RunOutcome {
  automl::AutoMLResult automl;
  report::ShapTable shap;
  explain::ImportanceHeatmap heatmap;
  std::vector<std::string> files;  // everything listed in manifest.json
};

// data -> automl -> explain -> report. Writes the manifest-covered artifacts,
// leader_model.json, and timings.json (wall-clock, outside the manifest).
RunOutcome cmd_run(const config::RunConfig& config, unsigned threads, const std::filesystem::path& out_dir);

struct ExplainOutcome {
  report::ShapTable shap;
  explain::ImportanceHeatmap heatmap;
  std::vector<std::string> files;
};

// Re-explains a saved model on the config's data split without retraining.
// Throws WidthMismatch when the model does not fit the encoded data.
ExplainOutcome cmd_explain(const std::filesystem::path& model_file, const config::RunConfig& config,
                           unsigned threads, const std::filesystem::path& out_dir);

}  // namespace credalens::pipeline
