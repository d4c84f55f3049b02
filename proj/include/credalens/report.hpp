#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "credalens/automl.hpp"
#include "credalens/core.hpp"
#include "credalens/explain.hpp"
#include "json.hpp"

namespace credalens::report {

// Attributions together with the explained instances' feature values.
struct ShapTable {
  explain::AttributionMatrix attributions;
  std::string model_id;
  std::vector<std::vector<std::string>> value_text;  // instance x feature
  Matrix value_num;                                  // instance x feature; level index for categoricals
};

ShapTable make_shap_table(explain::AttributionMatrix attributions, std::string model_id,
                          const data::EncodedMatrix& explained, std::span<const std::size_t> rows);

struct DatasetFingerprint {
  std::string role;  // "dataset", "train", "test"
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string hash;
};

struct ArtifactEntry {
  std::string file;
  std::size_t bytes = 0;
  std::string hash;
};

struct RunManifest {
  nlohmann::ordered_json config;
  std::uint64_t master_seed = 0;
  std::vector<DatasetFingerprint> datasets;
  nlohmann::ordered_json models;  // per-model CV metrics, seeds and hyperparameters
  std::vector<ArtifactEntry> files;
  std::string engine = std::string(kEngineVersion);
};

nlohmann::ordered_json manifest_to_json(const RunManifest& m);

// Content hash of a file on disk, "fnv1a64:<16 hex digits>".
std::string file_hash(const std::filesystem::path& path);

// Writes bytes exactly as given; throws IoFailure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// CSV field, quoted when it holds a comma, quote or line break.
std::string csv_field(std::string_view s);

std::string shap_values_csv(const ShapTable& t);
std::string shap_summary_csv(const explain::AttributionMatrix& a);
std::string heatmap_csv(const explain::ImportanceHeatmap& h);
nlohmann::ordered_json shap_header(const ShapTable& t);

// shap_values.csv (+ shap_values.json header sidecar), shap_summary.csv,
// heatmap.csv (+ heatmap.json with methods and raw importances).
std::vector<std::string> emit_attribution_tables(const ShapTable& shap, const explain::ImportanceHeatmap& heatmap,
                                                 const std::filesystem::path& out_dir);

// leaderboard.csv followed by the attribution tables. Returns file names in
// write order.
std::vector<std::string> emit_tables(const automl::Leaderboard& board, const ShapTable& shap,
                                     const explain::ImportanceHeatmap& heatmap, const std::filesystem::path& out_dir);

std::string shap_summary_svg(const ShapTable& t);
std::string heatmap_svg(const explain::ImportanceHeatmap& h);
std::string leaderboard_svg(const automl::Leaderboard& board);

// shap_summary.svg and heatmap.svg.
std::vector<std::string> render_attribution_svg(const ShapTable& shap, const explain::ImportanceHeatmap& heatmap,
                                                const std::filesystem::path& out_dir);

// shap_summary.svg, heatmap.svg, leaderboard.svg. Throws InvalidArgument on
// empty inputs.
std::vector<std::string> render_svg(const ShapTable& shap, const explain::ImportanceHeatmap& heatmap,
                                    const automl::Leaderboard& board, const std::filesystem::path& out_dir);

// Hashes `files` (relative to out_dir) into the manifest and writes
// manifest.json.
void write_manifest(RunManifest manifest, const std::vector<std::string>& files, const std::filesystem::path& out_dir);

// Files whose on-disk hash differs from manifest.json (empty when all match).
std::vector<std::string> verify_manifest(const std::filesystem::path& out_dir);

}  // namespace credalens::report
