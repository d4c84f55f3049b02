#include <fstream>
#include <sstream>

#include "credalens/report.hpp"

namespace credalens::report {

namespace fs = std::filesystem;

ShapTable make_shap_table(explain::AttributionMatrix attributions, std::string model_id,
                          const data::EncodedMatrix& explained, std::span<const std::size_t> rows) {
  const std::size_t p = explained.feature_names.size();
  if (rows.size() != attributions.n_instances() || p != attributions.n_features()) {
    throw Error(ErrorKind::InvalidArgument, "attribution shape does not match the explained rows");
  }
  ShapTable t;
  t.attributions = std::move(attributions);
  t.model_id = std::move(model_id);
  t.value_num = Matrix(rows.size(), p);
  t.value_text.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.value_text[i].reserve(p);
    for (std::size_t j = 0; j < p; ++j) {
      t.value_text[i].push_back(data::feature_value_text(explained, rows[i], j));
      t.value_num(i, j) = data::feature_value(explained, rows[i], j);
    }
  }
  return t;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.close();
  if (!f) throw Error(ErrorKind::IoFailure, "failed writing " + path.string());
}

namespace {

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string file_hash(const fs::path& path) { return "fnv1a64:" + hex64(fnv1a64(read_bytes(path))); }

std::string shap_values_csv(const ShapTable& t) {
  const auto& a = t.attributions;
  std::string out = "instance_id,feature,phi,feature_value\n";
  for (std::size_t i = 0; i < a.n_instances(); ++i) {
    const std::string id = std::to_string(a.instance_ids[i]);
    for (std::size_t j = 0; j < a.n_features(); ++j) {
      out += id + "," + csv_field(a.features[j]) + "," + format_real(a.phi(i, j)) + "," +
             csv_field(t.value_text[i][j]) + "\n";
    }
  }
  return out;
}

std::string shap_summary_csv(const explain::AttributionMatrix& a) {
  const auto mean = explain::mean_abs_phi(a);
  const auto order = explain::summary_order(a);
  std::string out = "feature,mean_abs_phi,rank\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    out += csv_field(a.features[order[r]]) + "," + format_real(mean[order[r]]) + "," + std::to_string(r + 1) + "\n";
  }
  return out;
}

std::string heatmap_csv(const explain::ImportanceHeatmap& h) {
  std::string out = "feature,model_id,scaled_importance\n";
  for (std::size_t r = 0; r < h.features.size(); ++r) {
    for (std::size_t m = 0; m < h.model_ids.size(); ++m) {
      out += csv_field(h.features[r]) + "," + csv_field(h.model_ids[m]) + "," + format_real(h.values(r, m)) + "\n";
    }
  }
  return out;
}

nlohmann::ordered_json shap_header(const ShapTable& t) {
  const auto& a = t.attributions;
  nlohmann::ordered_json j;
  j["model_id"] = t.model_id;
  j["estimator"] = std::string(explain::to_string(a.estimator));
  j["samples_m"] = a.samples_m;
  j["seed"] = a.seed;
  j["background_size"] = a.background_size;
  j["base_value"] = format_real(a.base_value);
  j["features"] = a.features;
  auto& inst = j["instances"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < a.n_instances(); ++i) {
    inst.push_back({{"instance_id", a.instance_ids[i]}, {"output", format_real(a.instance_outputs[i])}});
  }
  return j;
}

namespace {

nlohmann::ordered_json heatmap_header(const explain::ImportanceHeatmap& h) {
  nlohmann::ordered_json j;
  auto& models = j["models"] = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < h.model_ids.size(); ++m) {
    nlohmann::ordered_json raw = nlohmann::ordered_json::object();
    for (std::size_t r = 0; r < h.features.size(); ++r) raw[h.features[r]] = format_real(h.raw(r, m));
    models.push_back({{"model_id", h.model_ids[m]}, {"method", h.method[m]}, {"raw_importance", raw}});
  }
  return j;
}

}  // namespace

std::vector<std::string> emit_attribution_tables(const ShapTable& shap, const explain::ImportanceHeatmap& heatmap,
                                                 const fs::path& out_dir) {
  const std::vector<std::pair<std::string, std::string>> files{
      {"shap_values.csv", shap_values_csv(shap)},
      {"shap_values.json", dump(shap_header(shap))},
      {"shap_summary.csv", shap_summary_csv(shap.attributions)},
      {"heatmap.csv", heatmap_csv(heatmap)},
      {"heatmap.json", dump(heatmap_header(heatmap))},
  };
  std::vector<std::string> names;
  for (const auto& [name, bytes] : files) {
    write_file(out_dir / name, bytes);
    names.push_back(name);
  }
  return names;
}

std::vector<std::string> emit_tables(const automl::Leaderboard& board, const ShapTable& shap,
                                     const explain::ImportanceHeatmap& heatmap, const fs::path& out_dir) {
  write_file(out_dir / "leaderboard.csv", automl::leaderboard_csv(board));
  std::vector<std::string> names{"leaderboard.csv"};
  const auto rest = emit_attribution_tables(shap, heatmap, out_dir);
  names.insert(names.end(), rest.begin(), rest.end());
  return names;
}

nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["engine"] = m.engine;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config;
  auto& ds = j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& d : m.datasets) {
    ds.push_back({{"role", d.role}, {"rows", d.rows}, {"cols", d.cols}, {"hash", d.hash}});
  }
  j["models"] = m.models.is_null() ? nlohmann::ordered_json::array() : m.models;
  auto& files = j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : m.files) files.push_back({{"file", f.file}, {"bytes", f.bytes}, {"hash", f.hash}});
  return j;
}

void write_manifest(RunManifest manifest, const std::vector<std::string>& files, const fs::path& out_dir) {
  manifest.files.clear();
  for (const auto& name : files) {
    const fs::path p = out_dir / name;
    std::error_code ec;
    const auto bytes = fs::file_size(p, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot stat " + p.string());
    manifest.files.push_back({name, static_cast<std::size_t>(bytes), file_hash(p)});
  }
  write_file(out_dir / "manifest.json", dump(manifest_to_json(manifest)));
}

std::vector<std::string> verify_manifest(const fs::path& out_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_bytes(out_dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoFailure, std::string("manifest.json is not valid JSON: ") + e.what());
  }
  std::vector<std::string> bad;
  for (const auto& f : j.at("files")) {
    const std::string name = f.at("file").get<std::string>();
    const fs::path p = out_dir / name;
    if (!fs::exists(p) || file_hash(p) != f.at("hash").get<std::string>()) bad.push_back(name);
  }
  return bad;
}

}  // namespace credalens::report
