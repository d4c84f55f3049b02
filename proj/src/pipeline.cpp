#include "credalens/pipeline.hpp"

#include <chrono>

#include "credalens/learners.hpp"
#include "credalens/model_io.hpp"

namespace credalens::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kBalanceStream = 0x62616c616e6365ULL;
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
constexpr std::uint64_t kExplainRowsStream = 0x726f7773ULL;
constexpr std::uint64_t kBackgroundStream = 0x6267ULL;
constexpr std::uint64_t kShapStream = 0x73686170ULL;
constexpr std::uint64_t kHeatmapStream = 0x68656174ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ordered_json class_counts(const data::Frame& f) {
  const auto& levels = f.columns()[f.target_index()].levels;
  ordered_json j;
  j["rows"] = f.n_rows();
  j[levels.at(0)] = f.class_count(0);
  j[levels.at(1)] = f.class_count(1);
  return j;
}

void make_out_dir(const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw Error(ErrorKind::IoFailure, "cannot create output directory " + out_dir.string());
  }
}

void check_exact_limit(const config::RunConfig& config, std::size_t features) {
  if (config.estimator == explain::Estimator::Exact && features > config.exact_limit) {
    throw Error(ErrorKind::TooManyFeatures, "exact attribution supports at most " + std::to_string(config.exact_limit) +
                                                " features, the data has " + std::to_string(features));
  }
}

void write_json(const fs::path& path, const ordered_json& j) { report::write_file(path, j.dump(2) + "\n"); }

ordered_json models_json(const automl::AutoMLResult& res) {
  ordered_json out = ordered_json::array();
  for (const auto& b : res.base) {
    ordered_json m;
    m["model_id"] = b.plan.id;
    m["family"] = std::string(learners::to_string(b.plan.family));
    m["grid_index"] = b.plan.grid_index;
    m["seed"] = b.plan.seed;
    m["hyperparams"] = learners::hyperparams_to_json(b.plan.params);
    m["status"] = b.ok ? "ok" : "failed";
    if (b.ok) {
      m["cv_auc"] = format_real(b.cv_auc);
      m["cv_logloss"] = format_real(b.cv_logloss);
    } else {
      m["error"] = b.error;
    }
    out.push_back(std::move(m));
  }
  for (const auto& e : res.ensembles) {
    ordered_json m;
    m["model_id"] = e.stack.id;
    m["kind"] = std::string(automl::to_string(e.stack.kind));
    auto& members = m["members"] = ordered_json::array();
    for (std::size_t i = 0; i < e.stack.member_ids.size(); ++i) {
      members.push_back({{"model_id", e.stack.member_ids[i]},
                         {"coefficient", format_real(e.stack.meta.coefficients[i])}});
    }
    m["intercept"] = format_real(e.stack.meta.intercept);
    out.push_back(std::move(m));
  }
  return out;
}

report::RunManifest base_manifest(const config::RunConfig& config, const PreparedData& d) {
  report::RunManifest m;
  m.config = config.echo();
  m.master_seed = config.seed;
  m.datasets = fingerprints(d);
  return m;
}

}  // namespace

PreparedData prepare_data(const config::RunConfig& config) {
  config.validate();
  const data::Schema schema = data::load_schema(config.schema_path());
  PreparedData d;
  d.dataset = data::load_delimited(config.dataset_path(), schema, config.delimiter_char());
  d.balanced = config.balance ? data::under_sample(d.dataset, derive_seed(config.seed, {kBalanceStream})) : d.dataset;
  const std::uint64_t split_seed = derive_seed(config.seed, {kSplitStream});
  const data::SplitIndices split = config.stratify
                                       ? data::stratified_split(d.balanced, config.train_fraction, split_seed)
                                       : data::random_split(d.balanced, config.train_fraction, split_seed);
  d.train = d.balanced.take_rows(split.train_rows);
  d.test = d.balanced.take_rows(split.test_rows);
  const auto encoder = data::OneHotEncoder::fit(d.train);
  d.train_enc = encoder.transform(d.train);
  d.test_enc = encoder.transform(d.test);
  return d;
}

ordered_json split_report(const PreparedData& d, const config::RunConfig& config) {
  ordered_json j;
  j["dataset"] = config.dataset;
  j["seed"] = config.seed;
  j["balance"] = config.balance;
  j["stratify"] = config.stratify;
  j["train_fraction"] = format_real(config.train_fraction);
  j["target_levels"] = d.dataset.columns()[d.dataset.target_index()].levels;
  j["before_balance"] = class_counts(d.dataset);
  j["after_balance"] = class_counts(d.balanced);
  j["train"] = class_counts(d.train);
  j["test"] = class_counts(d.test);
  j["encoded_width"] = d.train_enc.width();
  return j;
}

std::vector<report::DatasetFingerprint> fingerprints(const PreparedData& d) {
  std::vector<report::DatasetFingerprint> out;
  const std::pair<const char*, const data::Frame*> frames[] = {
      {"dataset", &d.dataset}, {"balanced", &d.balanced}, {"train", &d.train}, {"test", &d.test}};
  for (const auto& [role, f] : frames) {
    out.push_back({role, f->n_rows(), f->schema().size(), "fnv1a64:" + hex64(data::fingerprint(*f))});
  }
  return out;
}

report::ShapTable explain_model(const automl::AnyModel& model, const PreparedData& d, const config::RunConfig& config,
                                unsigned threads) {
  const data::EncodedMatrix& te = d.test_enc;
  if (automl::model_width(model) != te.width()) {
    throw Error(ErrorKind::WidthMismatch, "model " + automl::model_id(model) + " expects " +
                                              std::to_string(automl::model_width(model)) +
                                              " encoded columns, the data has " + std::to_string(te.width()));
  }
  check_exact_limit(config, te.feature_names.size());
  const auto rows = explain::sample_rows(te.n_rows(), static_cast<std::size_t>(config.explain_sample),
                                         derive_seed(config.seed, {kExplainRowsStream}));
  const auto background = explain::sample_background(d.train_enc.values, static_cast<std::size_t>(config.background_sample),
                                                     derive_seed(config.seed, {kBackgroundStream}));
  explain::ShapSettings settings;
  settings.estimator = config.estimator;
  settings.samples_m = config.samples_m;
  settings.exact_limit = config.exact_limit;
  settings.seed = derive_seed(config.seed, {kShapStream});
  settings.threads = threads;
  const explain::PredictFn f = [&model](const Matrix& X) { return automl::predict(model, X); };
  auto a = explain::shap_batch(f, te.values.take_rows(rows), rows, background, te.feature_blocks(), te.feature_labels,
                               settings);
  return report::make_shap_table(std::move(a), automl::model_id(model), te, rows);
}

explain::ImportanceHeatmap importance_for(const std::vector<automl::AnyModel>& models, const PreparedData& d,
                                          const config::RunConfig& config, unsigned threads) {
  const data::EncodedMatrix& te = d.test_enc;
  std::vector<explain::HeatmapModel> inputs;
  for (const auto& m : models) {
    explain::HeatmapModel h;
    h.id = automl::model_id(m);
    if (const auto* base = std::get_if<learners::FittedModel>(&m)) {
      h.native = learners::native_importance(*base, te.source_of, te.feature_names);
    }
    h.predict = [&m](const Matrix& X) { return automl::predict(m, X); };
    inputs.push_back(std::move(h));
  }
  return explain::importance_heatmap(inputs, te, config.importance_repeats, derive_seed(config.seed, {kHeatmapStream}),
                                     threads);
}

PrepareOutcome cmd_prepare(const config::RunConfig& config, const fs::path& out_dir) {
  const PreparedData d = prepare_data(config);
  make_out_dir(out_dir);
  PrepareOutcome out;
  out.report = split_report(d, config);
  data::write_delimited(out_dir / "train.csv", d.train, ',');
  data::write_delimited(out_dir / "test.csv", d.test, ',');
  write_json(out_dir / "split_report.json", out.report);
  out.files = {"train.csv", "test.csv", "split_report.json"};
  return out;
}

RunOutcome cmd_run(const config::RunConfig& config, unsigned threads, const fs::path& out_dir) {
  const auto t_start = Clock::now();
  ordered_json timings;
  auto t = Clock::now();
  const PreparedData d = prepare_data(config);
  check_exact_limit(config, d.train_enc.feature_names.size());
  make_out_dir(out_dir);
  timings["prepare_seconds"] = seconds_since(t);

  RunOutcome out;
  t = Clock::now();
  out.automl = automl::run_automl(d.train_enc, d.test_enc, config.automl_config(threads));
  timings["automl_seconds"] = seconds_since(t);
  auto& per_model = timings["models"] = ordered_json::object();
  for (const auto& b : out.automl.base) per_model[b.plan.id] = b.seconds;

  t = Clock::now();
  const automl::AnyModel leader = out.automl.leader();
  out.shap = explain_model(leader, d, config, threads);
  timings["shap_seconds"] = seconds_since(t);

  t = Clock::now();
  std::vector<automl::AnyModel> ranked;
  for (const auto& e : out.automl.leaderboard.entries) {
    if (!e.ok()) continue;
    if (auto m = out.automl.find(e.model_id)) ranked.push_back(std::move(*m));
  }
  out.heatmap = importance_for(ranked, d, config, threads);
  timings["heatmap_seconds"] = seconds_since(t);

  t = Clock::now();
  out.files = report::emit_tables(out.automl.leaderboard, out.shap, out.heatmap, out_dir);
  const auto svgs = report::render_svg(out.shap, out.heatmap, out.automl.leaderboard, out_dir);
  out.files.insert(out.files.end(), svgs.begin(), svgs.end());
  write_json(out_dir / "split_report.json", split_report(d, config));
  out.files.push_back("split_report.json");
  automl::save_model(out_dir / "leader_model.json", leader);
  out.files.push_back("leader_model.json");

  report::RunManifest manifest = base_manifest(config, d);
  manifest.models = models_json(out.automl);
  report::write_manifest(std::move(manifest), out.files, out_dir);
  out.files.push_back("manifest.json");
  timings["report_seconds"] = seconds_since(t);
  timings["threads"] = threads;
  timings["total_seconds"] = seconds_since(t_start);
  write_json(out_dir / "timings.json", timings);
  return out;
}

ExplainOutcome cmd_explain(const fs::path& model_file, const config::RunConfig& config, unsigned threads,
                           const fs::path& out_dir) {
  if (!fs::exists(model_file)) throw Error(ErrorKind::MissingFile, "model file not found: " + model_file.string());
  const automl::AnyModel model = automl::load_model(model_file);
  const PreparedData d = prepare_data(config);
  if (automl::model_width(model) != d.test_enc.width()) {
    throw Error(ErrorKind::WidthMismatch, "model " + automl::model_id(model) + " expects " +
                                              std::to_string(automl::model_width(model)) +
                                              " encoded columns, the data has " + std::to_string(d.test_enc.width()));
  }
  check_exact_limit(config, d.test_enc.feature_names.size());
  make_out_dir(out_dir);

  ExplainOutcome out;
  out.shap = explain_model(model, d, config, threads);
  out.heatmap = importance_for({model}, d, config, threads);
  out.files = report::emit_attribution_tables(out.shap, out.heatmap, out_dir);
  const auto svgs = report::render_attribution_svg(out.shap, out.heatmap, out_dir);
  out.files.insert(out.files.end(), svgs.begin(), svgs.end());

  report::RunManifest manifest = base_manifest(config, d);
  manifest.models = ordered_json::array({{{"model_id", automl::model_id(model)},
                                          {"kind", automl::model_kind(model)},
                                          {"model_file_hash", report::file_hash(model_file)}}});
  report::write_manifest(std::move(manifest), out.files, out_dir);
  out.files.push_back("manifest.json");
  return out;
}

}  // namespace credalens::pipeline
