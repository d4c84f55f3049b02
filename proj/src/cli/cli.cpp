#include "credalens/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>

#include "credalens/config.hpp"
#include "credalens/pipeline.hpp"

namespace credalens::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn:
    case ErrorKind::BadCell:
    case ErrorKind::EmptyFile:
    case ErrorKind::MissingFile:
    case ErrorKind::SingleClass:
    case ErrorKind::WidthMismatch:
    case ErrorKind::TooFewRows:
    case ErrorKind::TooManyFeatures:
    case ErrorKind::InvalidSampleCount:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidConfig: return kExitValidation;
    case ErrorKind::DegenerateSplit:
    case ErrorKind::NonFinite:
    case ErrorKind::IoFailure: return kExitRuntime;
  }
  return kExitRuntime;
}

namespace {

int report_error(std::ostream& err, std::string_view kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = std::string(kind);
  j["message"] = message;
  j["exit_code"] = code;
  err << j.dump() << "\n";
  return code;
}

// Flag values; unset options leave the config file's value in place.
struct Overrides {
  std::string config_path;
  std::optional<std::string> dataset, schema, delimiter, out, sort_metric, estimator;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<int> max_models, instances;
  std::optional<std::size_t> samples;
  bool no_stratify = false;
  bool no_balance = false;
  std::string model;
};

void add_data_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "TOML run config");
  cmd->add_option("--dataset", o.dataset, "Delimited data file (overrides the config)");
  cmd->add_option("--schema", o.schema, "Schema JSON file (overrides the config)");
  cmd->add_option("--delimiter", o.delimiter, "Field delimiter, one character");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--no-stratify", o.no_stratify, "Split without class stratification");
  cmd->add_flag("--no-balance", o.no_balance, "Skip random under-sampling");
}

void add_explain_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--threads", o.threads, "Worker threads (default: CREDALENS_THREADS, then all cores)");
  cmd->add_option("--estimator", o.estimator, "Attribution estimator: exact or permutation");
  cmd->add_option("--samples", o.samples, "Permutations per explained instance");
  cmd->add_option("--instances", o.instances, "Number of test rows to explain");
}

config::RunConfig build_config(const Overrides& o) {
  config::RunConfig c = o.config_path.empty() ? config::RunConfig{} : config::load_run_config(o.config_path);
  if (o.config_path.empty()) c.base_dir = ".";
  // Paths given on the command line are relative to the working directory.
  if (o.dataset) c.dataset = fs::absolute(*o.dataset).string();
  if (o.schema) c.schema = fs::absolute(*o.schema).string();
  if (o.delimiter) c.delimiter = *o.delimiter == "\\t" ? "\t" : *o.delimiter;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.max_models) c.max_models = *o.max_models;
  if (o.instances) c.explain_sample = *o.instances;
  if (o.samples) c.samples_m = *o.samples;
  if (o.no_stratify) c.stratify = false;
  if (o.no_balance) c.balance = false;
  if (o.sort_metric) {
    try {
      c.sort_metric = automl::sort_metric_from_string(*o.sort_metric);
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidConfig, e.what());
    }
  }
  if (o.estimator) {
    try {
      c.estimator = explain::estimator_from_string(*o.estimator);
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidConfig, e.what());
    }
  }
  c.validate();
  return c;
}

unsigned thread_count(const Overrides& o) {
  if (o.threads) return resolve_threads(*o.threads);
  if (const char* env = std::getenv("CREDALENS_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0') {
      throw Error(ErrorKind::InvalidConfig, std::string("CREDALENS_THREADS must be a number, got '") + env + "'");
    }
    return resolve_threads(static_cast<unsigned>(v));
  }
  return resolve_threads(0);
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void print_leaderboard(std::ostream& out, const automl::Leaderboard& board) {
  char line[160];
  std::snprintf(line, sizeof line, "%-5s %-28s %-28s %-10s %-10s\n", "rank", "model_id", "kind", "auc", "logloss");
  out << line;
  for (const auto& e : board.entries) {
    const std::string auc = e.ok() ? fixed(e.auc) : "-";
    const std::string ll = e.ok() ? fixed(e.logloss) : "failed";
    std::snprintf(line, sizeof line, "%-5d %-28s %-28s %-10s %-10s\n", e.rank, e.model_id.c_str(), e.kind.c_str(),
                  auc.c_str(), ll.c_str());
    out << line;
  }
}

std::string counts_text(const nlohmann::ordered_json& counts, const nlohmann::ordered_json& levels) {
  const std::string a = levels.at(0).get<std::string>();
  const std::string b = levels.at(1).get<std::string>();
  return std::to_string(counts.at(a).get<std::size_t>()) + "/" + std::to_string(counts.at(b).get<std::size_t>()) +
         " (" + a + "/" + b + ")";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"credalens: explainable AutoML for binary credit-default classification"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);
  Overrides o;

  auto* prepare = app.add_subcommand("prepare", "Balance, split and write train/test files without training");
  add_data_options(prepare, o);

  auto* run = app.add_subcommand("run", "Train the leaderboard, explain the leader and write every report");
  add_data_options(run, o);
  add_explain_options(run, o);
  run->add_option("--max-models", o.max_models, "Base models to train (>= 5)");
  run->add_option("--sort-metric", o.sort_metric, "Leaderboard metric: auc or logloss");

  auto* explain = app.add_subcommand("explain", "Attribute a saved model's predictions without retraining");
  add_data_options(explain, o);
  add_explain_options(explain, o);
  explain->add_option("--model", o.model, "Model JSON written by run")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error(err, "InvalidArgument", e.what(), kExitValidation);
  }

  try {
    const config::RunConfig c = build_config(o);
    if (prepare->parsed()) {
      const auto res = pipeline::cmd_prepare(c, c.out_dir);
      const auto& levels = res.report.at("target_levels");
      out << "dataset: " << res.report.at("before_balance").at("rows").get<std::size_t>() << " rows, classes "
          << counts_text(res.report.at("before_balance"), levels) << "\n";
      out << "after balance: " << counts_text(res.report.at("after_balance"), levels) << "\n";
      out << "train: " << counts_text(res.report.at("train"), levels) << "\n";
      out << "test: " << counts_text(res.report.at("test"), levels) << "\n";
      out << "wrote " << (fs::path(c.out_dir) / "split_report.json").string() << "\n";
    } else if (run->parsed()) {
      const auto res = pipeline::cmd_run(c, thread_count(o), c.out_dir);
      print_leaderboard(out, res.automl.leaderboard);
      out << "leader: " << res.automl.leaderboard.leader().model_id << "\n";
      out << "wrote " << res.files.size() << " files to " << c.out_dir << "\n";
    } else {
      const auto res = pipeline::cmd_explain(o.model, c, thread_count(o), c.out_dir);
      out << "explained " << res.shap.attributions.n_instances() << " instances of " << res.shap.model_id << "\n";
      out << "wrote " << res.files.size() << " files to " << c.out_dir << "\n";
    }
  } catch (const Error& e) {
    return report_error(err, to_string(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    return report_error(err, "RuntimeError", e.what(), kExitRuntime);
  }
  return kExitOk;
}

}  // namespace credalens::cli
