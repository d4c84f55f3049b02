#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "credalens/cli.hpp"
#include "credalens/config.hpp"
#include "credalens/learners.hpp"
#include "credalens/pipeline.hpp"
#include "doctest.h"

using namespace credalens;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CREDALENS_DATA_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("credalens_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string error_kind(const Outcome& o) {
  const auto j = nlohmann::json::parse(o.err);
  CHECK(j.at("exit_code") == o.code);
  CHECK(!j.at("message").get<std::string>().empty());
  return j.at("error");
}

std::string german() { return (kData / "german.toml").string(); }

// A small GLM matching the German encoding, saved as a model file.
fs::path german_glm(const fs::path& dir) {
  const auto c = config::load_run_config(kData / "german.toml");
  const auto d = pipeline::prepare_data(c);
  const auto m = learners::fit_model(learners::ModelFamily::GLM, learners::default_params(learners::ModelFamily::GLM),
                                     d.train_enc.values, d.train_enc.target, 1, "GLM_1");
  const fs::path p = dir / "glm.json";
  automl::save_model(p, m);
  return p;
}

}  // namespace

TEST_CASE("flat TOML values") {
  const auto j = config::parse_flat_toml(
      "# comment\n"
      "a = \"x # not a comment\"  # trailing\n"
      "b = 'lit\\eral'\n"
      "c = 1_000\n"
      "d = -2.5e-3\n"
      "e = true\n"
      "f = [16, 16,]\n"
      "g.h = \"\\t\"\r\n");
  CHECK(j.at("a") == "x # not a comment");
  CHECK(j.at("b") == "lit\\eral");
  CHECK(j.at("c") == 1000);
  CHECK(j.at("c").is_number_integer());
  CHECK(j.at("d").get<double>() == -2.5e-3);
  CHECK(j.at("e") == true);
  CHECK(j.at("f") == nlohmann::json::array({16, 16}));
  CHECK(j.at("g.h") == "\t");
}

TEST_CASE("flat TOML rejects what it does not support") {
  for (const char* bad : {"[table]\n", "a = 1\na = 2\n", "a = \"open\n", "a = 1 2\n", "= 3\n", "a = nan\n",
                          "a = [1, 2\n", "a = \"\\q\"\n"}) {
    INFO(bad);
    try {
      config::parse_flat_toml(bad);
      FAIL("expected InvalidConfig");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidConfig);
    }
  }
}

TEST_CASE("run config keys, overrides and validation") {
  const auto c = config::parse_run_config(
      "dataset = \"d.csv\"\nschema = \"s.json\"\nmax_models = 7\nsort_metric = \"LogLoss\"\n"
      "gbm.n_rounds = 12\ndl.hidden_sizes = [4]\nglm.non_negative = true\n",
      "/base");
  CHECK(c.dataset_path() == fs::path("/base/d.csv"));
  CHECK(c.max_models == 7);
  CHECK(c.sort_metric == automl::SortMetric::LogLoss);
  const auto a = c.automl_config(1);
  for (const auto& hp : a.grids.at(learners::ModelFamily::GBM)) CHECK(std::get<learners::GbmParams>(hp).n_rounds == 12);
  for (const auto& hp : a.grids.at(learners::ModelFamily::DL)) {
    CHECK(std::get<learners::MlpParams>(hp).hidden_sizes == std::vector<int>{4});
  }
  CHECK(std::get<learners::GlmParams>(a.grids.at(learners::ModelFamily::GLM)[0]).non_negative);
  CHECK(!c.echo().contains("out_dir"));
  CHECK_NOTHROW(c.validate());

  for (const char* bad : {"colour = 1\n", "gbm.depth = 3\n", "svm.c = 1\n", "max_models = \"many\"\n",
                          "gbm.subsample_rows = 1.5\n", "dl.hidden_sizes = 4\n", "sort_metric = \"f1\"\n"}) {
    INFO(bad);
    CHECK_THROWS_AS(config::parse_run_config(bad, "."), Error);
  }
  auto low = c;
  low.max_models = 3;
  CHECK_THROWS_AS(low.validate(), Error);
  auto frac = c;
  frac.train_fraction = 1.0;
  CHECK_THROWS_AS(frac.validate(), Error);
}

TEST_CASE("prepare reproduces the German balanced counts") {
  const auto dir = scratch("prepare");
  const auto o = invoke({"prepare", "--config", german(), "--out", dir.string()});
  REQUIRE(o.code == 0);
  CHECK(o.out.find("after balance: 300/300") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "split_report.json"));
  CHECK(report.at("before_balance").at("1") == 700);
  CHECK(report.at("before_balance").at("2") == 300);
  CHECK(report.at("after_balance").at("1") == 300);
  CHECK(report.at("after_balance").at("2") == 300);
  CHECK(report.at("train").at("rows") == 480);
  CHECK(report.at("test").at("rows") == 120);
  CHECK(fs::exists(dir / "train.csv"));
  CHECK(fs::exists(dir / "test.csv"));

  const auto raw = invoke({"prepare", "--config", german(), "--out", (dir / "raw").string(), "--no-balance"});
  REQUIRE(raw.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "raw" / "split_report.json")).at("after_balance").at("rows") == 1000);
}

TEST_CASE("flags override the config file") {
  const auto dir = scratch("precedence");
  REQUIRE(invoke({"prepare", "--config", german(), "--out", dir.string(), "--seed", "7", "--no-stratify"}).code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "split_report.json"));
  CHECK(report.at("seed") == 7);
  CHECK(report.at("stratify") == false);
}

TEST_CASE("exit code 1 for invalid input") {
  const auto dir = scratch("invalid");
  const std::string out = (dir / "o").string();
  struct Case {
    std::vector<std::string> args;
    std::string kind;
  };
  const std::vector<Case> cases{
      {{"prepare", "--dataset", (kData / "german.data").string(), "--schema", (dir / "none.json").string(),
        "--delimiter", " ", "--out", out},
       "MissingFile"},
      {{"run", "--config", german(), "--max-models", "3", "--out", out}, "InvalidConfig"},
      {{"run", "--config", german(), "--sort-metric", "f1", "--out", out}, "InvalidConfig"},
      {{"run", "--config", german(), "--samples", "0", "--out", out}, "InvalidSampleCount"},
      {{"run", "--config", german(), "--estimator", "exact", "--out", out}, "TooManyFeatures"},
      {{"run", "--config", (dir / "absent.toml").string()}, "MissingFile"},
      {{"run", "--config", german(), "--bogus"}, "InvalidArgument"},
      {{}, "InvalidArgument"},
      {{"explain", "--config", german()}, "InvalidArgument"},
  };
  for (const auto& c : cases) {
    std::string joined;
    for (const auto& a : c.args) joined += a + " ";
    INFO(joined);
    const auto o = invoke(c.args);
    CHECK(o.code == 1);
    CHECK(error_kind(o) == c.kind);
  }
}

TEST_CASE("explain validates the model against the data") {
  const auto dir = scratch("explain");
  const auto model = german_glm(dir);

  const auto exact = invoke({"explain", "--config", german(), "--model", model.string(), "--estimator", "exact", "--out",
                          (dir / "x").string()});
  CHECK(exact.code == 1);
  CHECK(error_kind(exact) == "TooManyFeatures");

  learners::FittedModel narrow = learners::fit_model(
      learners::ModelFamily::GLM, learners::default_params(learners::ModelFamily::GLM),
      [] {
        Matrix X(4, 2);
        X(0, 0) = X(1, 1) = X(2, 0) = 1;
        return X;
      }(),
      std::vector<int>{1, 0, 1, 0}, 1, "tiny");
  automl::save_model(dir / "narrow.json", narrow);
  const auto wide = invoke({"explain", "--config", german(), "--model", (dir / "narrow.json").string(), "--out",
                         (dir / "y").string()});
  CHECK(wide.code == 1);
  CHECK(error_kind(wide) == "WidthMismatch");

  const auto missing = invoke({"explain", "--config", german(), "--model", (dir / "nope.json").string()});
  CHECK(missing.code == 1);
  CHECK(error_kind(missing) == "MissingFile");
}

TEST_CASE("explain --instances 1 writes one instance block") {
  const auto dir = scratch("instances");
  const auto model = german_glm(dir);
  const auto o = invoke({"explain", "--config", german(), "--model", model.string(), "--instances", "1", "--samples", "4",
                      "--out", (dir / "x").string()});
  REQUIRE(o.code == 0);
  std::istringstream csv(slurp(dir / "x" / "shap_values.csv"));
  std::string line;
  std::getline(csv, line);
  std::set<std::string> ids;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ids.insert(line.substr(0, line.find(',')));
    ++rows;
  }
  CHECK(ids.size() == 1);
  CHECK(rows == 20);
  CHECK(report::verify_manifest(dir / "x").empty());
}

TEST_CASE("exit code 2 for runtime failures") {
  const auto dir = scratch("runtime");
  report::write_file(dir / "plain_file", "x");
  const auto o = invoke({"prepare", "--config", german(), "--out", (dir / "plain_file" / "sub").string()});
  CHECK(o.code == 2);
  CHECK(error_kind(o) == "IoFailure");
}

TEST_CASE("CREDALENS_THREADS must be a number") {
  const auto dir = scratch("env");
  const auto model = german_glm(dir);
  ::setenv("CREDALENS_THREADS", "lots", 1);
  const auto o = invoke({"explain", "--config", german(), "--model", model.string(), "--instances", "1", "--samples", "2",
                      "--out", (dir / "x").string()});
  ::unsetenv("CREDALENS_THREADS");
  CHECK(o.code == 1);
  CHECK(error_kind(o) == "InvalidConfig");
}

TEST_CASE("run writes the full artifact set") {
  const auto dir = scratch("run");
  const auto o = invoke({"run", "--config", german(), "--max-models", "5", "--samples", "4", "--instances", "5",
                      "--threads", "2", "--out", dir.string()});
  REQUIRE(o.code == 0);
  CHECK(o.out.find("StackedEnsemble_AllModels") != std::string::npos);
  for (const char* f : {"leaderboard.csv", "shap_values.csv", "shap_summary.csv", "heatmap.csv", "shap_summary.svg",
                        "heatmap.svg", "leaderboard.svg", "manifest.json", "leader_model.json", "timings.json"}) {
    INFO(f);
    CHECK(fs::exists(dir / f));
  }
  std::istringstream board(slurp(dir / "leaderboard.csv"));
  std::size_t lines = 0;
  for (std::string l; std::getline(board, l);) ++lines;
  CHECK(lines == 1 + 5 + 2);
  CHECK(report::verify_manifest(dir).empty());
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  for (const auto& f : manifest.at("files")) CHECK(f.at("file") != "timings.json");
}
