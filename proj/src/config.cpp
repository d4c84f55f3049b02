#include "credalens/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace credalens::config {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line) + ": " + msg);
}

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  std::string key() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ == start) fail(line_, "expected a key");
    std::string k(s_.substr(start, pos_ - start));
    if (k.front() == '.' || k.back() == '.' || k.find("..") != std::string::npos) fail(line_, "malformed key '" + k + "'");
    return k;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(line_, std::string("expected '") + c + "'");
    ++pos_;
  }

  ordered_json value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

 private:
  ordered_json basic_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 't': c = '\t'; break;
          case 'n': c = '\n'; break;
          case 'r': c = '\r'; break;
          default: fail(line_, std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail(line_, "unterminated string");
    ++pos_;
    return out;
  }

  ordered_json literal_string() {
    ++pos_;
    const std::size_t end = s_.find('\'', pos_);
    if (end == std::string_view::npos) fail(line_, "unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  ordered_json array() {
    ++pos_;
    ordered_json out = ordered_json::array();
    while (true) {
      skip_ws();
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      if (pos_ >= s_.size()) fail(line_, "unterminated array");
      out.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail(line_, "expected ',' or ']' in array");
      }
    }
  }

  ordered_json number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '+' ||
                                s_[pos_] == '-' || s_[pos_] == '.' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string tok;
    for (char c : s_.substr(start, pos_ - start)) {
      if (c != '_') tok += c;
    }
    if (tok.empty()) fail(line_, "expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    const char* first = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* last = tok.data() + tok.size();
    if (is_float) {
      double v = 0.0;
      const auto r = std::from_chars(first, last, v);
      if (r.ec != std::errc() || r.ptr != last || !std::isfinite(v)) fail(line_, "invalid number '" + tok + "'");
      return v;
    }
    std::int64_t v = 0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc() || r.ptr != last) fail(line_, "invalid value '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string type_name(const ordered_json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "float";
  if (v.is_string()) return "string";
  return "array";
}

[[noreturn]] void bad_type(const std::string& key, const ordered_json& v, const char* want) {
  throw Error(ErrorKind::InvalidConfig, "key '" + key + "' must be " + want + ", got " + type_name(v));
}

std::int64_t as_int(const std::string& key, const ordered_json& v, std::int64_t lo) {
  if (!v.is_number_integer()) bad_type(key, v, "an integer");
  const auto x = v.get<std::int64_t>();
  if (x < lo) throw Error(ErrorKind::InvalidConfig, "key '" + key + "' must be >= " + std::to_string(lo));
  return x;
}

double as_real(const std::string& key, const ordered_json& v) {
  if (!v.is_number() || v.is_boolean()) bad_type(key, v, "a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const ordered_json& v) {
  if (!v.is_boolean()) bad_type(key, v, "true or false");
  return v.get<bool>();
}

std::string as_string(const std::string& key, const ordered_json& v) {
  if (!v.is_string()) bad_type(key, v, "a string");
  return v.get<std::string>();
}

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, "key '" + key + "' " + rule);
}

void apply_override(learners::Hyperparams& hp, const std::string& key, const std::string& param, const ordered_json& v) {
  const auto positive = [&](double x) { require(x > 0.0, key, "must be > 0"); return x; };
  const auto unit = [&](double x) { require(x > 0.0 && x <= 1.0, key, "must be in (0, 1]"); return x; };
  const auto nonneg = [&](double x) { require(x >= 0.0, key, "must be >= 0"); return x; };
  const auto unknown = [&] { throw Error(ErrorKind::InvalidConfig, "unknown hyperparameter '" + key + "'"); };
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, learners::GlmParams>) {
          if (param == "l2") p.l2 = nonneg(as_real(key, v));
          else if (param == "non_negative") p.non_negative = as_bool(key, v);
          else if (param == "standardize") p.standardize = as_bool(key, v);
          else if (param == "max_iter") p.max_iter = static_cast<int>(as_int(key, v, 1));
          else if (param == "tol") p.tol = positive(as_real(key, v));
          else unknown();
        } else if constexpr (std::is_same_v<T, learners::ForestParams>) {
          if (param == "n_trees") p.n_trees = static_cast<int>(as_int(key, v, 1));
          else if (param == "max_depth") p.max_depth = static_cast<int>(as_int(key, v, 1));
          else if (param == "mtry") p.mtry = static_cast<int>(as_int(key, v, 0));
          else if (param == "min_leaf") p.min_leaf = static_cast<int>(as_int(key, v, 1));
          else unknown();
        } else if constexpr (std::is_same_v<T, learners::GbmParams>) {
          if (param == "n_rounds") p.n_rounds = static_cast<int>(as_int(key, v, 0));
          else if (param == "learning_rate") p.learning_rate = positive(as_real(key, v));
          else if (param == "max_depth") p.max_depth = static_cast<int>(as_int(key, v, 1));
          else if (param == "min_leaf") p.min_leaf = static_cast<int>(as_int(key, v, 1));
          else if (param == "subsample_rows") p.subsample_rows = unit(as_real(key, v));
          else if (param == "subsample_cols") p.subsample_cols = unit(as_real(key, v));
          else unknown();
        } else {
          if (param == "hidden_sizes") {
            if (!v.is_array() || v.empty()) bad_type(key, v, "a non-empty array of integers");
            p.hidden_sizes.clear();
            for (const auto& h : v) p.hidden_sizes.push_back(static_cast<int>(as_int(key, h, 1)));
          } else if (param == "epochs") p.epochs = static_cast<int>(as_int(key, v, 1));
          else if (param == "batch_size") p.batch_size = static_cast<int>(as_int(key, v, 1));
          else if (param == "learning_rate") p.learning_rate = positive(as_real(key, v));
          else if (param == "l2") p.l2 = nonneg(as_real(key, v));
          else unknown();
        }
      },
      hp);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

ordered_json parse_flat_toml(std::string_view text) {
  ordered_json out = ordered_json::object();
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    start = end + 1;
    LineParser p(line, line_no);
    if (p.at_end_or_comment()) continue;
    if (p.peek() == '[') fail(line_no, "tables are not supported; keys are flat");
    const std::string key = p.key();
    p.expect('=');
    ordered_json v = p.value();
    if (!p.at_end_or_comment()) fail(line_no, "unexpected text after the value of '" + key + "'");
    if (out.contains(key)) fail(line_no, "key '" + key + "' appears twice");
    out[key] = std::move(v);
  }
  return out;
}

fs::path RunConfig::dataset_path() const { return fs::path(dataset).is_absolute() ? fs::path(dataset) : base_dir / dataset; }
fs::path RunConfig::schema_path() const { return fs::path(schema).is_absolute() ? fs::path(schema) : base_dir / schema; }

char RunConfig::delimiter_char() const {
  if (delimiter.size() != 1) throw Error(ErrorKind::InvalidConfig, "delimiter must be a single character");
  return delimiter[0];
}

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorKind::InvalidConfig, "dataset path is required");
  if (schema.empty()) throw Error(ErrorKind::InvalidConfig, "schema path is required");
  delimiter_char();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "train_fraction must be in (0, 1)");
  }
  if (samples_m < 1) throw Error(ErrorKind::InvalidSampleCount, "samples_m must be >= 1");
  if (importance_repeats < 1) throw Error(ErrorKind::InvalidConfig, "importance_repeats must be >= 1");
  if (out_dir.empty()) throw Error(ErrorKind::InvalidConfig, "out_dir must not be empty");
  automl_config(1).validate();
}

automl::AutoMLConfig RunConfig::automl_config(unsigned threads) const {
  automl::AutoMLConfig c;
  c.max_models = max_models;
  c.sort_metric = sort_metric;
  c.cv_folds = cv_folds;
  c.master_seed = seed;
  c.explain_sample = explain_sample;
  c.background_sample = background_sample;
  c.threads = threads;
  for (const auto& [key, v] : overrides.items()) {
    const auto dot = key.find('.');
    const std::string fam = key.substr(0, dot);
    const std::string param = key.substr(dot + 1);
    const std::map<std::string, learners::ModelFamily> families{{"glm", learners::ModelFamily::GLM},
                                                                 {"drf", learners::ModelFamily::DRF},
                                                                 {"xrt", learners::ModelFamily::XRT},
                                                                 {"gbm", learners::ModelFamily::GBM},
                                                                 {"dl", learners::ModelFamily::DL}};
    const auto it = families.find(fam);
    if (dot == std::string::npos || it == families.end() || param.find('.') != std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "'");
    }
    for (auto& hp : c.grids.at(it->second)) apply_override(hp, key, param, v);
  }
  return c;
}

ordered_json RunConfig::echo() const {
  ordered_json j;
  j["dataset"] = dataset;
  j["schema"] = schema;
  j["delimiter"] = delimiter;
  j["seed"] = seed;
  j["train_fraction"] = format_real(train_fraction);
  j["balance"] = balance;
  j["stratify"] = stratify;
  j["max_models"] = max_models;
  j["cv_folds"] = cv_folds;
  j["sort_metric"] = std::string(automl::to_string(sort_metric));
  j["estimator"] = std::string(explain::to_string(estimator));
  j["samples_m"] = samples_m;
  j["exact_limit"] = exact_limit;
  j["explain_sample"] = explain_sample;
  j["background_sample"] = background_sample;
  j["importance_repeats"] = importance_repeats;
  j["overrides"] = overrides;
  return j;
}

RunConfig parse_run_config(std::string_view toml_text, fs::path base_dir) {
  const ordered_json doc = parse_flat_toml(toml_text);
  RunConfig c;
  c.base_dir = std::move(base_dir);
  for (const auto& [key, v] : doc.items()) {
    if (key == "dataset") c.dataset = as_string(key, v);
    else if (key == "schema") c.schema = as_string(key, v);
    else if (key == "delimiter") c.delimiter = as_string(key, v);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int(key, v, 0));
    else if (key == "train_fraction") c.train_fraction = as_real(key, v);
    else if (key == "balance") c.balance = as_bool(key, v);
    else if (key == "stratify") c.stratify = as_bool(key, v);
    else if (key == "max_models") c.max_models = static_cast<int>(as_int(key, v, 0));
    else if (key == "cv_folds") c.cv_folds = static_cast<int>(as_int(key, v, 0));
    else if (key == "sort_metric") {
      try {
        c.sort_metric = automl::sort_metric_from_string(as_string(key, v));
      } catch (const Error& e) {
        throw Error(ErrorKind::InvalidConfig, e.what());
      }
    } else if (key == "estimator") {
      try {
        c.estimator = explain::estimator_from_string(lower(as_string(key, v)));
      } catch (const Error& e) {
        throw Error(ErrorKind::InvalidConfig, e.what());
      }
    } else if (key == "samples_m") c.samples_m = static_cast<std::size_t>(as_int(key, v, 0));
    else if (key == "exact_limit") c.exact_limit = static_cast<std::size_t>(as_int(key, v, 1));
    else if (key == "explain_sample") c.explain_sample = static_cast<int>(as_int(key, v, 0));
    else if (key == "background_sample") c.background_sample = static_cast<int>(as_int(key, v, 0));
    else if (key == "importance_repeats") c.importance_repeats = static_cast<std::size_t>(as_int(key, v, 0));
    else if (key == "out_dir") c.out_dir = as_string(key, v);
    else if (key.find('.') != std::string::npos) c.overrides[key] = v;
    else throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "'");
  }
  c.automl_config(1);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::MissingFile, "config file not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

}  // namespace credalens::config
