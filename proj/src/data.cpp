#include "credalens/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace credalens::data {

namespace {

using nlohmann::json;

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splits one record. Fields may be double-quoted with "" as an escaped quote.
std::vector<std::string> split_record(std::string_view line, char delim, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  std::size_t i = 0;
  for (;;) {
    cur.clear();
    if (i < line.size() && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur.push_back('"');
            i += 2;
          } else {
            ++i;
            closed = true;
            break;
          }
        } else {
          cur.push_back(line[i++]);
        }
      }
      if (!closed || (i < line.size() && line[i] != delim)) {
        fail(ErrorKind::BadCell, "malformed quoted field on line " + std::to_string(line_no));
      }
    } else {
      while (i < line.size() && line[i] != delim) cur.push_back(line[i++]);
    }
    out.push_back(cur);
    if (i >= line.size()) break;
    ++i;  // delimiter
  }
  return out;
}

bool needs_quotes(std::string_view s, char delim) {
  return s.empty() || s.find(delim) != std::string_view::npos ||
         s.find('"') != std::string_view::npos || s.find('\n') != std::string_view::npos ||
         s.find('\r') != std::string_view::npos;
}

void append_field(std::string& out, std::string_view s, char delim) {
  if (!needs_quotes(s, delim)) {
    out.append(s);
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

ColumnKind parse_kind(const std::string& s) {
  if (s == "numeric") return ColumnKind::Numeric;
  if (s == "categorical") return ColumnKind::Categorical;
  fail(ErrorKind::InvalidConfig, "unknown column kind '" + s + "'");
}

ColumnRole parse_role(const std::string& s) {
  if (s == "feature") return ColumnRole::Feature;
  if (s == "target") return ColumnRole::Target;
  if (s == "ignored") return ColumnRole::Ignored;
  fail(ErrorKind::InvalidConfig, "unknown column role '" + s + "'");
}

std::uint64_t bits_of(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

void validate_schema(const Schema& schema) {
  std::set<std::string> names;
  std::size_t targets = 0;
  std::size_t features = 0;
  for (const auto& col : schema) {
    if (col.name.empty()) fail(ErrorKind::InvalidConfig, "schema column with empty name");
    if (!names.insert(col.name).second) {
      fail(ErrorKind::InvalidConfig, "duplicate schema column '" + col.name + "'");
    }
    if (col.kind == ColumnKind::Numeric && col.levels) {
      fail(ErrorKind::InvalidConfig, "numeric column '" + col.name + "' cannot pin levels");
    }
    if (col.levels) {
      std::set<std::string> uniq(col.levels->begin(), col.levels->end());
      if (uniq.size() != col.levels->size()) {
        fail(ErrorKind::InvalidConfig, "duplicate levels in column '" + col.name + "'");
      }
    }
    if (col.role == ColumnRole::Target) {
      ++targets;
      if (col.kind != ColumnKind::Categorical) {
        fail(ErrorKind::InvalidConfig, "target column '" + col.name + "' must be categorical");
      }
      if (col.levels && col.levels->size() != 2) {
        fail(ErrorKind::InvalidConfig, "target column '" + col.name + "' must have exactly 2 levels");
      }
    } else if (col.role == ColumnRole::Feature) {
      ++features;
    }
  }
  if (targets != 1) fail(ErrorKind::InvalidConfig, "schema must declare exactly one target column");
  if (features == 0) fail(ErrorKind::InvalidConfig, "schema declares no feature columns");
}

Schema parse_schema(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorKind::InvalidConfig, "schema must be a JSON array of column objects");
  Schema schema;
  for (const auto& obj : doc) {
    if (!obj.is_object()) fail(ErrorKind::InvalidConfig, "schema entries must be objects");
    ColumnSchema col;
    for (const auto& [key, value] : obj.items()) {
      try {
        if (key == "name") {
          col.name = value.get<std::string>();
        } else if (key == "kind") {
          col.kind = parse_kind(value.get<std::string>());
        } else if (key == "role") {
          col.role = parse_role(value.get<std::string>());
        } else if (key == "levels") {
          col.levels = value.get<std::vector<std::string>>();
        } else if (key == "display_name") {
          col.display_name = value.get<std::string>();
        } else {
          fail(ErrorKind::InvalidConfig, "unknown schema field '" + key + "'");
        }
      } catch (const json::exception& e) {
        fail(ErrorKind::InvalidConfig, "schema field '" + key + "': " + e.what());
      }
    }
    schema.push_back(std::move(col));
  }
  validate_schema(schema);
  return schema;
}

Schema load_schema(const std::filesystem::path& path) { return parse_schema(read_file(path)); }

// ---------------------------------------------------------------------------
// Frame
// ---------------------------------------------------------------------------

Frame::Frame(Schema schema, std::vector<Column> columns, std::size_t n_rows)
    : schema_(std::move(schema)), columns_(std::move(columns)), n_rows_(n_rows) {
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].role == ColumnRole::Target) target_ = i;
  }
}

std::vector<std::size_t> Frame::feature_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].role == ColumnRole::Feature) out.push_back(i);
  }
  return out;
}

std::size_t Frame::class_count(int cls) const {
  const auto& t = target();
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), cls));
}

Frame Frame::take_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> cols(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const Column& src = columns_[c];
    Column& dst = cols[c];
    dst.levels = src.levels;
    if (!src.numeric.empty()) {
      dst.numeric.reserve(rows.size());
      for (auto r : rows) dst.numeric.push_back(src.numeric[r]);
    }
    if (!src.codes.empty()) {
      dst.codes.reserve(rows.size());
      for (auto r : rows) dst.codes.push_back(src.codes[r]);
    }
    if (!src.raw.empty()) {
      dst.raw.reserve(rows.size());
      for (auto r : rows) dst.raw.push_back(src.raw[r]);
    }
  }
  return Frame(schema_, std::move(cols), rows.size());
}

bool Frame::operator==(const Frame& other) const {
  if (n_rows_ != other.n_rows_ || schema_.size() != other.schema_.size()) return false;
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    const auto& a = schema_[c];
    const auto& b = other.schema_[c];
    if (a.name != b.name || a.kind != b.kind || a.role != b.role) return false;
    const Column& x = columns_[c];
    const Column& y = other.columns_[c];
    if (a.role == ColumnRole::Ignored) {
      if (x.raw != y.raw) return false;
    } else if (a.kind == ColumnKind::Numeric) {
      for (std::size_t r = 0; r < n_rows_; ++r) {
        if (bits_of(x.numeric[r]) != bits_of(y.numeric[r])) return false;
      }
    } else {
      for (std::size_t r = 0; r < n_rows_; ++r) {
        if (x.levels[x.codes[r]] != y.levels[y.codes[r]]) return false;
      }
    }
  }
  return true;
}

Frame parse_delimited(std::string_view text, const Schema& schema, char delimiter) {
  validate_schema(schema);
  std::vector<std::string_view> lines;
  {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      ++line_no;
      if (!line.empty() || lines.empty()) lines.push_back(line);
      pos = end + 1;
    }
  }
  if (lines.empty() || lines.front().empty()) fail(ErrorKind::EmptyFile, "file has no header row");

  const auto header = split_record(lines.front(), delimiter, 1);
  std::unordered_map<std::string, std::size_t> pos_of;
  for (std::size_t i = 0; i < header.size(); ++i) pos_of.emplace(header[i], i);

  std::vector<std::size_t> src_pos(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = pos_of.find(schema[c].name);
    if (it == pos_of.end()) {
      fail(ErrorKind::MissingColumn, "column '" + schema[c].name + "' not found in header");
    }
    src_pos[c] = it->second;
  }

  const std::size_t n_rows = lines.size() - 1;
  if (n_rows == 0) fail(ErrorKind::EmptyFile, "file has a header but no data rows");

  std::vector<Column> cols(schema.size());
  std::vector<std::unordered_map<std::string, std::int32_t>> level_index(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& cs = schema[c];
    if (cs.role == ColumnRole::Ignored) {
      cols[c].raw.reserve(n_rows);
    } else if (cs.kind == ColumnKind::Numeric) {
      cols[c].numeric.reserve(n_rows);
    } else {
      cols[c].codes.reserve(n_rows);
      if (cs.levels) {
        cols[c].levels = *cs.levels;
        for (std::size_t l = 0; l < cs.levels->size(); ++l) {
          level_index[c].emplace((*cs.levels)[l], static_cast<std::int32_t>(l));
        }
      }
    }
  }

  for (std::size_t r = 0; r < n_rows; ++r) {
    const std::size_t line_no = r + 2;
    const auto fields = split_record(lines[r + 1], delimiter, line_no);
    if (fields.size() != header.size()) {
      fail(ErrorKind::BadCell, "line " + std::to_string(line_no) + " has " +
                                   std::to_string(fields.size()) + " fields, header has " +
                                   std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& cs = schema[c];
      const std::string& cell = fields[src_pos[c]];
      if (cs.role == ColumnRole::Ignored) {
        cols[c].raw.push_back(cell);
        continue;
      }
      if (cell.empty()) {
        fail(ErrorKind::BadCell, "empty cell in column '" + cs.name + "' on line " +
                                     std::to_string(line_no));
      }
      if (cs.kind == ColumnKind::Numeric) {
        auto v = parse_real(cell);
        if (!v) {
          fail(ErrorKind::BadCell, "unparsable number '" + cell + "' in column '" + cs.name +
                                       "' on line " + std::to_string(line_no));
        }
        cols[c].numeric.push_back(*v);
      } else {
        auto [it, inserted] =
            level_index[c].try_emplace(cell, static_cast<std::int32_t>(cols[c].levels.size()));
        if (inserted) {
          if (cs.levels) {
            fail(ErrorKind::BadCell, "level '" + cell + "' not in pinned levels of column '" +
                                         cs.name + "' (line " + std::to_string(line_no) + ")");
          }
          cols[c].levels.push_back(cell);
        }
        cols[c].codes.push_back(it->second);
      }
    }
  }

  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].role == ColumnRole::Target && cols[c].levels.size() > 2) {
      fail(ErrorKind::BadCell, "target column '" + schema[c].name + "' has more than 2 levels");
    }
  }
  return Frame(schema, std::move(cols), n_rows);
}

Frame load_delimited(const std::filesystem::path& path, const Schema& schema, char delimiter) {
  return parse_delimited(read_file(path), schema, delimiter);
}

std::string to_delimited(const Frame& frame, char delimiter) {
  const auto& schema = frame.schema();
  std::string out;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out.push_back(delimiter);
    append_field(out, schema[c].name, delimiter);
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < frame.n_rows(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (c) out.push_back(delimiter);
      const Column& col = frame.columns()[c];
      if (schema[c].role == ColumnRole::Ignored) {
        append_field(out, col.raw[r], delimiter);
      } else if (schema[c].kind == ColumnKind::Numeric) {
        out += format_real(col.numeric[r]);
      } else {
        append_field(out, col.levels[col.codes[r]], delimiter);
      }
    }
    out.push_back('\n');
  }
  return out;
}

void write_delimited(const std::filesystem::path& path, const Frame& frame, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  const std::string text = to_delimited(frame, delimiter);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Balancing and splitting
// ---------------------------------------------------------------------------

Frame under_sample(const Frame& frame, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  const auto& y = frame.target();
  for (std::size_t r = 0; r < frame.n_rows(); ++r) by_class[y[r]].push_back(r);
  if (by_class[0].empty() || by_class[1].empty()) {
    fail(ErrorKind::SingleClass, "under-sampling needs both target classes present");
  }
  const int majority = by_class[0].size() >= by_class[1].size() ? 0 : 1;
  auto& major = by_class[majority];
  const auto& minor = by_class[1 - majority];
  Rng rng(derive_seed(seed, {0x756e646572ULL}));
  rng.shuffle(major);
  major.resize(minor.size());
  std::vector<std::size_t> keep;
  keep.reserve(2 * minor.size());
  keep.insert(keep.end(), major.begin(), major.end());
  keep.insert(keep.end(), minor.begin(), minor.end());
  std::sort(keep.begin(), keep.end());
  return frame.take_rows(keep);
}

namespace {

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) {
    fail(ErrorKind::InvalidArgument, "train_fraction must lie strictly between 0 and 1");
  }
}

SplitIndices finish_split(std::vector<std::size_t> train, std::vector<std::size_t> test,
                          std::uint64_t seed, double f) {
  if (train.empty() || test.empty()) {
    fail(ErrorKind::DegenerateSplit, "split would leave the train or test side empty");
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test), seed, f};
}

}  // namespace

SplitIndices stratified_split(const Frame& frame, double train_fraction, std::uint64_t seed) {
  check_fraction(train_fraction);
  std::vector<std::size_t> rows[2];
  const auto& y = frame.target();
  for (std::size_t r = 0; r < frame.n_rows(); ++r) rows[y[r]].push_back(r);

  // Largest-remainder quotas: per-class floor, then the leftover rows needed to
  // reach round(f * n) go to the classes with the largest fractional parts.
  const auto total = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(frame.n_rows())));
  std::size_t quota[2];
  double frac[2];
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = train_fraction * static_cast<double>(rows[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::size_t leftover = total > assigned ? total - assigned : 0;
  const int order[2] = {frac[1] > frac[0] ? 1 : 0, frac[1] > frac[0] ? 0 : 1};
  for (int c : order) {
    if (leftover > 0 && quota[c] < rows[c].size()) {
      ++quota[c];
      --leftover;
    }
  }

  std::vector<std::size_t> train, test;
  for (int c = 0; c < 2; ++c) {
    Rng rng(derive_seed(seed, {0x73706c6974ULL, static_cast<std::uint64_t>(c)}));
    rng.shuffle(rows[c]);
    train.insert(train.end(), rows[c].begin(), rows[c].begin() + quota[c]);
    test.insert(test.end(), rows[c].begin() + quota[c], rows[c].end());
  }
  return finish_split(std::move(train), std::move(test), seed, train_fraction);
}

SplitIndices random_split(const Frame& frame, double train_fraction, std::uint64_t seed) {
  check_fraction(train_fraction);
  std::vector<std::size_t> rows(frame.n_rows());
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(derive_seed(seed, {0x73706c6974ULL, 2}));
  rng.shuffle(rows);
  const auto k = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(frame.n_rows())));
  std::vector<std::size_t> train(rows.begin(), rows.begin() + k);
  std::vector<std::size_t> test(rows.begin() + k, rows.end());
  return finish_split(std::move(train), std::move(test), seed, train_fraction);
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

OneHotEncoder OneHotEncoder::fit(const Frame& train) {
  OneHotEncoder enc;
  const auto& schema = train.schema();
  for (std::size_t c : train.feature_indices()) {
    const auto& cs = schema[c];
    Feature f{cs.name, cs.label(), cs.kind, {}};
    if (cs.kind == ColumnKind::Categorical) {
      if (cs.levels) {
        f.levels = *cs.levels;
      } else {
        const Column& col = train.columns()[c];
        std::vector<bool> seen(col.levels.size(), false);
        for (auto code : col.codes) seen[code] = true;
        for (std::size_t l = 0; l < col.levels.size(); ++l) {
          if (seen[l]) f.levels.push_back(col.levels[l]);
        }
        std::sort(f.levels.begin(), f.levels.end());
      }
    }
    enc.features_.push_back(std::move(f));
  }
  if (enc.features_.empty()) fail(ErrorKind::InvalidArgument, "frame has no feature columns");
  return enc;
}

std::size_t OneHotEncoder::width() const {
  std::size_t w = 0;
  for (const auto& f : features_) w += f.kind == ColumnKind::Numeric ? 1 : f.levels.size();
  return w;
}

EncodedMatrix OneHotEncoder::transform(const Frame& frame) const {
  EncodedMatrix out;
  const std::size_t n = frame.n_rows();
  const std::size_t width = this->width();
  out.values = Matrix(n, width, 0.0);

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t c = 0; c < frame.schema().size(); ++c) col_of.emplace(frame.schema()[c].name, c);

  std::size_t base = 0;
  for (std::size_t fi = 0; fi < features_.size(); ++fi) {
    const Feature& f = features_[fi];
    out.feature_names.push_back(f.name);
    out.feature_labels.push_back(f.label);
    out.feature_levels.push_back(f.levels);
    auto it = col_of.find(f.name);
    if (it == col_of.end()) fail(ErrorKind::MissingColumn, "frame lacks feature '" + f.name + "'");
    const Column& col = frame.columns()[it->second];
    if (f.kind == ColumnKind::Numeric) {
      out.col_names.push_back(f.name);
      out.source_of.push_back(fi);
      for (std::size_t r = 0; r < n; ++r) out.values(r, base) = col.numeric[r];
      base += 1;
      continue;
    }
    for (const auto& level : f.levels) {
      out.col_names.push_back(f.name + "=" + level);
      out.source_of.push_back(fi);
    }
    std::unordered_map<std::string, std::size_t> enc_index;
    for (std::size_t l = 0; l < f.levels.size(); ++l) enc_index.emplace(f.levels[l], l);
    std::vector<std::ptrdiff_t> remap(col.levels.size(), -1);
    for (std::size_t l = 0; l < col.levels.size(); ++l) {
      auto e = enc_index.find(col.levels[l]);
      if (e != enc_index.end()) remap[l] = static_cast<std::ptrdiff_t>(e->second);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto idx = remap[col.codes[r]];
      if (idx < 0) {
        fail(ErrorKind::BadCell, "level '" + col.levels[col.codes[r]] + "' of feature '" +
                                     f.name + "' was not seen when the encoder was fit");
      }
      out.values(r, base + static_cast<std::size_t>(idx)) = 1.0;
    }
    base += f.levels.size();
  }

  const auto& t = frame.target();
  out.target.assign(t.begin(), t.end());
  return out;
}

std::vector<std::vector<std::size_t>> EncodedMatrix::feature_blocks() const {
  std::vector<std::vector<std::size_t>> blocks(feature_names.size());
  for (std::size_t c = 0; c < source_of.size(); ++c) blocks[source_of[c]].push_back(c);
  return blocks;
}

EncodedMatrix EncodedMatrix::take_rows(std::span<const std::size_t> rows) const {
  EncodedMatrix out;
  out.values = values.take_rows(rows);
  out.col_names = col_names;
  out.source_of = source_of;
  out.feature_names = feature_names;
  out.feature_labels = feature_labels;
  out.feature_levels = feature_levels;
  out.target.reserve(rows.size());
  for (auto r : rows) out.target.push_back(target[r]);
  return out;
}

namespace {

std::size_t first_column_of(const EncodedMatrix& m, std::size_t feature) {
  auto it = std::find(m.source_of.begin(), m.source_of.end(), feature);
  return static_cast<std::size_t>(it - m.source_of.begin());
}

}  // namespace

double feature_value(const EncodedMatrix& m, std::size_t row, std::size_t feature) {
  const std::size_t c0 = first_column_of(m, feature);
  const auto& levels = m.feature_levels[feature];
  if (levels.empty()) return m.values(row, c0);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (m.values(row, c0 + l) == 1.0) return static_cast<double>(l);
  }
  return 0.0;
}

std::string feature_value_text(const EncodedMatrix& m, std::size_t row, std::size_t feature) {
  const auto& levels = m.feature_levels[feature];
  const double v = feature_value(m, row, feature);
  if (levels.empty()) return format_real(v);
  return levels[static_cast<std::size_t>(v)];
}

std::uint64_t fingerprint(const Frame& frame) { return fnv1a64(to_delimited(frame, ',')); }

}  // namespace credalens::data
