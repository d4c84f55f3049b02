#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "credalens/core.hpp"

namespace credalens::data {

enum class ColumnKind { Numeric, Categorical };
enum class ColumnRole { Feature, Target, Ignored };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  ColumnRole role = ColumnRole::Feature;
  std::optional<std::vector<std::string>> levels;  // categorical only; pins level order
  std::optional<std::string> display_name;

  const std::string& label() const { return display_name ? *display_name : name; }
};

using Schema = std::vector<ColumnSchema>;

// Throws InvalidConfig unless the schema has exactly one categorical target
// with two pinned or observable levels, unique names, and no levels on numeric
// columns.
void validate_schema(const Schema& schema);

Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(std::string_view json_text);

// One stored column. Categorical cells are indices into `levels`; ignored
// columns keep their raw text so a Frame can be written back losslessly.
struct Column {
  std::vector<double> numeric;
  std::vector<std::int32_t> codes;
  std::vector<std::string> levels;
  std::vector<std::string> raw;
};

class Frame {
 public:
  Frame() = default;
  Frame(Schema schema, std::vector<Column> columns, std::size_t n_rows);

  const Schema& schema() const noexcept { return schema_; }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  std::size_t n_rows() const noexcept { return n_rows_; }

  std::size_t target_index() const noexcept { return target_; }
  // Target codes (0/1), level 1 being the second target level.
  const std::vector<std::int32_t>& target() const { return columns_[target_].codes; }
  std::vector<std::size_t> feature_indices() const;
  std::size_t class_count(int cls) const;

  // Rows in the given order; level dictionaries are shared with the parent.
  Frame take_rows(std::span<const std::size_t> rows) const;

  bool operator==(const Frame&) const;

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t n_rows_ = 0;
  std::size_t target_ = 0;
};

Frame load_delimited(const std::filesystem::path& path, const Schema& schema, char delimiter = ',');
Frame parse_delimited(std::string_view text, const Schema& schema, char delimiter = ',');

// Inverse of load_delimited: header + rows, reals at 17 significant digits.
std::string to_delimited(const Frame& frame, char delimiter = ',');
void write_delimited(const std::filesystem::path& path, const Frame& frame, char delimiter = ',');

// Keeps every minority row plus an equal-sized uniform sample of the majority
// class, in original relative order.
Frame under_sample(const Frame& frame, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train_rows;  // ascending
  std::vector<std::size_t> test_rows;   // ascending
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

SplitIndices stratified_split(const Frame& frame, double train_fraction, std::uint64_t seed);
// Unstratified variant behind --no-stratify.
SplitIndices random_split(const Frame& frame, double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// One-hot encoding
// ---------------------------------------------------------------------------

struct EncodedMatrix {
  Matrix values;
  std::vector<std::string> col_names;       // "<feature>=<level>" or feature name
  std::vector<std::size_t> source_of;       // encoded column -> index into feature_names
  std::vector<std::string> feature_names;   // source features, schema order
  std::vector<std::string> feature_labels;  // display names (fallback: name)
  std::vector<std::vector<std::string>> feature_levels;  // empty for numeric features
  std::vector<int> target;                  // 0/1

  std::size_t width() const noexcept { return values.cols(); }
  std::size_t n_rows() const noexcept { return values.rows(); }
  // Encoded columns per source feature, in feature order.
  std::vector<std::vector<std::size_t>> feature_blocks() const;
  EncodedMatrix take_rows(std::span<const std::size_t> rows) const;
};

// Encoder fit on a (training) frame: categorical levels are the schema-pinned
// list when present, otherwise the observed levels sorted lexicographically.
class OneHotEncoder {
 public:
  static OneHotEncoder fit(const Frame& train);

  // Throws BadCell for a categorical level the encoder has not seen.
  EncodedMatrix transform(const Frame& frame) const;

  struct Feature {
    std::string name;
    std::string label;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> levels;
  };
  const std::vector<Feature>& features() const noexcept { return features_; }
  std::size_t width() const;

 private:
  std::vector<Feature> features_;
};

inline EncodedMatrix one_hot_encode(const Frame& frame) {
  return OneHotEncoder::fit(frame).transform(frame);
}

// Source-feature value of a row rendered as text (level or %.17g real).
std::string feature_value_text(const EncodedMatrix& m, std::size_t row, std::size_t feature);
// Source-feature value of a row as a number: the real itself, or the level
// index for categoricals.
double feature_value(const EncodedMatrix& m, std::size_t row, std::size_t feature);

// 64-bit content fingerprint of a frame (schema names + cells).
std::uint64_t fingerprint(const Frame& frame);

}  // namespace credalens::data
