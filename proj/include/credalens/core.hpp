#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace credalens {

inline constexpr std::string_view kEngineVersion = "credalens 0.1.0";

enum class ErrorKind {
  MissingColumn,
  BadCell,
  EmptyFile,
  MissingFile,
  SingleClass,
  DegenerateSplit,
  NonFinite,
  WidthMismatch,
  TooFewRows,
  TooManyFeatures,
  InvalidSampleCount,
  InvalidArgument,
  InvalidConfig,
  IoFailure,
};

std::string_view to_string(ErrorKind kind);

// All recoverable failures in the engine surface as this exception; callers
// switch on kind() (the CLI maps kinds onto exit codes).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix take_rows(std::span<const std::size_t> idx) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Randomness. Every stochastic step draws from an Rng seeded by derive_seed(),
// so results depend only on (master seed, work-unit coordinates) and never on
// scheduling. Distributions are implemented here because the std:: ones are
// implementation-defined.
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);

// Order-sensitive mix of a seed with any number of coordinates.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), unbiased.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& v) { shuffle(std::span<T>(v)); }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

// 0 means "available parallelism".
unsigned resolve_threads(unsigned requested);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work units must write
// to disjoint outputs. If any unit throws, the exception from the lowest index
// is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

// Numerics shared across modules.
double sigmoid(double z);
double logit(double p);

std::string format_real(double v);  // %.17g

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace credalens
