#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "credalens/learners.hpp"

namespace credalens::learners {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<RowMat>;
using ConstWeightMap = Eigen::Map<const RowMat>;

// Standardized copy of the selected rows.
RowMat standardize(const MlpModel& m, const Matrix& X, std::span<const std::size_t> rows) {
  const auto w = static_cast<Eigen::Index>(m.width());
  RowMat Z(static_cast<Eigen::Index>(rows.size()), w);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto x = X.row(rows[i]);
    for (Eigen::Index c = 0; c < w; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      Z(static_cast<Eigen::Index>(i), c) = (x[cu] - m.means[cu]) / m.stddevs[cu];
    }
  }
  return Z;
}

struct Forward {
  std::vector<RowMat> act;  // act[0] = input, act[l+1] = output of layer l (post-activation for hidden)
  Eigen::VectorXd logits;
};

Forward forward(const MlpModel& m, RowMat input) {
  Forward f;
  f.act.push_back(std::move(input));
  const std::size_t L = m.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = m.layers[l];
    ConstWeightMap W(layer.weights.data(), static_cast<Eigen::Index>(layer.out),
                     static_cast<Eigen::Index>(layer.in));
    Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data(), static_cast<Eigen::Index>(layer.out));
    RowMat z = f.act.back().lazyProduct(W.transpose());
    z.rowwise() += b;
    if (l + 1 < L) z = z.cwiseMax(0.0);
    f.act.push_back(std::move(z));
  }
  f.logits = f.act.back().col(0);
  return f;
}

double bce_from_logit(double z, int y) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - (y ? z : 0.0);
}

std::size_t param_count(const MlpModel& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += l.weights.size() + l.bias.size();
  return n;
}

// Loss and flat gradient on already-standardized rows Z with labels y.
MlpLossGrad loss_grad(const MlpModel& m, RowMat Z, std::span<const int> y) {
  const auto B = static_cast<double>(Z.rows());
  Forward f = forward(m, std::move(Z));
  MlpLossGrad out;
  out.grad.assign(param_count(m), 0.0);

  double loss = 0.0;
  RowMat delta(f.logits.size(), 1);
  for (Eigen::Index i = 0; i < f.logits.size(); ++i) {
    const int yi = y[static_cast<std::size_t>(i)];
    loss += bce_from_logit(f.logits[i], yi);
    delta(i, 0) = (sigmoid(f.logits[i]) - yi) / B;
  }
  loss /= B;
  double penalty = 0.0;
  for (const auto& l : m.layers) {
    for (double w : l.weights) penalty += w * w;
  }
  out.loss = loss + 0.5 * m.l2 * penalty;

  // Offsets of each layer's block in the flat vector.
  std::vector<std::size_t> offset(m.layers.size());
  std::size_t off = 0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    offset[l] = off;
    off += m.layers[l].weights.size() + m.layers[l].bias.size();
  }

  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    const auto out_n = static_cast<Eigen::Index>(layer.out);
    const auto in_n = static_cast<Eigen::Index>(layer.in);
    WeightMap gW(out.grad.data() + offset[li], out_n, in_n);
    Eigen::Map<Eigen::RowVectorXd> gb(out.grad.data() + offset[li] + layer.weights.size(), out_n);
    ConstWeightMap W(layer.weights.data(), out_n, in_n);
    gW = delta.transpose() * f.act[li];
    gW += m.l2 * W;
    gb = delta.colwise().sum();
    if (li > 0) {
      RowMat prev = delta * W;
      // ReLU derivative of the previous layer's output.
      prev = prev.cwiseProduct((f.act[li].array() > 0.0).cast<double>().matrix());
      delta = std::move(prev);
    }
  }
  return out;
}

}  // namespace

std::vector<double> MlpModel::predict(const Matrix& X) const {
  std::vector<std::size_t> rows(X.rows());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> out(X.rows());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, rows.size() - start);
    Forward f = forward(*this, standardize(*this, X, std::span(rows).subspan(start, len)));
    for (std::size_t i = 0; i < len; ++i) out[start + i] = sigmoid(f.logits[static_cast<Eigen::Index>(i)]);
  }
  return out;
}

std::vector<double> mlp_flatten(const MlpModel& model) {
  std::vector<double> out;
  out.reserve(param_count(model));
  for (const auto& l : model.layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void mlp_unflatten(MlpModel& model, std::span<const double> params) {
  std::size_t off = 0;
  for (auto& l : model.layers) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), l.weights.size(), l.weights.begin());
    off += l.weights.size();
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(off), l.bias.size(), l.bias.begin());
    off += l.bias.size();
  }
}

MlpLossGrad mlp_loss_and_gradient(const MlpModel& model, const Matrix& X, std::span<const int> y) {
  if (X.cols() != model.width()) throw Error(ErrorKind::WidthMismatch, "MLP input width mismatch");
  std::vector<std::size_t> rows(X.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return loss_grad(model, standardize(model, X, rows), y);
}

MlpModel fit_mlp(const Matrix& X, std::span<const int> y, const MlpParams& params,
                 std::uint64_t seed) {
  const std::size_t n = X.rows();
  const std::size_t width = X.cols();
  if (n == 0 || y.size() != n) throw Error(ErrorKind::InvalidArgument, "MLP needs matching, non-empty X and y");
  if (params.epochs < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (params.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (params.hidden_sizes.empty()) throw Error(ErrorKind::InvalidArgument, "hidden_sizes must be non-empty");
  for (int h : params.hidden_sizes) {
    if (h < 1) throw Error(ErrorKind::InvalidArgument, "hidden layer sizes must be >= 1");
  }

  MlpModel m;
  m.hidden_sizes = params.hidden_sizes;
  m.epochs = params.epochs;
  m.batch_size = params.batch_size;
  m.learning_rate = params.learning_rate;
  m.l2 = params.l2;
  m.seed = seed;
  m.means.assign(width, 0.0);
  m.stddevs.assign(width, 1.0);
  for (std::size_t c = 0; c < width; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += X(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (X(r, c) - mean) * (X(r, c) - mean);
    var /= static_cast<double>(n);
    m.means[c] = mean;
    bool constant = true;
    for (std::size_t r = 1; r < n && constant; ++r) constant = X(r, c) == X(0, c);
    m.stddevs[c] = !constant && var > 0.0 ? std::sqrt(var) : 1.0;
  }

  // He-style uniform initialization.
  Rng init_rng(derive_seed(seed, {0x696e6974ULL}));
  std::size_t fan_in = width;
  std::vector<std::size_t> sizes(params.hidden_sizes.begin(), params.hidden_sizes.end());
  sizes.push_back(1);
  for (std::size_t out_n : sizes) {
    DenseLayer layer;
    layer.in = fan_in;
    layer.out = out_n;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    layer.weights.resize(out_n * fan_in);
    for (auto& w : layer.weights) w = init_rng.uniform(-limit, limit);
    layer.bias.assign(out_n, 0.0);
    m.layers.push_back(std::move(layer));
    fan_in = out_n;
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const RowMat Zall = standardize(m, X, all);

  std::vector<double> theta = mlp_flatten(m);
  std::vector<double> velocity(theta.size(), 0.0);
  constexpr double kMomentum = 0.9;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(params.batch_size);
  std::vector<int> yb;

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      RowMat Zb(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(width));
      yb.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        Zb.row(static_cast<Eigen::Index>(i)) = Zall.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = y[order[start + i]];
      }
      MlpLossGrad lg = loss_grad(m, std::move(Zb), yb);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorKind::NonFinite, "MLP loss became non-finite (learning rate too high?)");
      }
      for (std::size_t k = 0; k < theta.size(); ++k) {
        velocity[k] = kMomentum * velocity[k] - params.learning_rate * lg.grad[k];
        theta[k] += velocity[k];
      }
      mlp_unflatten(m, theta);
    }
  }
  for (double t : theta) {
    if (!std::isfinite(t)) throw Error(ErrorKind::NonFinite, "MLP weights became non-finite");
  }
  return m;
}

}  // namespace credalens::learners
