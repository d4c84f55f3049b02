#include "credalens/model_io.hpp"

namespace credalens::learners {

using nlohmann::json;

namespace {

json tree_to_json(const DecisionTree& t) {
  json j;
  j["max_depth"] = t.max_depth;
  std::vector<std::int32_t> split_col, left, right;
  std::vector<double> threshold, leaf_value, gain;
  std::vector<std::uint32_t> n_samples;
  for (const auto& n : t.nodes) {
    split_col.push_back(n.split_col);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    leaf_value.push_back(n.leaf_value);
    gain.push_back(n.gain);
    n_samples.push_back(n.n_samples);
  }
  j["split_col"] = split_col;
  j["threshold"] = threshold;
  j["left"] = left;
  j["right"] = right;
  j["leaf_value"] = leaf_value;
  j["gain"] = gain;
  j["n_samples"] = n_samples;
  return j;
}

DecisionTree tree_from_json(const json& j) {
  DecisionTree t;
  t.max_depth = j.at("max_depth").get<int>();
  const auto split_col = j.at("split_col").get<std::vector<std::int32_t>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<std::int32_t>>();
  const auto right = j.at("right").get<std::vector<std::int32_t>>();
  const auto leaf_value = j.at("leaf_value").get<std::vector<double>>();
  const auto gain = j.at("gain").get<std::vector<double>>();
  const auto n_samples = j.at("n_samples").get<std::vector<std::uint32_t>>();
  const std::size_t n = split_col.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || leaf_value.size() != n ||
      gain.size() != n || n_samples.size() != n || n == 0) {
    throw Error(ErrorKind::InvalidArgument, "tree arrays have inconsistent lengths");
  }
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = t.nodes[i];
    node.split_col = split_col[i];
    node.threshold = threshold[i];
    node.left = left[i];
    node.right = right[i];
    node.leaf_value = leaf_value[i];
    node.gain = gain[i];
    node.n_samples = n_samples[i];
    if (!node.is_leaf()) {
      const auto ok = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(n); };
      if (!ok(node.left) || !ok(node.right)) {
        throw Error(ErrorKind::InvalidArgument, "tree child index out of range");
      }
    }
  }
  return t;
}

json trees_to_json(const std::vector<DecisionTree>& trees) {
  json arr = json::array();
  for (const auto& t : trees) arr.push_back(tree_to_json(t));
  return arr;
}

std::vector<DecisionTree> trees_from_json(const json& arr) {
  std::vector<DecisionTree> out;
  for (const auto& t : arr) out.push_back(tree_from_json(t));
  return out;
}

}  // namespace

json hyperparams_to_json(const Hyperparams& hp) {
  json j;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GlmParams>) {
          j = {{"l2", p.l2}, {"non_negative", p.non_negative}, {"standardize", p.standardize},
               {"max_iter", p.max_iter}, {"tol", p.tol}};
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          j = {{"n_trees", p.n_trees}, {"max_depth", p.max_depth}, {"mtry", p.mtry},
               {"min_leaf", p.min_leaf}};
        } else if constexpr (std::is_same_v<T, GbmParams>) {
          j = {{"n_rounds", p.n_rounds}, {"learning_rate", p.learning_rate},
               {"max_depth", p.max_depth}, {"min_leaf", p.min_leaf},
               {"subsample_rows", p.subsample_rows}, {"subsample_cols", p.subsample_cols}};
        } else {
          j = {{"hidden_sizes", p.hidden_sizes}, {"epochs", p.epochs},
               {"batch_size", p.batch_size}, {"learning_rate", p.learning_rate}, {"l2", p.l2}};
        }
      },
      hp);
  return j;
}

Hyperparams hyperparams_from_json(ModelFamily family, const json& j) {
  switch (family) {
    case ModelFamily::GLM: {
      GlmParams p;
      p.l2 = j.at("l2").get<double>();
      p.non_negative = j.at("non_negative").get<bool>();
      p.standardize = j.at("standardize").get<bool>();
      p.max_iter = j.at("max_iter").get<int>();
      p.tol = j.at("tol").get<double>();
      return p;
    }
    case ModelFamily::DRF:
    case ModelFamily::XRT: {
      ForestParams p;
      p.n_trees = j.at("n_trees").get<int>();
      p.max_depth = j.at("max_depth").get<int>();
      p.mtry = j.at("mtry").get<int>();
      p.min_leaf = j.at("min_leaf").get<int>();
      return p;
    }
    case ModelFamily::GBM: {
      GbmParams p;
      p.n_rounds = j.at("n_rounds").get<int>();
      p.learning_rate = j.at("learning_rate").get<double>();
      p.max_depth = j.at("max_depth").get<int>();
      p.min_leaf = j.at("min_leaf").get<int>();
      p.subsample_rows = j.at("subsample_rows").get<double>();
      p.subsample_cols = j.at("subsample_cols").get<double>();
      return p;
    }
    case ModelFamily::DL: {
      MlpParams p;
      p.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
      p.epochs = j.at("epochs").get<int>();
      p.batch_size = j.at("batch_size").get<int>();
      p.learning_rate = j.at("learning_rate").get<double>();
      p.l2 = j.at("l2").get<double>();
      return p;
    }
  }
  return GlmParams{};
}

json glm_to_json(const GlmModel& m) {
  return {{"coefficients", m.coefficients}, {"intercept", m.intercept}, {"l2", m.l2},
          {"non_negative", m.non_negative}, {"means", m.means},     {"stddevs", m.stddevs},
          {"iterations", m.iterations}};
}

GlmModel glm_from_json(const json& j) {
  GlmModel m;
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  m.intercept = j.at("intercept").get<double>();
  m.l2 = j.at("l2").get<double>();
  m.non_negative = j.at("non_negative").get<bool>();
  m.means = j.at("means").get<std::vector<double>>();
  m.stddevs = j.at("stddevs").get<std::vector<double>>();
  m.iterations = j.at("iterations").get<int>();
  if (m.means.size() != m.coefficients.size() || m.stddevs.size() != m.coefficients.size()) {
    throw Error(ErrorKind::InvalidArgument, "GLM arrays have inconsistent lengths");
  }
  return m;
}

json model_to_json(const FittedModel& model) {
  json j;
  j["family"] = std::string(to_string(model.family));
  j["id"] = model.id;
  j["seed"] = model.train_seed;
  j["width"] = model.width;
  j["hyperparams"] = hyperparams_to_json(model.hyperparams);
  json payload;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          payload = glm_to_json(p);
        } else if constexpr (std::is_same_v<T, ForestModel>) {
          payload = {{"mode", p.mode == ForestMode::DRF ? "DRF" : "XRT"},
                     {"mtry", p.mtry},
                     {"min_leaf", p.min_leaf},
                     {"max_depth", p.max_depth},
                     {"bootstrap", p.bootstrap},
                     {"per_tree_seeds", p.per_tree_seeds},
                     {"trees", trees_to_json(p.trees)}};
        } else if constexpr (std::is_same_v<T, GbmModel>) {
          payload = {{"base_score", p.base_score},
                     {"learning_rate", p.learning_rate},
                     {"n_rounds", p.n_rounds},
                     {"degenerate_prior", p.degenerate_prior},
                     {"trees", trees_to_json(p.trees)}};
        } else {
          json layers = json::array();
          for (const auto& l : p.layers) {
            layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
          }
          payload = {{"hidden_sizes", p.hidden_sizes}, {"activation", "relu"},
                     {"output", "sigmoid"},            {"means", p.means},
                     {"stddevs", p.stddevs},           {"epochs", p.epochs},
                     {"batch_size", p.batch_size},     {"learning_rate", p.learning_rate},
                     {"l2", p.l2},                     {"seed", p.seed},
                     {"layers", layers}};
        }
      },
      model.payload);
  j["payload"] = std::move(payload);
  return j;
}

FittedModel model_from_json(const json& j) {
  try {
    FittedModel m;
    m.family = family_from_string(j.at("family").get<std::string>());
    m.id = j.at("id").get<std::string>();
    m.train_seed = j.at("seed").get<std::uint64_t>();
    m.width = j.at("width").get<std::size_t>();
    m.hyperparams = hyperparams_from_json(m.family, j.at("hyperparams"));
    const json& p = j.at("payload");
    switch (m.family) {
      case ModelFamily::GLM:
        m.payload = glm_from_json(p);
        break;
      case ModelFamily::DRF:
      case ModelFamily::XRT: {
        ForestModel f;
        f.mode = p.at("mode").get<std::string>() == "DRF" ? ForestMode::DRF : ForestMode::XRT;
        f.mtry = p.at("mtry").get<int>();
        f.min_leaf = p.at("min_leaf").get<int>();
        f.max_depth = p.at("max_depth").get<int>();
        f.bootstrap = p.at("bootstrap").get<bool>();
        f.per_tree_seeds = p.at("per_tree_seeds").get<std::vector<std::uint64_t>>();
        f.trees = trees_from_json(p.at("trees"));
        f.width = m.width;
        m.payload = std::move(f);
        break;
      }
      case ModelFamily::GBM: {
        GbmModel g;
        g.base_score = p.at("base_score").get<double>();
        g.learning_rate = p.at("learning_rate").get<double>();
        g.n_rounds = p.at("n_rounds").get<int>();
        g.degenerate_prior = p.at("degenerate_prior").get<bool>();
        g.trees = trees_from_json(p.at("trees"));
        g.width = m.width;
        m.payload = std::move(g);
        break;
      }
      case ModelFamily::DL: {
        MlpModel mlp;
        mlp.hidden_sizes = p.at("hidden_sizes").get<std::vector<int>>();
        mlp.means = p.at("means").get<std::vector<double>>();
        mlp.stddevs = p.at("stddevs").get<std::vector<double>>();
        mlp.epochs = p.at("epochs").get<int>();
        mlp.batch_size = p.at("batch_size").get<int>();
        mlp.learning_rate = p.at("learning_rate").get<double>();
        mlp.l2 = p.at("l2").get<double>();
        mlp.seed = p.at("seed").get<std::uint64_t>();
        std::size_t in = mlp.means.size();
        for (const auto& lj : p.at("layers")) {
          DenseLayer l;
          l.in = lj.at("in").get<std::size_t>();
          l.out = lj.at("out").get<std::size_t>();
          l.weights = lj.at("weights").get<std::vector<double>>();
          l.bias = lj.at("bias").get<std::vector<double>>();
          if (l.in != in || l.weights.size() != l.in * l.out || l.bias.size() != l.out) {
            throw Error(ErrorKind::InvalidArgument, "MLP layer dimensions are not chain-consistent");
          }
          in = l.out;
          mlp.layers.push_back(std::move(l));
        }
        if (in != 1) throw Error(ErrorKind::InvalidArgument, "MLP must end in a single output");
        m.payload = std::move(mlp);
        break;
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace credalens::learners
