#include <algorithm>
#include <cmath>
#include <numeric>

#include "credalens/automl.hpp"

namespace credalens::automl {

std::string_view to_string(SortMetric m) { return m == SortMetric::AUC ? "AUC" : "LogLoss"; }

SortMetric sort_metric_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "auc") return SortMetric::AUC;
  if (lower == "logloss") return SortMetric::LogLoss;
  throw Error(ErrorKind::InvalidConfig, "unknown sort metric '" + std::string(s) + "' (expected AUC or LogLoss)");
}

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::InvalidArgument, "auc: labels and scores differ in length");
  }
  std::uint64_t pos = 0;
  for (int v : labels) pos += v == 1;
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorKind::SingleClass, "auc needs both classes");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney count, accumulated exactly in integers over tie groups.
  std::uint64_t twice_wins = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? gp : gn) += 1;
      ++j;
    }
    twice_wins += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double log_loss(std::span<const int> labels, std::span<const double> scores, double eps) {
  if (labels.size() != scores.size() || labels.empty()) {
    throw Error(ErrorKind::InvalidArgument, "log_loss: labels and scores must be non-empty and equal length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error(ErrorKind::NonFinite, "log_loss: non-finite score");
    const double p = std::clamp(scores[i], eps, 1.0 - eps);
    s -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return s / static_cast<double>(labels.size());
}

double metric_value(SortMetric m, std::span<const int> labels, std::span<const double> scores) {
  return m == SortMetric::AUC ? auc(labels, scores) : log_loss(labels, scores);
}

bool better(SortMetric m, double a, double b) { return m == SortMetric::AUC ? a > b : a < b; }

// ---------------------------------------------------------------------------
// Leaderboard
// ---------------------------------------------------------------------------

const LeaderboardEntry& Leaderboard::leader() const {
  if (entries.empty() || !entries.front().ok()) {
    throw Error(ErrorKind::InvalidArgument, "leaderboard has no successful model");
  }
  return entries.front();
}

Leaderboard rank_leaderboard(std::vector<LeaderboardEntry> entries, SortMetric sort_metric) {
  const auto key = [&](const LeaderboardEntry& e) {
    // Lower is better for both components.
    return sort_metric == SortMetric::AUC ? std::pair{-e.auc, e.logloss} : std::pair{e.logloss, -e.auc};
  };
  std::stable_sort(entries.begin(), entries.end(), [&](const LeaderboardEntry& a, const LeaderboardEntry& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (a.ok()) {
      const auto ka = key(a), kb = key(b);
      if (ka != kb) return ka < kb;
    }
    return a.model_id < b.model_id;
  });
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].rank = static_cast<int>(i + 1);
  return Leaderboard{std::move(entries), sort_metric};
}

std::string leaderboard_csv(const Leaderboard& board) {
  std::string out = "rank,model_id,kind,auc,logloss,status\n";
  for (const auto& e : board.entries) {
    out += std::to_string(e.rank) + "," + e.model_id + "," + e.kind + ",";
    if (e.ok()) {
      out += format_real(e.auc) + "," + format_real(e.logloss) + ",ok\n";
    } else {
      out += ",,failed\n";
    }
  }
  return out;
}

}  // namespace credalens::automl
