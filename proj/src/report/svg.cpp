#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "credalens/report.hpp"

namespace credalens::report {

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 720.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string rgb(int r, int g, int b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string blend(double t, int r0, int g0, int b0, int r1, int g1, int b1) {
  t = std::clamp(t, 0.0, 1.0);
  const auto mix = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  return rgb(mix(r0, r1), mix(g0, g1), mix(b0, b1));
}

std::string open_svg(const std::string& title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">" + escape(title) +
       "</text>\n";
  return s;
}

std::string text(double x, double y, std::string_view body, std::string_view anchor, int size = 11,
                 std::string_view extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + std::string(anchor) + "\"" + std::string(extra) + ">" + escape(body) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, std::string_view stroke) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"1\"/>\n";
}

void write_all(const std::filesystem::path& dir, const std::string& name, const std::string& bytes,
               std::vector<std::string>& names) {
  write_file(dir / name, bytes);
  names.push_back(name);
}

}  // namespace

std::string shap_summary_svg(const ShapTable& t) {
  const auto& a = t.attributions;
  if (a.n_instances() == 0 || a.n_features() == 0) {
    throw Error(ErrorKind::InvalidArgument, "attribution plot needs at least one instance and one feature");
  }
  const std::size_t n = a.n_instances();
  const std::size_t p = a.n_features();
  const double left = 250.0, right = 40.0, top = 50.0, bottom = 70.0;
  const double plot_w = kWidth - left - right;
  const double row_h = (kHeight - top - bottom) / static_cast<double>(p);

  double span = 0.0;
  for (double v : a.phi.data()) span = std::max(span, std::abs(v));
  if (!(span > 0.0)) span = 1.0;
  const auto x_of = [&](double phi) { return left + (phi + span) / (2.0 * span) * plot_w; };

  std::string s = open_svg("Feature attribution: " + t.model_id);
  s += line(x_of(0.0), top, x_of(0.0), kHeight - bottom, "#999999");
  s += text(left + plot_w / 2, kHeight - bottom + 30, "SHAP value (impact on model output)", "middle", 12);
  s += text(left + plot_w / 2, kHeight - 16, "point colour: feature value, low (blue) to high (red)", "middle", 10);

  const auto mean = explain::mean_abs_phi(a);
  const auto order = explain::summary_order(a);
  std::vector<std::size_t> inst(n);
  for (std::size_t r = 0; r < p; ++r) {
    const std::size_t j = order[r];
    const double cy = top + (static_cast<double>(r) + 0.5) * row_h;
    s += text(left - 10, cy + 4, a.features[j] + " " + format_real(mean[j]), "end");

    double lo = t.value_num(0, j), hi = t.value_num(0, j);
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, t.value_num(i, j));
      hi = std::max(hi, t.value_num(i, j));
    }
    std::iota(inst.begin(), inst.end(), 0);
    std::stable_sort(inst.begin(), inst.end(), [&](std::size_t u, std::size_t v) { return a.phi(u, j) < a.phi(v, j); });
    s += "<g class=\"feature\">\n";
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = inst[k];
      const double offset = (static_cast<double>(k % 9) - 4.0) / 4.0 * row_h * 0.35;
      const double norm = hi > lo ? (t.value_num(i, j) - lo) / (hi - lo) : 0.5;
      s += "<circle class=\"pt\" cx=\"" + num(x_of(a.phi(i, j))) + "\" cy=\"" + num(cy + offset) +
           "\" r=\"2.50\" fill=\"" + blend(norm, 30, 136, 229, 255, 0, 82) + "\"/>\n";
    }
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string heatmap_svg(const explain::ImportanceHeatmap& h) {
  const std::size_t p = h.features.size();
  const std::size_t k = h.model_ids.size();
  if (p == 0 || k == 0) throw Error(ErrorKind::InvalidArgument, "heatmap plot needs features and models");
  const double left = 250.0, right = 40.0, top = 50.0, bottom = 180.0;
  const double cell_w = (kWidth - left - right) / static_cast<double>(k);
  const double cell_h = (kHeight - top - bottom) / static_cast<double>(p);

  std::string s = open_svg("Variable importance heatmap");
  for (std::size_t r = 0; r < p; ++r) {
    const double y = top + static_cast<double>(r) * cell_h;
    s += text(left - 8, y + cell_h / 2 + 4, h.features[r], "end");
    for (std::size_t m = 0; m < k; ++m) {
      const double x = left + static_cast<double>(m) * cell_w;
      s += "<rect class=\"cell\" x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell_w) + "\" height=\"" +
           num(cell_h) + "\" fill=\"" + blend(h.values(r, m), 247, 251, 255, 8, 48, 107) +
           "\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>\n";
    }
  }
  const double label_y = top + static_cast<double>(p) * cell_h + 10;
  for (std::size_t m = 0; m < k; ++m) {
    const double x = left + (static_cast<double>(m) + 0.5) * cell_w;
    s += text(x, label_y, h.model_ids[m], "end", 11,
              " transform=\"rotate(-45 " + num(x) + " " + num(label_y) + ")\"");
  }
  s += text(left + (kWidth - left - right) / 2, kHeight - 16, "shading: scaled importance, low (light) to high (dark)",
            "middle", 10);
  s += "</svg>\n";
  return s;
}

std::string leaderboard_svg(const automl::Leaderboard& board) {
  const std::size_t n = board.entries.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "leaderboard plot needs at least one entry");
  const bool by_auc = board.sort_metric == automl::SortMetric::AUC;
  const auto metric = [&](const automl::LeaderboardEntry& e) { return by_auc ? e.auc : e.logloss; };
  double top_value = by_auc ? 1.0 : 0.0;
  if (!by_auc) {
    for (const auto& e : board.entries) {
      if (e.ok() && std::isfinite(e.logloss)) top_value = std::max(top_value, e.logloss);
    }
    if (!(top_value > 0.0)) top_value = 1.0;
  }
  const double left = 250.0, right = 200.0, top = 50.0, bottom = 50.0;
  const double plot_w = kWidth - left - right;
  const double row_h = (kHeight - top - bottom) / static_cast<double>(n);

  std::string s = open_svg(std::string("Leaderboard by test ") + (by_auc ? "AUC" : "logloss"));
  s += line(left, top, left, kHeight - bottom, "#333333");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = board.entries[i];
    const double y = top + static_cast<double>(i) * row_h;
    const double cy = y + row_h / 2 + 4;
    s += text(left - 8, cy, e.model_id, "end");
    if (!e.ok()) {
      s += text(left + 6, cy, "failed", "start");
      continue;
    }
    const double v = metric(e);
    const double w = std::isfinite(v) ? std::clamp(v / top_value, 0.0, 1.0) * plot_w : plot_w;
    const bool stacked = e.kind.rfind("StackedEnsemble", 0) == 0;
    s += "<rect class=\"bar\" x=\"" + num(left) + "\" y=\"" + num(y + row_h * 0.15) + "\" width=\"" + num(w) +
         "\" height=\"" + num(row_h * 0.7) + "\" fill=\"" + (stacked ? rgb(217, 95, 2) : rgb(27, 158, 119)) + "\"/>\n";
    s += text(left + w + 6, cy, format_real(v), "start");
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::string> render_attribution_svg(const ShapTable& shap, const explain::ImportanceHeatmap& heatmap,
                                                const std::filesystem::path& out_dir) {
  const std::string a = shap_summary_svg(shap);
  const std::string b = heatmap_svg(heatmap);
  std::vector<std::string> names;
  write_all(out_dir, "shap_summary.svg", a, names);
  write_all(out_dir, "heatmap.svg", b, names);
  return names;
}

std::vector<std::string> render_svg(const ShapTable& shap, const explain::ImportanceHeatmap& heatmap,
                                    const automl::Leaderboard& board, const std::filesystem::path& out_dir) {
  const std::string c = leaderboard_svg(board);
  auto names = render_attribution_svg(shap, heatmap, out_dir);
  write_all(out_dir, "leaderboard.svg", c, names);
  return names;
}

}  // namespace credalens::report
