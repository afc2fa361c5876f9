#pragma once

// Static SVG figures for finished runs. Output depends only on the input
// numbers, so identical records give byte-identical files.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uatrpo/error.hpp"
#include "uatrpo/harness.hpp"

namespace uatrpo {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lo;  // optional shaded band, same length as y
  std::vector<double> hi;
};

struct LineFigure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

struct BarFigure {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<std::string> groups;
  std::vector<std::vector<double>> values;  // values[group][category]
};

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

namespace plot_detail {

inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 400.0;
inline constexpr double kLeft = 80.0;
inline constexpr double kRight = 20.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 60.0;
inline constexpr std::array<const char*, 6> kPalette{"#1f77b4", "#d62728", "#2ca02c",
                                                      "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline AxisRange padded(double lo, double hi) {
  if (!(lo <= hi)) return {0.0, 1.0};
  if (lo == hi) {
    const double pad = lo == 0.0 ? 1.0 : 0.05 * std::abs(lo);
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

struct Frame {
  AxisRange x, y;
  double px(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight); }
  double py(double v) const { return kHeight - kBottom - (v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom); }
};

inline void header(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
     << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
}

inline void y_axis(std::ostream& os, const Frame& f, const std::string& label) {
  const double x0 = kLeft, x1 = kWidth - kRight;
  os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x0) << "\" y2=\""
     << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    const double y = f.py(v);
    os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y)
       << "\" stroke=\"#dddddd\"/>\n"
       << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << tick_label(v)
       << "</text>\n";
  }
  os << "<text transform=\"translate(16," << num((kTop + kHeight - kBottom) / 2)
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
}

inline void x_axis(std::ostream& os, const Frame& f, const std::string& label) {
  const double y0 = kHeight - kBottom;
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(kWidth - kRight) << "\" y2=\""
     << num(y0) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
    const double x = f.px(v);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x) << "\" y2=\"" << num(y0 + 5)
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << num(x) << "\" y=\"" << num(y0 + 20) << "\" text-anchor=\"middle\">" << tick_label(v)
       << "</text>\n";
  }
  os << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num(kHeight - 12)
     << "\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
}

inline void legend(std::ostream& os, std::span<const std::string> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 8 + 18.0 * static_cast<double>(i);
    const double x = kWidth - kRight - 150;
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 8) << "\" width=\"14\" height=\"10\" fill=\""
       << kPalette[i % kPalette.size()] << "\"/>\n"
       << "<text x=\"" << num(x + 20) << "\" y=\"" << num(y + 1) << "\">" << escape(labels[i]) << "</text>\n";
  }
}

}  // namespace plot_detail

/// Smallest box holding every finite point and band edge (padded when flat).
inline std::pair<AxisRange, AxisRange> data_ranges(const LineFigure& fig) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  auto take_y = [&](double v) {
    if (std::isfinite(v)) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
  };
  for (const auto& s : fig.series) {
    for (double v : s.x)
      if (std::isfinite(v)) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    for (double v : s.y) take_y(v);
    for (double v : s.lo) take_y(v);
    for (double v : s.hi) take_y(v);
  }
  return {plot_detail::padded(xlo, xhi), plot_detail::padded(ylo, yhi)};
}

inline std::string render_svg(const LineFigure& fig) {
  using namespace plot_detail;
  require(!fig.series.empty(), "render_svg: no series");
  const auto [xr, yr] = data_ranges(fig);
  const Frame f{xr, yr};
  std::ostringstream os;
  header(os, fig.title);
  y_axis(os, f, fig.y_label);
  x_axis(os, f, fig.x_label);
  std::vector<std::string> labels;
  for (std::size_t si = 0; si < fig.series.size(); ++si) {
    const Series& s = fig.series[si];
    require(s.x.size() == s.y.size(), "render_svg: x/y length mismatch");
    const char* color = kPalette[si % kPalette.size()];
    labels.push_back(s.label);
    if (!s.lo.empty()) {
      require(s.lo.size() == s.y.size() && s.hi.size() == s.y.size(), "render_svg: band length mismatch");
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) os << num(f.px(s.x[i])) << ',' << num(f.py(s.hi[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;) os << num(f.px(s.x[i])) << ',' << num(f.py(s.lo[i])) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    }
    os << "\"/>\n";
  }
  legend(os, labels);
  os << "</svg>\n";
  return os.str();
}

inline std::string render_svg(const BarFigure& fig) {
  using namespace plot_detail;
  require(!fig.groups.empty() && !fig.categories.empty(), "render_svg: empty bar chart");
  require(fig.values.size() == fig.groups.size(), "render_svg: one value row per group expected");
  double top = 0.0;
  for (const auto& row : fig.values) {
    require(row.size() == fig.categories.size(), "render_svg: one value per category expected");
    for (double v : row) top = std::max(top, v);
  }
  const Frame f{{0.0, static_cast<double>(fig.categories.size())}, padded(0.0, top > 0.0 ? top : 1.0)};
  std::ostringstream os;
  header(os, fig.title);
  y_axis(os, f, fig.y_label);
  const double y0 = kHeight - kBottom;
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(kWidth - kRight) << "\" y2=\""
     << num(y0) << "\" stroke=\"black\"/>\n";
  const double slot = f.px(1.0) - f.px(0.0);
  const double bar = 0.8 * slot / static_cast<double>(fig.groups.size());
  for (std::size_t c = 0; c < fig.categories.size(); ++c) {
    const double left = f.px(static_cast<double>(c)) + 0.1 * slot;
    for (std::size_t g = 0; g < fig.groups.size(); ++g) {
      const double v = fig.values[g][c];
      const double y = f.py(v);
      os << "<rect x=\"" << num(left + bar * static_cast<double>(g)) << "\" y=\"" << num(y) << "\" width=\""
         << num(bar) << "\" height=\"" << num(y0 - y) << "\" fill=\"" << kPalette[g % kPalette.size()] << "\"/>\n";
    }
    os << "<text x=\"" << num(f.px(c + 0.5)) << "\" y=\"" << num(y0 + 20) << "\" text-anchor=\"middle\">"
       << escape(fig.categories[c]) << "</text>\n";
  }
  legend(os, fig.groups);
  os << "</svg>\n";
  return os.str();
}

/// Records of one configuration under a display label.
struct RunGroup {
  std::string label;
  std::vector<RunRecord> records;
};

/// Per-iteration evaluation returns, one column per seed. Runs that stopped
/// early (diverged) repeat their last return so every seed counts.
struct AlignedReturns {
  std::vector<double> env_steps;
  std::vector<std::vector<double>> by_iter;  // by_iter[i][seed]
};

inline AlignedReturns align_returns(std::span<const RunRecord> records) {
  AlignedReturns out;
  std::size_t longest = 0;
  const RunRecord* ref = nullptr;
  for (const auto& r : records)
    if (r.rows.size() > longest || !ref) longest = std::max(longest, r.rows.size()), ref = &r;
  for (std::size_t i = 0; i < longest; ++i) {
    out.env_steps.push_back(static_cast<double>(ref->rows[i].env_steps));
    std::vector<double> col;
    for (const auto& r : records) col.push_back(i < r.rows.size() ? r.rows[i].mean_return : r.final_return());
    out.by_iter.push_back(std::move(col));
  }
  return out;
}

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard error (N-1 denominator); zero for a single value.
inline double stderr_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

inline LineFigure cvar_vs_kappa_figure(std::span<const RunGroup> groups) {
  LineFigure fig{"CVaR of final return", "kappa", "kappa-CVaR", {}};
  for (const auto& g : groups) {
    Series s{g.label, {}, {}, {}, {}};
    const auto finals = final_returns(g.records);
    for (double k : summary_kappas()) {
      s.x.push_back(k);
      s.y.push_back(cvar(finals, k));
    }
    fig.series.push_back(std::move(s));
  }
  return fig;
}

inline LineFigure cvar_over_training_figure(std::span<const RunGroup> groups, double kappa = 0.2) {
  LineFigure fig{"20% CVaR over training", "environment steps", "CVaR of evaluation return", {}};
  for (const auto& g : groups) {
    const auto aligned = align_returns(g.records);
    Series s{g.label, aligned.env_steps, {}, {}, {}};
    for (const auto& col : aligned.by_iter) s.y.push_back(cvar(col, kappa));
    fig.series.push_back(std::move(s));
  }
  return fig;
}

inline LineFigure mean_return_figure(std::span<const RunGroup> groups) {
  LineFigure fig{"Mean evaluation return (one standard error)", "environment steps", "return", {}};
  for (const auto& g : groups) {
    const auto aligned = align_returns(g.records);
    Series s{g.label, aligned.env_steps, {}, {}, {}};
    for (const auto& col : aligned.by_iter) {
      const double m = mean_of(col), se = stderr_of(col);
      s.y.push_back(m);
      s.lo.push_back(m - se);
      s.hi.push_back(m + se);
    }
    fig.series.push_back(std::move(s));
  }
  return fig;
}

inline BarFigure kl_ratio_figure(std::span<const RunGroup> groups) {
  BarFigure fig{"Actual / estimated KL of proposed updates", "fraction of updates", {}, {}, {}};
  const auto& e = KlHistogram::kEdges;
  for (std::size_t b = 0; b < e.size(); ++b) {
    fig.categories.push_back(b + 1 < e.size() ? plot_detail::tick_label(e[b]) + "-" + plot_detail::tick_label(e[b + 1])
                                              : ">=" + plot_detail::tick_label(e[b]));
  }
  for (const auto& g : groups) {
    const auto h = kl_ratio_histogram(g.records);
    std::vector<double> row;
    for (std::size_t c : h.counts)
      row.push_back(h.total ? static_cast<double>(c) / static_cast<double>(h.total) : 0.0);
    fig.groups.push_back(g.label);
    fig.values.push_back(std::move(row));
  }
  return fig;
}

inline constexpr std::array<const char*, 4> kPlotFiles{"cvar_vs_kappa.svg", "cvar20_over_training.svg",
                                                       "mean_return_over_training.svg", "kl_ratio_histogram.svg"};

/// Writes the four figures into `dir` and returns their paths.
inline std::vector<std::filesystem::path> emit_plots(std::span<const RunGroup> groups, const std::filesystem::path& dir) {
  bool any = false;
  for (const auto& g : groups) any = any || !g.records.empty();
  require(any, "emit_plots: no records");
  std::vector<RunGroup> nonempty;
  for (const auto& g : groups)
    if (!g.records.empty()) nonempty.push_back(g);

  std::filesystem::create_directories(dir);
  const std::array<std::string, 4> svgs{render_svg(cvar_vs_kappa_figure(nonempty)),
                                        render_svg(cvar_over_training_figure(nonempty)),
                                        render_svg(mean_return_figure(nonempty)), render_svg(kl_ratio_figure(nonempty))};
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < svgs.size(); ++i) {
    const auto p = dir / kPlotFiles[i];
    std::ofstream(p, std::ios::binary) << svgs[i];
    paths.push_back(p);
  }
  return paths;
}

}  // namespace uatrpo
