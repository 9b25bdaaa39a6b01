#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bnspike/dynamics.hpp"
#include "bnspike/trajectory_io.hpp"

namespace bnspike::harness {

inline constexpr int kPanelWidth = 900;
inline constexpr int kPanelHeight = 300;

struct Shade {
  long begin = 0;
  long end = 0;
};

/// One shaded interval per rising episode, in record coordinates: from the
/// first rising step to the record where the ratio stops rising.
inline std::vector<Shade> rising_regions(const EdgeAnalysis& edges, long last_record) {
  std::vector<Shade> out;
  for (const auto& e : edges.episodes) out.push_back(Shade{e.begin, std::min(e.t2.value_or(last_record), last_record)});
  return out;
}

struct Series {
  std::string name;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool secondary_axis = false;
};

struct Panel {
  std::string title;
  bool log_y = false;
  std::vector<Series> series;
  std::vector<Shade> shades;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return !(lo <= hi); }
  void pad() {
    if (empty()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
      const double d = std::max(0.5, 0.05 * std::abs(hi));
      lo -= d;
      hi += d;
    }
  }
};

inline double transform(double v, bool log_y) { return log_y ? (v > 0.0 ? std::log10(v) : std::nan("")) : v; }

struct Frame {
  double x0, y0, w, h;  // plotting area in pixels
  Range xr, yr;
  double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

inline void draw_series(std::ostream& out, const Frame& f, const Series& s, bool log_y) {
  std::vector<std::pair<double, double>> run;
  auto flush = [&]() {
    if (run.size() == 1) {
      out << "<circle cx=\"" << fmt(run[0].first) << "\" cy=\"" << fmt(run[0].second)
          << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    } else if (run.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < run.size(); ++i)
        out << (i ? " " : "") << fmt(run[i].first) << ',' << fmt(run[i].second);
      out << "\"/>\n";
    }
    run.clear();
  };
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double y = transform(s.y[i], log_y);
    if (!std::isfinite(y) || !std::isfinite(s.x[i])) {
      flush();
      continue;
    }
    run.emplace_back(f.px(s.x[i]), f.py(y));
  }
  flush();
}

inline void draw_panel(std::ostream& out, const Panel& p, double top, const Range& xr) {
  Frame f{70.0, top + 30.0, kPanelWidth - 70.0 - 70.0, kPanelHeight - 30.0 - 40.0, xr, {}};
  Range secondary;
  for (const auto& s : p.series)
    for (double v : s.y) (s.secondary_axis ? secondary : f.yr).include(transform(v, p.log_y && !s.secondary_axis));
  f.yr.pad();
  secondary.pad();

  out << "<g>\n<text x=\"" << fmt(f.x0) << "\" y=\"" << fmt(top + 20.0)
      << "\" font-family=\"sans-serif\" font-size=\"14\">" << escape(p.title) << "</text>\n";
  for (const auto& sh : p.shades) {
    const double a = f.px(static_cast<double>(sh.begin));
    const double b = f.px(static_cast<double>(sh.end));
    out << "<rect class=\"rising\" x=\"" << fmt(a) << "\" y=\"" << fmt(f.y0) << "\" width=\""
        << fmt(std::max(b - a, 1.0)) << "\" height=\"" << fmt(f.h)
        << "\" fill=\"#f4a261\" fill-opacity=\"0.3\" data-begin=\"" << sh.begin << "\" data-end=\"" << sh.end
        << "\"/>\n";
  }
  out << "<rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0) << "\" width=\"" << fmt(f.w) << "\" height=\""
      << fmt(f.h) << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fx = f.xr.lo + (f.xr.hi - f.xr.lo) * i / 4.0;
    const double fy = f.yr.lo + (f.yr.hi - f.yr.lo) * i / 4.0;
    out << "<text x=\"" << fmt(f.px(fx)) << "\" y=\"" << fmt(f.y0 + f.h + 16.0)
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << tick_label(fx)
        << "</text>\n";
    out << "<text x=\"" << fmt(f.x0 - 6.0) << "\" y=\"" << fmt(f.py(fy) + 3.0)
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
        << tick_label(p.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  double legend_y = f.y0 + 12.0;
  for (const auto& s : p.series) {
    if (s.secondary_axis) {
      Frame g = f;
      g.yr = secondary;
      draw_series(out, g, s, false);
      for (int i = 0; i <= 4; ++i) {
        const double fy = g.yr.lo + (g.yr.hi - g.yr.lo) * i / 4.0;
        out << "<text x=\"" << fmt(f.x0 + f.w + 6.0) << "\" y=\"" << fmt(g.py(fy) + 3.0)
            << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" << s.color << "\">" << tick_label(fy)
            << "</text>\n";
      }
    } else {
      draw_series(out, f, s, p.log_y);
    }
    out << "<text x=\"" << fmt(f.x0 + f.w - 8.0) << "\" y=\"" << fmt(legend_y)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" fill=\"" << s.color << "\">"
        << escape(s.name) << "</text>\n";
    legend_y += 14.0;
  }
  out << "</g>\n";
}

}  // namespace detail

/// Stacks the panels vertically on a shared x axis.
inline std::string render_svg(const std::vector<Panel>& panels) {
  detail::Range xr;
  for (const auto& p : panels)
    for (const auto& s : p.series)
      for (double x : s.x) xr.include(x);
  xr.pad();
  std::ostringstream out;
  const int height = kPanelHeight * static_cast<int>(panels.size());
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPanelWidth << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << kPanelWidth << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i)
    detail::draw_panel(out, panels[i], static_cast<double>(i) * kPanelHeight, xr);
  out << "</svg>\n";
  return out.str();
}

using SharpnessSeries = std::map<long, double>;

struct PlotOptions {
  bool log_risk = false;
  double edge_tol = 0.0;
  std::optional<SharpnessSeries> sharpness;
};

/// Risk, both effective learning rates, and the ratio with rising episodes
/// shaded. Edges are re-derived from the ratio column, not read from the file.
inline std::vector<Panel> trajectory_panels(const std::vector<TrajectoryRecord>& recs, const PlotOptions& opt) {
  if (recs.empty()) raise(ErrorKind::Precondition, "cannot plot an empty trajectory");
  const EdgeAnalysis edges = classify_edges(recs, opt.edge_tol);
  const auto shades = rising_regions(edges, static_cast<long>(recs.size()) - 1);
  Series risk{"risk", "#1d3557", {}, {}}, lr{"eta_hat (euclidean)", "#2a9d8f", {}, {}},
      lrs{"eta_hat (sigma)", "#e76f51", {}, {}}, ratio{"rho_perp / rho", "#6a4c93", {}, {}};
  for (const auto& r : recs) {
    const double t = static_cast<double>(r.t);
    risk.x.push_back(t);
    risk.y.push_back(r.stats.risk);
    lr.x.push_back(t);
    lr.y.push_back(r.stats.eff_lr);
    lrs.x.push_back(t);
    lrs.y.push_back(r.stats.eff_lr_sigma);
    ratio.x.push_back(t);
    ratio.y.push_back(r.stats.ratio);
  }
  Panel p1{opt.log_risk ? "risk (log scale)" : "risk", opt.log_risk, {risk}, shades};
  Panel p2{"effective learning rate", false, {lr, lrs}, shades};
  if (opt.sharpness && !opt.sharpness->empty()) {
    Series sh{"sharpness", "#8d99ae", {}, {}, true};
    for (const auto& [t, v] : *opt.sharpness) {
      sh.x.push_back(static_cast<double>(t));
      sh.y.push_back(v);
    }
    p2.series.push_back(std::move(sh));
  }
  Panel p3{"rho_perp / rho (rising episodes shaded)", false, {ratio}, shades};
  return {p1, p2, p3};
}

inline std::string plot_svg(const std::vector<TrajectoryRecord>& recs, const PlotOptions& opt = {}) {
  return render_svg(trajectory_panels(recs, opt));
}

/// The numbers behind the plot, one row per record.
inline void write_plot_data_csv(std::ostream& out, const std::vector<TrajectoryRecord>& recs,
                                const PlotOptions& opt = {}) {
  const EdgeAnalysis edges = classify_edges(recs, opt.edge_tol);
  out << "t,risk,eff_lr_euclid,eff_lr_sigma,ratio,edge,rising_shaded,sharpness\n";
  std::vector<char> shaded(recs.size(), 0);
  for (const auto& s : rising_regions(edges, static_cast<long>(recs.size()) - 1))
    for (long t = s.begin; t <= s.end; ++t) shaded[static_cast<std::size_t>(t)] = 1;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    double sh = std::numeric_limits<double>::quiet_NaN();
    if (opt.sharpness) {
      auto it = opt.sharpness->find(r.t);
      if (it != opt.sharpness->end()) sh = it->second;
    }
    out << r.t << ',' << format_double(r.stats.risk) << ',' << format_double(r.stats.eff_lr) << ','
        << format_double(r.stats.eff_lr_sigma) << ',' << format_double(r.stats.ratio) << ','
        << to_string(edges.labels[i]) << ',' << int(shaded[i]) << ',' << format_double(sh) << '\n';
  }
}

inline SharpnessSeries read_sharpness_csv(std::istream& in) {
  SharpnessSeries out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) raise(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected t,sharpness");
    out[static_cast<long>(parse_double(line.substr(0, comma), lineno, "t"))] =
        parse_double(line.substr(comma + 1), lineno, "sharpness");
  }
  return out;
}

}  // namespace bnspike::harness
