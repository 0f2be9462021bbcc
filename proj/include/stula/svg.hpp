#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "stula/csv.hpp"

namespace stula {
namespace svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
  std::vector<double> yerr;  // empty, or one symmetric error per point
};

struct PlotOptions {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
  int width = 720, height = 480;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Tick positions at 1-2-5 steps on linear axes, decades on log axes.
inline std::vector<double> ticks(double lo, double hi, bool log_axis) {
  std::vector<double> t;
  if (log_axis) {
    const int e0 = static_cast<int>(std::floor(std::log10(lo) - 1e-9));
    const int e1 = static_cast<int>(std::ceil(std::log10(hi) + 1e-9));
    for (int e = e0; e <= e1; ++e) {
      const double v = std::pow(10.0, e);
      if (v >= lo * 0.999 && v <= hi * 1.001) t.push_back(v);
    }
    if (t.size() < 2) return {lo, hi};
    return t;
  }
  const double span = hi - lo;
  const double raw = span / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * mult >= raw) {
      step = mag * mult;
      break;
    }
  }
  const double first = std::ceil(lo / step) * step;
  for (double v = first; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

}  // namespace detail

inline std::string render(const std::vector<Series>& series, const PlotOptions& opt) {
  if (series.empty()) throw InvalidInput("svg: no series");
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  size_t n_pts = 0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || (!s.yerr.empty() && s.yerr.size() != s.y.size()))
      throw InvalidInput("svg: series '" + s.name + "' length mismatch");
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double lo_y = s.yerr.empty() ? s.y[i] : s.y[i] - s.yerr[i];
      const double hi_y = s.yerr.empty() ? s.y[i] : s.y[i] + s.yerr[i];
      if (opt.logx && s.x[i] <= 0)
        throw InvalidInput("svg: log x-axis needs positive values");
      if (opt.logy && lo_y <= 0)
        throw InvalidInput("svg: log y-axis needs positive values");
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, lo_y);
      yhi = std::max(yhi, hi_y);
      ++n_pts;
    }
  }
  if (n_pts == 0) throw InvalidInput("svg: no data points");
  if (xlo == xhi) {
    xlo -= (opt.logx ? 0.5 * xlo : std::max(1.0, std::abs(xlo)));
    xhi += (opt.logx ? xhi : std::max(1.0, std::abs(xhi)));
  }
  if (ylo == yhi) {
    ylo -= (opt.logy ? 0.5 * ylo : std::max(1.0, std::abs(ylo)));
    yhi += (opt.logy ? yhi : std::max(1.0, std::abs(yhi)));
  }

  const double ml = 72, mr = 24, mt = 40, mb = 56;
  const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
  auto tx = [&](double v) {
    const double u = opt.logx ? (std::log(v) - std::log(xlo)) / (std::log(xhi) - std::log(xlo))
                              : (v - xlo) / (xhi - xlo);
    return ml + u * pw;
  };
  auto ty = [&](double v) {
    const double u = opt.logy ? (std::log(v) - std::log(ylo)) / (std::log(yhi) - std::log(ylo))
                              : (v - ylo) / (yhi - ylo);
    return mt + (1 - u) * ph;
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(opt.width) + "\" height=\"" + std::to_string(opt.height) +
         "\" viewBox=\"0 0 " + std::to_string(opt.width) + " " +
         std::to_string(opt.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::num(ml + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" + detail::esc(opt.title) +
         "</text>\n";

  for (double v : detail::ticks(xlo, xhi, opt.logx)) {
    const double px = tx(v);
    out += "<line x1=\"" + detail::num(px) + "\" y1=\"" + detail::num(mt) +
           "\" x2=\"" + detail::num(px) + "\" y2=\"" + detail::num(mt + ph) +
           "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + detail::num(px) + "\" y=\"" + detail::num(mt + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::tick_label(v) + "</text>\n";
  }
  for (double v : detail::ticks(ylo, yhi, opt.logy)) {
    const double py = ty(v);
    out += "<line x1=\"" + detail::num(ml) + "\" y1=\"" + detail::num(py) +
           "\" x2=\"" + detail::num(ml + pw) + "\" y2=\"" + detail::num(py) +
           "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + detail::num(ml - 6) + "\" y=\"" + detail::num(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::tick_label(v) + "</text>\n";
  }
  out += "<rect x=\"" + detail::num(ml) + "\" y=\"" + detail::num(mt) + "\" width=\"" +
         detail::num(pw) + "\" height=\"" + detail::num(ph) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  out += "<text x=\"" + detail::num(ml + pw / 2) + "\" y=\"" +
         detail::num(opt.height - 12.0) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"13\">" + detail::esc(opt.xlabel) +
         "</text>\n";
  out += "<text x=\"18\" y=\"" + detail::num(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 " + detail::num(mt + ph / 2) + ")\">" +
         detail::esc(opt.ylabel) + "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = palette[si % 6];
    if (s.x.size() > 1) {
      std::string pts;
      for (size_t i = 0; i < s.x.size(); ++i)
        pts += detail::num(tx(s.x[i])) + "," + detail::num(ty(s.y[i])) + " ";
      out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
    }
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!s.yerr.empty() && s.yerr[i] > 0) {
        const double lo_y = opt.logy ? std::max(s.y[i] - s.yerr[i], ylo) : s.y[i] - s.yerr[i];
        out += "<line x1=\"" + detail::num(tx(s.x[i])) + "\" y1=\"" +
               detail::num(ty(lo_y)) + "\" x2=\"" + detail::num(tx(s.x[i])) +
               "\" y2=\"" + detail::num(ty(s.y[i] + s.yerr[i])) + "\" stroke=\"" +
               color + "\"/>\n";
      }
      out += "<circle cx=\"" + detail::num(tx(s.x[i])) + "\" cy=\"" +
             detail::num(ty(s.y[i])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    out += "<text x=\"" + detail::num(ml + pw - 8) + "\" y=\"" +
           detail::num(mt + 16.0 + 16.0 * si) + "\" text-anchor=\"end\" "
           "font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" +
           detail::esc(s.name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace svg

// Render a CSV produced by a sweep into an SVG. Kinds pin their required
// columns; anything missing is a schema error naming the columns.
inline std::string plot_csv(const csv::Table& t, const std::string& kind) {
  auto require = [&](const std::vector<std::string>& cols) {
    std::string missing;
    for (const auto& c : cols) {
      bool found = false;
      for (const auto& h : t.header)
        if (h == c) {
          found = true;
          break;
        }
      if (!found) missing += (missing.empty() ? "" : ", ") + c;
    }
    if (!missing.empty())
      throw SchemaError("plot: csv is missing required columns: " + missing);
    if (t.rows.empty()) throw SchemaError("plot: csv has no data rows");
  };

  svg::Series s;
  svg::PlotOptions opt;
  if (kind == "spectrum") {
    require({"beta", "gap"});
    s.name = "gap";
    s.x = t.numeric_column("beta");
    s.y = t.numeric_column("gap");
    opt = {"spectral gap vs beta", "beta", "gap", false, true};
  } else if (kind == "lambda") {
    require({"lambda", "plateau_kl"});
    s.name = "plateau KL";
    s.x = t.numeric_column("lambda");
    s.y = t.numeric_column("plateau_kl");
    opt = {"plateau KL vs stepsize", "lambda", "plateau KL", true, true};
  } else if (kind == "excess_risk") {
    require({"beta", "excess_risk", "std_error"});
    s.name = "excess risk";
    s.x = t.numeric_column("beta");
    s.y = t.numeric_column("excess_risk");
    s.yerr = t.numeric_column("std_error");
    opt = {"excess risk vs beta", "beta", "excess risk", false, false};
  } else {
    throw InvalidParameter("plot: unknown kind '" + kind +
                           "' (expected spectrum, lambda, or excess_risk)");
  }
  return svg::render({s}, opt);
}

}  // namespace stula
