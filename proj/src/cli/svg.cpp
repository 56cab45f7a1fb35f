#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "voxgrid/errors.hpp"

namespace voxgrid::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

// Maps [lo, hi] onto [a, b]; a degenerate range lands in the middle.
double scale(double v, double lo, double hi, double a, double b) {
  if (hi - lo <= 0.0) return 0.5 * (a + b);
  return a + (v - lo) / (hi - lo) * (b - a);
}

}  // namespace

std::string render_curve_svg(const std::vector<CurvePoint>& points, const std::string& metric,
                             const std::string& series) {
  if (points.empty()) throw ArgumentError("curve needs at least one point");
  double xlo = std::log10(points.front().fraction), xhi = std::log10(points.back().fraction);
  double ylo = points.front().mean - points.front().std, yhi = points.front().mean + points.front().std;
  for (const auto& p : points) {
    ylo = std::min(ylo, p.mean - p.std);
    yhi = std::max(yhi, p.mean + p.std);
  }
  if (yhi - ylo <= 0.0) {
    ylo -= 0.5;
    yhi += 0.5;
  } else {
    const double pad = 0.05 * (yhi - ylo);
    ylo -= pad;
    yhi += pad;
  }
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const auto X = [&](double f) { return scale(std::log10(f), xlo, xhi, x0 + 20, x1 - 20); };
  const auto Y = [&](double v) { return scale(v, ylo, yhi, y0, y1); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
       "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) + "\">\n";
  s += "  <title>" + escape(metric) + " vs training fraction (" + escape(series) + ")</title>\n";
  s += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "  <line x1=\"" + px(x0) + "\" y1=\"" + px(y0) + "\" x2=\"" + px(x1) + "\" y2=\"" + px(y0) +
       "\" stroke=\"black\"/>\n";
  s += "  <line x1=\"" + px(x0) + "\" y1=\"" + px(y0) + "\" x2=\"" + px(x0) + "\" y2=\"" + px(y1) +
       "\" stroke=\"black\"/>\n";
  s += "  <text x=\"" + px(0.5 * (x0 + x1)) + "\" y=\"" + px(kHeight - 15) +
       "\" text-anchor=\"middle\" font-size=\"14\">training fraction (log scale)</text>\n";
  s += "  <text x=\"18\" y=\"" + px(0.5 * (y0 + y1)) + "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 " +
       px(0.5 * (y0 + y1)) + ")\">" + escape(metric) + "</text>\n";
  for (const auto& p : points) {
    s += "  <text x=\"" + px(X(p.fraction)) + "\" y=\"" + px(y0 + 18) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + num(p.fraction) + "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = ylo + (yhi - ylo) * i / 4.0;
    char label[32];
    std::snprintf(label, sizeof label, "%.3g", v);
    s += "  <text x=\"" + px(x0 - 6) + "\" y=\"" + px(Y(v) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
         label + "</text>\n";
  }

  s += "  <g class=\"series\" data-series=\"" + escape(series) + "\" stroke=\"#1f77b4\" fill=\"#1f77b4\">\n";
  if (points.size() > 1) {
    s += "    <polyline fill=\"none\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i) {
      s += (i ? " " : "") + px(X(points[i].fraction)) + "," + px(Y(points[i].mean));
    }
    s += "\"/>\n";
  }
  for (const auto& p : points) {
    const double x = X(p.fraction);
    s += "    <line class=\"errorbar\" x1=\"" + px(x) + "\" y1=\"" + px(Y(p.mean - p.std)) + "\" x2=\"" + px(x) +
         "\" y2=\"" + px(Y(p.mean + p.std)) + "\"/>\n";
    s += "    <circle class=\"point\" cx=\"" + px(x) + "\" cy=\"" + px(Y(p.mean)) + "\" r=\"4\" data-fraction=\"" +
         num(p.fraction) + "\" data-mean=\"" + num(p.mean) + "\" data-std=\"" + num(p.std) + "\" data-runs=\"" +
         std::to_string(p.runs) + "\"/>\n";
  }
  s += "  </g>\n</svg>\n";
  return s;
}

}  // namespace voxgrid::cli
