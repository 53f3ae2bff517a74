#include "tabpfn/eval/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace tabpfn::eval {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

void axes(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& xl, const std::string& yl,
          bool x_ticks) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  const double l = f.px(f.x0), r = f.px(f.x1), b = f.py(f.y0), t = f.py(f.y1);
  o << "<polyline fill=\"none\" stroke=\"black\" points=\"" << l << ',' << t << ' ' << l << ',' << b << ' ' << r << ','
    << b << "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << l - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
      o << "<text x=\"" << f.px(x) << "\" y=\"" << b + 16 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
    }
  }
  o << "<text x=\"" << (l + r) / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">" << escape(xl)
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << (t + b) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (t + b) / 2
    << ")\">" << escape(yl) << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 16.0 * double(i);
    o << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
      << kColors[i % 6] << "\"/><text x=\"" << kWidth - kRight + 26 << "\" y=\"" << y + 9 << "\">"
      << escape(series[i].name) << "</text>\n";
  }
}

}  // namespace

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, const std::vector<double>& markers) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - e), y1 = std::max(y1, s.y[i] + e);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  widen(y0, y1);
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  const Frame f{x0, x1, y0, y1};
  std::ostringstream o;
  axes(o, f, title, x_label, y_label, true);
  for (double m : markers)
    o << "<line x1=\"" << f.px(m) << "\" x2=\"" << f.px(m) << "\" y1=\"" << f.py(y0) << "\" y2=\"" << f.py(y1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.err.size(); ++i)
      o << "<line x1=\"" << f.px(s.x[i]) << "\" x2=\"" << f.px(s.x[i]) << "\" y1=\"" << f.py(s.y[i] - s.err[i])
        << "\" y2=\"" << f.py(s.y[i] + s.err[i]) << "\" stroke=\"" << kColors[k % 6] << "\"/>\n";
  }
  legend(o, series);
  o << "</svg>\n";
  return o.str();
}

std::string bar_plot(const std::string& title, const std::vector<std::string>& groups, const std::string& y_label,
                     const std::vector<Series>& series) {
  double y0 = 0.0, y1 = 0.0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.y.size(); ++i)
      y1 = std::max(y1, s.y[i] + (i < s.err.size() ? s.err[i] : 0.0)), y0 = std::min(y0, s.y[i]);
  if (!(y1 > y0)) y1 = y0 + 1.0;
  y1 += 0.05 * (y1 - y0);
  const Frame f{0.0, double(std::max<std::size_t>(groups.size(), 1)), y0, y1};
  std::ostringstream o;
  axes(o, f, title, "", y_label, false);
  const double slot = 1.0 / double(series.size() + 1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    o << "<text x=\"" << f.px(double(g) + 0.5) << "\" y=\"" << f.py(y0) + 16 << "\" text-anchor=\"middle\">"
      << escape(groups[g]) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (g >= series[k].y.size()) continue;
      const double left = double(g) + slot * (double(k) + 0.5);
      const double v = series[k].y[g];
      o << "<rect x=\"" << f.px(left) << "\" y=\"" << f.py(std::max(v, 0.0)) << "\" width=\""
        << f.px(left + slot) - f.px(left) << "\" height=\"" << std::abs(f.py(v) - f.py(0.0)) << "\" fill=\""
        << kColors[k % 6] << "\"/>\n";
      if (g < series[k].err.size()) {
        const double cx = f.px(left + slot / 2);
        o << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << f.py(v - series[k].err[g]) << "\" y2=\""
          << f.py(v + series[k].err[g]) << "\" stroke=\"black\"/>\n";
      }
    }
  }
  legend(o, series);
  o << "</svg>\n";
  return o.str();
}

}  // namespace tabpfn::eval
