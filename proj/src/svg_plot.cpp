#include "fmatch/svg_plot.hpp"

#include "fmatch/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fmatch {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
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

struct BoxStats {
  double lo, q1, med, q3, hi;
};

BoxStats box_stats(const std::vector<double>& values) {
  BoxStats b{};
  b.q1 = quantile(values, 0.25);
  b.med = quantile(values, 0.50);
  b.q3 = quantile(values, 0.75);
  const double fence = 1.5 * (b.q3 - b.q1);
  b.lo = b.q3;
  b.hi = b.q1;
  for (double v : values) {
    if (v >= b.q1 - fence) b.lo = std::min(b.lo, v);
    if (v <= b.q3 + fence) b.hi = std::max(b.hi, v);
  }
  return b;
}

}  // namespace

std::string render_boxplot_svg(const std::vector<std::string>& labels,
                               const std::vector<std::vector<double>>& samples,
                               const std::string& title) {
  if (labels.size() != samples.size() || labels.empty())
    throw std::invalid_argument("render_boxplot_svg: one label per sample");
  for (const auto& s : samples)
    if (s.empty())
      throw std::invalid_argument("render_boxplot_svg: empty sample");

  bool log_scale = true;
  for (const auto& s : samples)
    for (double v : s)
      if (!(v > 0.0)) log_scale = false;
  auto transform = [&](double v) { return log_scale ? std::log10(v) : v; };

  std::vector<BoxStats> stats;
  double t_min = 0, t_max = 0;
  bool first = true;
  for (const auto& s : samples) {
    BoxStats b = box_stats(s);
    stats.push_back(b);
    const double lo = transform(b.lo), hi = transform(b.hi);
    if (first || lo < t_min) t_min = lo;
    if (first || hi > t_max) t_max = hi;
    first = false;
  }
  if (t_max - t_min < 1e-12) {
    t_min -= 0.5;
    t_max += 0.5;
  }
  const double pad = 0.05 * (t_max - t_min);
  t_min -= pad;
  t_max += pad;

  const int n = static_cast<int>(samples.size());
  const double margin_left = 70, margin_right = 20, margin_top = 40,
               margin_bottom = 50;
  const double slot = 90, box_w = 44;
  const double width = margin_left + margin_right + slot * n;
  const double height = 360;
  const double plot_h = height - margin_top - margin_bottom;

  auto ypos = [&](double v) {
    return margin_top + plot_h * (t_max - transform(v)) / (t_max - t_min);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         fmt(width) + "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " +
         fmt(width) + " " + fmt(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(width / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" +
         escape_xml(title) + "</text>\n";

  // axis with ticks at integers (log10 exponents) or five linear divisions
  svg += "<line x1=\"" + fmt(margin_left) + "\" y1=\"" + fmt(margin_top) +
         "\" x2=\"" + fmt(margin_left) + "\" y2=\"" +
         fmt(margin_top + plot_h) + "\" stroke=\"black\"/>\n";
  auto tick = [&](double t, const std::string& text) {
    const double y = margin_top + plot_h * (t_max - t) / (t_max - t_min);
    svg += "<line x1=\"" + fmt(margin_left - 5) + "\" y1=\"" + fmt(y) +
           "\" x2=\"" + fmt(margin_left) + "\" y2=\"" + fmt(y) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(margin_left - 9) + "\" y=\"" + fmt(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + escape_xml(text) + "</text>\n";
  };
  if (log_scale) {
    for (int e = static_cast<int>(std::ceil(t_min));
         e <= static_cast<int>(std::floor(t_max)); ++e)
      tick(e, "1e" + std::to_string(e));
  } else {
    for (int i = 0; i <= 5; ++i) {
      const double t = t_min + (t_max - t_min) * i / 5.0;
      tick(t, format_double(std::round(t * 1e4) / 1e4));
    }
  }

  for (int i = 0; i < n; ++i) {
    const BoxStats& b = stats[static_cast<std::size_t>(i)];
    const double cx = margin_left + slot * (i + 0.5);
    const double x0 = cx - box_w / 2, x1 = cx + box_w / 2;
    const double y_lo = ypos(b.lo), y_q1 = ypos(b.q1), y_med = ypos(b.med),
                 y_q3 = ypos(b.q3), y_hi = ypos(b.hi);
    svg += "<line x1=\"" + fmt(cx) + "\" y1=\"" + fmt(y_lo) + "\" x2=\"" +
           fmt(cx) + "\" y2=\"" + fmt(y_q1) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(cx) + "\" y1=\"" + fmt(y_q3) + "\" x2=\"" +
           fmt(cx) + "\" y2=\"" + fmt(y_hi) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(x0 + 8) + "\" y1=\"" + fmt(y_lo) + "\" x2=\"" +
           fmt(x1 - 8) + "\" y2=\"" + fmt(y_lo) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(x0 + 8) + "\" y1=\"" + fmt(y_hi) + "\" x2=\"" +
           fmt(x1 - 8) + "\" y2=\"" + fmt(y_hi) + "\" stroke=\"black\"/>\n";
    svg += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y_q3) + "\" width=\"" +
           fmt(box_w) + "\" height=\"" + fmt(y_q1 - y_q3) +
           "\" fill=\"#cfe2f3\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y_med) + "\" x2=\"" +
           fmt(x1) + "\" y2=\"" + fmt(y_med) +
           "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(cx) + "\" y=\"" + fmt(height - 28) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" + escape_xml(labels[static_cast<std::size_t>(i)]) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace fmatch
