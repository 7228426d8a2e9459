#pragma once

// Minimal SVG renderers for critical-difference diagrams, box plots and
// performance-history curves.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fcdd/eval.hpp"
#include "fcdd/stats.hpp"

namespace fcdd {

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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

inline std::string line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

inline std::string text(double x, double y, const std::string& s, const std::string& anchor = "middle", int size = 12,
                        const std::string& fill = "black") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\" text-anchor=\"" + anchor + "\" fill=\"" + fill + "\">" + escape(s) + "</text>\n";
}

inline std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace svg

/// Average-rank axis (rank 1 on the left), one labelled tick per method,
/// horizontal red bars joining methods in the same group.
inline std::string cd_diagram_svg(const ScoreTable& t, const CdResult& r) {
  const std::size_t M = t.methods.size();
  const double W = 800, left = 60, right = W - 60, axis_y = 60;
  const double bar_gap = 10;
  const double label_top = axis_y + 30 + bar_gap * double(r.groups.size());
  const double H = label_top + 22 * double((M + 1) / 2) + 40;
  auto xpos = [&](double rank) { return left + (rank - 1) / double(std::max<std::size_t>(M - 1, 1)) * (right - left); };
  std::string s = svg::header(W, H);
  s += svg::line(left, axis_y, right, axis_y, "black", 1.5);
  for (std::size_t k = 1; k <= M; ++k) {
    s += svg::line(xpos(double(k)), axis_y - 6, xpos(double(k)), axis_y, "black");
    s += svg::text(xpos(double(k)), axis_y - 10, std::to_string(k));
  }
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return r.ranks.avg_rank[a] < r.ranks.avg_rank[b]; });
  // Best half labelled on the left, rest on the right.
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t m = order[i];
    const bool lhs = i < (M + 1) / 2;
    const std::size_t row = lhs ? i : M - 1 - i;
    const double y = label_top + 22 * double(row);
    const double x = xpos(r.ranks.avg_rank[m]);
    s += svg::line(x, axis_y, x, y, "black");
    s += svg::line(x, y, lhs ? left : right, y, "black");
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.2f)", r.ranks.avg_rank[m]);
    s += svg::text(lhs ? left + 2 : right - 2, y - 3, t.methods[m] + buf, lhs ? "start" : "end", 11);
  }
  for (std::size_t g = 0; g < r.groups.size(); ++g) {
    double lo = 1e9, hi = -1e9;
    for (int m : r.groups[g]) lo = std::min(lo, r.ranks.avg_rank[m]), hi = std::max(hi, r.ranks.avg_rank[m]);
    const double y = axis_y + 20 + bar_gap * double(g);
    s += svg::line(xpos(lo) - 3, y, xpos(hi) + 3, y, "red", 3);
  }
  char title[96];
  std::snprintf(title, sizeof title, "Average rank (Wilcoxon-Holm, alpha = %.3g)", r.graph.alpha);
  s += svg::text(W / 2, 18, title);
  s += "</svg>\n";
  return s;
}

struct BoxSeries {
  std::string label;  // category on the x axis
  std::string setting;  // e.g. "unsupervised"; one color per setting
  BoxplotStats stats;
};

/// Box plots on a shared value axis with every raw sample scattered on top.
inline std::string boxplot_svg(const std::vector<BoxSeries>& series, const std::string& y_label) {
  std::vector<std::string> settings;
  std::vector<std::string> labels;
  for (const auto& b : series) {
    if (std::find(settings.begin(), settings.end(), b.setting) == settings.end()) settings.push_back(b.setting);
    if (std::find(labels.begin(), labels.end(), b.label) == labels.end()) labels.push_back(b.label);
  }
  double lo = 1e300, hi = -1e300;
  for (const auto& b : series)
    for (double v : b.stats.samples) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) lo -= 0.01, hi += 0.01;
  const double pad = 0.05 * (hi - lo);
  lo -= pad, hi += pad;
  const double slot = 40.0 * double(std::max<std::size_t>(settings.size(), 1)) + 20;
  const double W = 80 + slot * double(labels.size()) + 20, H = 360, top = 30, bottom = H - 60;
  auto ypos = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
  std::string s = svg::header(W, H);
  s += svg::line(70, top, 70, bottom, "black");
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    s += svg::line(66, ypos(v), 70, ypos(v), "black");
    s += svg::text(62, ypos(v) + 4, buf, "end", 10);
  }
  s += svg::text(16, (top + bottom) / 2, y_label, "middle", 11);
  for (const auto& b : series) {
    const std::size_t li = std::size_t(std::find(labels.begin(), labels.end(), b.label) - labels.begin());
    const std::size_t si = std::size_t(std::find(settings.begin(), settings.end(), b.setting) - settings.begin());
    const double cx = 80 + slot * double(li) + 30 + 40.0 * double(si);
    const std::string col = colors[si % 4];
    const auto& st = b.stats;
    s += svg::line(cx, ypos(st.whisker_lo), cx, ypos(st.q1), col);
    s += svg::line(cx, ypos(st.q3), cx, ypos(st.whisker_hi), col);
    s += "<rect x=\"" + svg::num(cx - 12) + "\" y=\"" + svg::num(ypos(st.q3)) + "\" width=\"24\" height=\"" +
         svg::num(std::max(0.5, ypos(st.q1) - ypos(st.q3))) + "\" fill=\"none\" stroke=\"" + col + "\"/>\n";
    s += svg::line(cx - 12, ypos(st.median), cx + 12, ypos(st.median), col, 2);
    for (double v : st.samples)
      s += "<circle cx=\"" + svg::num(cx + 16) + "\" cy=\"" + svg::num(ypos(v)) + "\" r=\"2.5\" fill=\"" + col + "\"/>\n";
  }
  for (std::size_t li = 0; li < labels.size(); ++li)
    s += svg::text(80 + slot * double(li) + slot / 2, bottom + 18, labels[li], "middle", 11);
  for (std::size_t si = 0; si < settings.size(); ++si)
    s += svg::text(80 + 120.0 * double(si), H - 12, "\u25A0 " + settings[si], "start", 11, colors[si % 4]);
  s += "</svg>\n";
  return s;
}

/// Metric versus epoch, one polyline per curve.
inline std::string history_svg(const std::vector<std::pair<std::string, HistoryCurve>>& curves, const std::string& y_label) {
  double x_max = 1, lo = 1e300, hi = -1e300;
  for (const auto& [_, c] : curves)
    for (const auto& p : c.points) x_max = std::max(x_max, double(p.epoch)), lo = std::min(lo, p.value), hi = std::max(hi, p.value);
  if (!(hi > lo)) lo = (lo > 1e299 ? 0 : lo) - 0.01, hi = (hi < -1e299 ? 1 : hi) + 0.01;
  const double W = 640, H = 360, left = 70, right = W - 20, top = 30, bottom = H - 50;
  auto xp = [&](double e) { return left + e / x_max * (right - left); };
  auto yp = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  std::string s = svg::header(W, H);
  s += svg::line(left, bottom, right, bottom, "black");
  s += svg::line(left, top, left, bottom, "black");
  s += svg::text((left + right) / 2, H - 12, "epoch");
  s += svg::text(14, (top + bottom) / 2, y_label, "middle", 11);
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    s += svg::text(left - 4, yp(v) + 4, buf, "end", 10);
  }
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i].second;
    std::string pts;
    for (const auto& p : c.points) pts += svg::num(xp(p.epoch)) + "," + svg::num(yp(p.value)) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colors[i % 6]) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    s += svg::text(right - 4, top + 14 * double(i + 1), curves[i].first, "end", 10);
  }
  s += "</svg>\n";
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << content;
}

}  // namespace fcdd
