#pragma once

// Brute-force reference implementations used only by tests. Each one follows the
// defining formula directly and shares no code with the library.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

/// Pair counting over every (positive, negative) pair; ties count one half.
inline double auc_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::int64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg)++;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return double(twice) / (2.0 * double(pos) * double(neg));
}

/// Direct double sum: every pixel visits every cell.
inline std::vector<double> upsample_direct(const std::vector<double>& map, int rows, int cols, double size,
                                           double jump, double offset, int height, int width, double sigma) {
  std::vector<double> out(std::size_t(height) * width, 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0;
      for (int u = 0; u < rows; ++u)
        for (int v = 0; v < cols; ++v) {
          const double cy = offset + u * jump, cx = offset + v * jump;
          const bool inside = cy - size / 2 <= y && y < cy + size / 2 && cx - size / 2 <= x && x < cx + size / 2;
          if (!inside) continue;
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          acc += map[std::size_t(u) * cols + v] * std::exp(-d2 / (2 * sigma * sigma));
        }
      out[std::size_t(y) * width + x] = acc;
    }
  return out;
}

/// Two-sided signed-rank p-value by enumerating all 2^n sign patterns of the ranks
/// of the nonzero |d|. Ranks are tie-averaged; everything is kept in doubled integers.
inline double wilcoxon_enumerate(const std::vector<double>& d) {
  std::vector<double> nz;
  for (double v : d)
    if (v != 0) nz.push_back(v);
  const std::size_t n = nz.size();
  std::vector<std::int64_t> twice_rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(nz[j]) < std::abs(nz[i])) ++less;
      else if (std::abs(nz[j]) == std::abs(nz[i])) ++equal;
    }
    twice_rank[i] = 2 * less + equal + 1;  // 2 * (less + (equal + 1) / 2)
  }
  std::int64_t total = 0, w_plus = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += twice_rank[i];
    if (nz[i] > 0) w_plus += twice_rank[i];
  }
  const std::int64_t w = std::min(w_plus, total - w_plus);
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += twice_rank[i];
    if (std::min(s, total - s) <= w) ++hits;
  }
  return double(hits) / std::ldexp(1.0, int(n));
}

/// Per-sample FCDD loss written from its scalar definition.
inline double fcdd_unit(double score, int label) {
  return label == 0 ? score : -std::log(1.0 - std::exp(-score));
}

/// Central finite difference of f at x[i].
inline double central_diff(const std::function<double()>& f, double& xi, double h) {
  const double saved = xi;
  xi = saved + h;
  const double up = f();
  xi = saved - h;
  const double down = f();
  xi = saved;
  return (up - down) / (2 * h);
}

}  // namespace oracle
