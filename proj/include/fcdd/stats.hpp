#pragma once

// Cross-method comparison over several datasets: fractional ranks, the
// Wilcoxon signed-rank test (exact for small samples), Holm's step-down
// correction, critical-difference groups, and box-plot summaries.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcdd/tensor.hpp"

namespace fcdd {

/// methods x datasets matrix of ROC-AUC percentages.
struct ScoreTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::vector<std::vector<double>> values;  // [method][dataset]

  void validate() const {
    if (methods.empty() || datasets.empty()) throw ValidationError("score table is empty");
    if (values.size() != methods.size()) throw ValidationError("score table is not rectangular");
    for (std::size_t m = 0; m < values.size(); ++m) {
      if (values[m].size() != datasets.size()) throw ValidationError("score table is not rectangular (method " + methods[m] + ")");
      for (std::size_t d = 0; d < datasets.size(); ++d)
        if (!(values[m][d] >= 0 && values[m][d] <= 100))
          throw ValidationError("score for " + methods[m] + " on " + datasets[d] + " is outside [0, 100]");
    }
  }

  std::size_t index_of(const std::string& method) const {
    const auto it = std::find(methods.begin(), methods.end(), method);
    if (it == methods.end()) throw ValidationError("unknown method " + method);
    return std::size_t(it - methods.begin());
  }
};

struct RankTable {
  std::vector<std::vector<double>> ranks;  // [method][dataset], 1 = best
  std::vector<double> avg_rank;
};

/// Fractional ranks of a single column: higher score -> smaller rank; ties share the mean rank.
inline std::vector<double> fractional_ranks_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> r(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = (double(i + 1) + double(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
    i = j;
  }
  return r;
}

inline RankTable rank_per_dataset(const ScoreTable& t) {
  t.validate();
  const std::size_t M = t.methods.size(), D = t.datasets.size();
  RankTable r;
  r.ranks.assign(M, std::vector<double>(D));
  r.avg_rank.assign(M, 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> col(M);
    for (std::size_t m = 0; m < M; ++m) col[m] = t.values[m][d];
    const auto rk = fractional_ranks_desc(col);
    for (std::size_t m = 0; m < M; ++m) r.ranks[m][d] = rk[m];
  }
  for (std::size_t m = 0; m < M; ++m)
    r.avg_rank[m] = std::accumulate(r.ranks[m].begin(), r.ranks[m].end(), 0.0) / double(D);
  return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

enum class ZeroMethod {
  Discard,  // drop zero differences before ranking
  Pratt,    // rank zeros with the rest, then drop them
};

struct WilcoxonResult {
  double statistic = 0;  // min(W+, W-)
  double p_value = 1;
  bool no_signal = false;  // every difference was zero
  bool exact = true;
  int n = 0;  // nonzero differences used
};

inline constexpr int kExactWilcoxonLimit = 25;

/// Two-sided test on paired samples. Exact (distribution of W+ over all 2^n sign
/// assignments, computed by counting) for n <= 25, normal approximation with tie-exact
/// variance above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                           ZeroMethod zeros = ZeroMethod::Discard) {
  if (x.size() != y.size() || x.empty()) throw ValidationError("wilcoxon: samples must be paired and non-empty");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (v != 0 || zeros == ZeroMethod::Pratt) d.push_back(v);
  }
  WilcoxonResult r;
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0; })) {
    r.no_signal = true;
    return r;
  }
  // Doubled tie-averaged ranks of |d| (integers).
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<std::int64_t> twice_rank(d.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k < j; ++k) twice_rank[order[k]] = std::int64_t(i + 1 + j);
    i = j;
  }
  std::vector<std::int64_t> ranks;
  std::int64_t w_plus = 0, total = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0) continue;
    ranks.push_back(twice_rank[i]);
    total += twice_rank[i];
    if (d[i] > 0) w_plus += twice_rank[i];
  }
  const std::int64_t w = std::min(w_plus, total - w_plus);
  r.n = int(ranks.size());
  r.statistic = double(w) / 2.0;
  if (r.n <= kExactWilcoxonLimit) {
    std::vector<std::uint64_t> count(std::size_t(total) + 1, 0);
    count[0] = 1;
    std::int64_t reach = 0;
    for (auto rk : ranks) {
      for (std::int64_t s = reach; s >= 0; --s)
        if (count[std::size_t(s)]) count[std::size_t(s + rk)] += count[std::size_t(s)];
      reach += rk;
    }
    std::uint64_t hits = 0;
    for (std::int64_t s = 0; s <= total; ++s)
      if (std::min(s, total - s) <= w) hits += count[std::size_t(s)];
    r.p_value = double(hits) / std::ldexp(1.0, r.n);
    r.exact = true;
  } else {
    double mean = 0, var = 0;
    for (auto rk : ranks) mean += rk / 4.0, var += (rk / 2.0) * (rk / 2.0) / 4.0;
    const double z = (double(w) / 2.0 - mean) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    r.exact = false;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Holm

/// Step-down: with p sorted ascending, reject while p_(i) <= alpha / (m - i + 1).
inline std::vector<bool> holm_adjust(std::span<const double> pvalues, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("holm: alpha must lie in (0, 1)");
  for (double p : pvalues)
    if (!(p >= 0 && p <= 1)) throw ValidationError("holm: p-values must lie in [0, 1]");
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (pvalues[order[i]] > alpha / double(m - i)) break;
    reject[order[i]] = true;
  }
  return reject;
}

// ---------------------------------------------------------------------------
// Significance graph and groups

struct SignificanceGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<int, int>> edges;  // i < j, not significantly different
  double alpha = 0.05;

  bool connected(int a, int b) const {
    if (a > b) std::swap(a, b);
    return std::find(edges.begin(), edges.end(), std::pair{a, b}) != edges.end();
  }
};

/// Maximal cliques (Bron-Kerbosch with pivoting), each sorted ascending, list sorted.
inline std::vector<std::vector<int>> maximal_cliques(const SignificanceGraph& g) {
  const int n = int(g.nodes.size());
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (auto [a, b] : g.edges) adj[a][b] = adj[b][a] = true;
  std::vector<std::vector<int>> out;
  auto bk = [&](auto&& self, std::vector<int> r, std::vector<int> p, std::vector<int> x) -> void {
    if (p.empty() && x.empty()) {
      std::sort(r.begin(), r.end());
      out.push_back(r);
      return;
    }
    int pivot = !p.empty() ? p.front() : x.front();
    std::size_t best = 0;
    for (int u : p) {
      std::size_t c = 0;
      for (int v : p) c += adj[u][v];
      if (c >= best) best = c, pivot = u;
    }
    std::vector<int> candidates;
    for (int v : p)
      if (!adj[pivot][v]) candidates.push_back(v);
    for (int v : candidates) {
      std::vector<int> r2 = r, p2, x2;
      r2.push_back(v);
      for (int u : p)
        if (adj[v][u]) p2.push_back(u);
      for (int u : x)
        if (adj[v][u]) x2.push_back(u);
      self(self, r2, p2, x2);
      p.erase(std::find(p.begin(), p.end(), v));
      x.push_back(v);
    }
  };
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  bk(bk, {}, all, {});
  std::sort(out.begin(), out.end());
  return out;
}

struct CdResult {
  RankTable ranks;
  std::vector<std::vector<double>> p_values;  // symmetric, diagonal 1
  std::vector<std::vector<bool>> significant;  // Holm decision per pair
  SignificanceGraph graph;
  std::vector<std::vector<int>> groups;  // maximal cliques with >= 2 methods
};

/// Pairwise Wilcoxon on per-dataset scores, Holm over all pairs, groups from the
/// non-significance graph.
inline CdResult cd_diagram(const ScoreTable& t, double alpha = 0.05, ZeroMethod zeros = ZeroMethod::Discard) {
  t.validate();
  const std::size_t M = t.methods.size();
  if (M < 2 || t.datasets.size() < 2) throw ValidationError("cd_diagram: at least two methods and two datasets are required");
  CdResult r;
  r.ranks = rank_per_dataset(t);
  r.p_values.assign(M, std::vector<double>(M, 1.0));
  r.significant.assign(M, std::vector<bool>(M, false));
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> ps;
  for (std::size_t a = 0; a < M; ++a)
    for (std::size_t b = a + 1; b < M; ++b) {
      const double p = wilcoxon_signed_rank(t.values[a], t.values[b], zeros).p_value;
      r.p_values[a][b] = r.p_values[b][a] = p;
      pairs.emplace_back(int(a), int(b));
      ps.push_back(p);
    }
  const auto reject = holm_adjust(ps, alpha);
  r.graph.nodes = t.methods;
  r.graph.alpha = alpha;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [a, b] = pairs[k];
    r.significant[a][b] = r.significant[b][a] = reject[k];
    if (!reject[k]) r.graph.edges.push_back(pairs[k]);
  }
  for (auto& c : maximal_cliques(r.graph))
    if (c.size() >= 2) r.groups.push_back(std::move(c));
  return r;
}

/// Machine-readable record of a CD diagram; byte-stable for identical inputs.
inline nlohmann::json cd_sidecar(const ScoreTable& t, const CdResult& r) {
  nlohmann::json avg = nlohmann::json::object();
  for (std::size_t m = 0; m < t.methods.size(); ++m) avg[t.methods[m]] = r.ranks.avg_rank[m];
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    nlohmann::json names = nlohmann::json::array();
    for (int i : g) names.push_back(t.methods[i]);
    groups.push_back(names);
  }
  return {{"alpha", r.graph.alpha},
          {"methods", t.methods},
          {"datasets", t.datasets},
          {"avg_rank", avg},
          {"ranks", r.ranks.ranks},
          {"p_values", r.p_values},
          {"holm_significant", r.significant},
          {"groups", groups}};
}

// ---------------------------------------------------------------------------
// Box plots

struct BoxplotStats {
  double median = 0, q1 = 0, q3 = 0;
  double whisker_lo = 0, whisker_hi = 0;
  std::vector<double> outliers;
  std::vector<double> samples;
};

/// Linearly interpolated quantile of sorted data (position q * (n - 1)).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * double(sorted.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

inline BoxplotStats boxplot_stats(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("boxplot_stats: no samples");
  BoxplotStats b;
  b.samples.assign(samples.begin(), samples.end());
  std::vector<double> s = b.samples;
  std::sort(s.begin(), s.end());
  b.q1 = quantile_sorted(s, 0.25);
  b.median = quantile_sorted(s, 0.5);
  b.q3 = quantile_sorted(s, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  bool have_lo = false, have_hi = false;
  for (double v : s) {
    if (v < lo || v > hi) {
      b.outliers.push_back(v);
      continue;
    }
    if (!have_lo || v < b.whisker_lo) b.whisker_lo = v, have_lo = true;
    if (!have_hi || v > b.whisker_hi) b.whisker_hi = v, have_hi = true;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Score table CSV: header "method,<dataset>,...", one method per row, percentages.

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (...) {
    return false;
  }
  return used == s.size() && std::isfinite(out);
}

}  // namespace detail

inline ScoreTable parse_score_table(std::istream& in) {
  ScoreTable t;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (!header) {
      if (cells.size() < 2 || cells[0] != "method")
        throw ValidationError("line " + std::to_string(lineno) + ": header must start with 'method' followed by dataset names");
      t.datasets.assign(cells.begin() + 1, cells.end());
      header = true;
      continue;
    }
    if (cells.size() != t.datasets.size() + 1)
      throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.datasets.size() + 1) +
                            " cells, found " + std::to_string(cells.size()));
    std::vector<double> row;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      double v;
      if (!detail::parse_double(cells[k], v))
        throw ValidationError("line " + std::to_string(lineno) + ", column '" + t.datasets[k - 1] + "': '" + cells[k] +
                              "' is not a number");
      if (v < 0 || v > 100)
        throw ValidationError("line " + std::to_string(lineno) + ", column '" + t.datasets[k - 1] + "': " + cells[k] +
                              " is outside [0, 100]");
      row.push_back(v);
    }
    t.methods.push_back(cells[0]);
    t.values.push_back(std::move(row));
  }
  if (!header) throw ValidationError("score table CSV is empty");
  t.validate();
  return t;
}

inline ScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open score table " + path.string());
  return parse_score_table(in);
}

}  // namespace fcdd
