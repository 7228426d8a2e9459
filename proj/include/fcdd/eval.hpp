#pragma once

// ROC-AUC (sample- and pixel-wise), model evaluation on a test split,
// performance histories over weight snapshots, and reproduction-difference tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcdd/backbone.hpp"
#include "fcdd/data.hpp"
#include "fcdd/explain.hpp"
#include "fcdd/objective.hpp"
#include "fcdd/weights.hpp"

namespace fcdd {

/// Raised when a metric is undefined for the input (e.g. only one class present).
class DegenerateInput : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Mann-Whitney form: P(s+ > s-) + 1/2 P(s+ = s-). Computed from tie-averaged ranks
/// in doubled-integer arithmetic, so the result is exact up to the final division.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: scores and labels differ in length");
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValidationError("roc_auc: non-finite score");
    labels[i] ? ++pos : ++neg;
  }
  if (pos == 0 || neg == 0) throw DegenerateInput("roc_auc: both positive and negative samples are required");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum over positives of twice their (1-based, tie-averaged) rank.
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::int64_t twice_avg = std::int64_t(i + 1 + j);  // 2 * (i+1 + j)/2
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) twice_rank_sum += twice_avg;
    i = j;
  }
  const std::int64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return double(twice_u) / (2.0 * double(pos) * double(neg));
}

inline double roc_auc(const ScoredSet& set) { return roc_auc(set.scores, set.labels); }

/// Pools every pixel of every image into one scored set.
inline double pixel_roc_auc(std::span<const Heatmap> heatmaps, std::span<const Mask> masks) {
  if (heatmaps.size() != masks.size()) throw ValidationError("pixel_roc_auc: heatmap and mask counts differ");
  ScoredSet pooled;
  for (std::size_t i = 0; i < heatmaps.size(); ++i) {
    if (heatmaps[i].height != masks[i].height || heatmaps[i].width != masks[i].width)
      throw ValidationError("pixel_roc_auc: heatmap " + std::to_string(i) + " does not match its mask");
    pooled.scores.insert(pooled.scores.end(), heatmaps[i].values.begin(), heatmaps[i].values.end());
    for (auto v : masks[i].values) pooled.labels.push_back(v != 0);
  }
  if (std::find(pooled.labels.begin(), pooled.labels.end(), 1) == pooled.labels.end())
    throw DegenerateInput("pixel_roc_auc: no anomalous pixels");
  return roc_auc(pooled);
}

/// Diagnostic variant: mean of per-image pixel AUCs over images with both pixel classes.
inline double pixel_roc_auc_per_image(std::span<const Heatmap> heatmaps, std::span<const Mask> masks) {
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < heatmaps.size(); ++i) {
    const auto c = masks[i].count();
    if (c == 0 || c == masks[i].values.size()) continue;
    std::vector<int> labels(masks[i].values.begin(), masks[i].values.end());
    sum += roc_auc(heatmaps[i].values, labels);
    ++n;
  }
  if (n == 0) throw DegenerateInput("pixel_roc_auc_per_image: no image has both pixel classes");
  return sum / n;
}

// ---------------------------------------------------------------------------
// Model evaluation

struct UpsampleConfig {
  std::optional<double> sigma;  // defaults to receptive-field size / 4
};

struct EvalResult {
  std::optional<double> sample_auc;
  std::optional<double> pixel_auc;
  std::vector<double> sample_scores;
  std::vector<Heatmap> heatmaps;  // kept only when requested
};

struct EvalOptions {
  int batch_size = 32;
  bool pixel = true;
  bool keep_heatmaps = false;
  UpsampleConfig upsample;
};

inline EvalResult evaluate(const Network& net, std::span<const Sample> samples, const EvalOptions& opt = {}) {
  if (samples.empty()) throw ValidationError("evaluate: empty test split");
  EvalResult r;
  const Shape3 in = net.input_shape();
  const ReceptiveField rf = receptive_field(net.spec());
  const double sigma = opt.upsample.sigma.value_or(default_sigma(rf));
  std::vector<int> labels;
  std::vector<Heatmap> heatmaps;
  std::vector<Mask> masks;
  for (std::size_t b = 0; b < samples.size(); b += std::size_t(opt.batch_size)) {
    const std::size_t e = std::min(samples.size(), b + std::size_t(opt.batch_size));
    std::vector<Tensor> imgs;
    for (std::size_t i = b; i < e; ++i) imgs.push_back(samples[i].image);
    const Tensor latent = net.forward(stack(imgs));
    auto maps = score_maps(latent, in);
    for (std::size_t i = b; i < e; ++i) {
      auto& m = maps[i - b];
      m.id = samples[i].id;
      r.sample_scores.push_back(sample_score(m));
      labels.push_back(samples[i].label);
      if (opt.pixel) {
        heatmaps.push_back(upsample_heatmap(m, rf, in.height, in.width, sigma));
        masks.push_back(samples[i].mask);
      }
    }
  }
  const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
  if (both) r.sample_auc = roc_auc(r.sample_scores, labels);
  if (opt.pixel) {
    bool any = false;
    for (const auto& m : masks) any |= m.count() > 0;
    if (any) r.pixel_auc = pixel_roc_auc(heatmaps, masks);
    if (opt.keep_heatmaps) r.heatmaps = std::move(heatmaps);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Performance history

enum class HistoryMetric { PixelAuc, SampleAuc };

struct SnapshotRef {
  int epoch = 0;
  std::filesystem::path path;
};

struct HistoryPoint {
  int epoch = 0;
  double value = 0;
};

struct HistoryGap {
  int epoch = 0;
  std::string reason;
};

struct HistoryCurve {
  std::vector<HistoryPoint> points;
  std::vector<HistoryGap> gaps;
};

/// One metric value per snapshot. `base` supplies the architecture; its parameters
/// are replaced by each snapshot's. Unloadable snapshots become gaps.
inline HistoryCurve performance_history(const Network& base, std::span<const SnapshotRef> snapshots,
                                        std::span<const Sample> test, HistoryMetric metric = HistoryMetric::PixelAuc,
                                        const EvalOptions& opt = {}) {
  HistoryCurve curve;
  for (std::size_t i = 1; i < snapshots.size(); ++i)
    if (snapshots[i].epoch <= snapshots[i - 1].epoch)
      throw ValidationError("performance_history: snapshots must be ordered by strictly increasing epoch");
  EvalOptions eo = opt;
  eo.pixel = metric == HistoryMetric::PixelAuc;
  for (const auto& snap : snapshots) {
    Network net = base;
    try {
      load_weights(net, snap.path);
    } catch (const std::exception& e) {
      curve.gaps.push_back({snap.epoch, e.what()});
      continue;
    }
    const auto r = evaluate(net, test, eo);
    const auto v = metric == HistoryMetric::PixelAuc ? r.pixel_auc : r.sample_auc;
    if (!v) {
      curve.gaps.push_back({snap.epoch, "metric undefined on this split"});
      continue;
    }
    curve.points.push_back({snap.epoch, *v});
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Reproduction differences

struct DiffStats {
  std::vector<std::string> classes;
  std::vector<double> per_class_abs_diff;  // percent points
  double max_diff = 0;
  double mean_diff = 0;
  double mean_rocauc_diff = 0;
};

/// Inputs are fractions in [0, 1]; outputs are absolute differences in percent points.
inline DiffStats diff_table(const std::map<std::string, double>& ours, const std::map<std::string, double>& reference) {
  if (ours.empty()) throw ValidationError("diff_table: no classes");
  if (ours.size() != reference.size()) throw ValidationError("diff_table: class keys differ");
  DiffStats d;
  double sum_ours = 0, sum_ref = 0;
  for (const auto& [cls, v] : ours) {
    const auto it = reference.find(cls);
    if (it == reference.end()) throw ValidationError("diff_table: class '" + cls + "' missing from the reference");
    d.classes.push_back(cls);
    d.per_class_abs_diff.push_back(100.0 * std::abs(v - it->second));
    sum_ours += v;
    sum_ref += it->second;
  }
  d.max_diff = *std::max_element(d.per_class_abs_diff.begin(), d.per_class_abs_diff.end());
  d.mean_diff = std::accumulate(d.per_class_abs_diff.begin(), d.per_class_abs_diff.end(), 0.0) / double(ours.size());
  d.mean_rocauc_diff = 100.0 * std::abs(sum_ours - sum_ref) / double(ours.size());
  return d;
}

}  // namespace fcdd
