#pragma once

// Pseudo-Huber score maps, image-level scores, and the sample- and
// pixel-supervised FCDD objectives. The *_grad variants return the gradient
// with respect to the raw latent tensor for use in training.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcdd/backbone.hpp"
#include "fcdd/tensor.hpp"

namespace fcdd {

struct ScoreMap {
  int rows = 0;  // U
  int cols = 0;  // V
  std::vector<double> values;
  int source_height = 0;
  int source_width = 0;
  std::string id;

  double at(int u, int v) const { return values[std::size_t(u) * cols + v]; }
  double& at(int u, int v) { return values[std::size_t(u) * cols + v]; }
};

struct LabeledBatchScores {
  std::vector<ScoreMap> score_maps;
  std::vector<int> labels;                 // 0 normal, 1 anomalous
  std::optional<std::vector<Mask>> masks;  // full-resolution ground truth
};

/// Lower clamp on scores entering the anomalous term.
inline constexpr double kScoreFloor = 1e-12;

/// sqrt(|z|^2 + 1) - 1 for each grid cell.
inline ScoreMap huber_score_map(const LatentGrid& grid) {
  const Tensor& z = grid.values;
  if (!z.all_finite()) throw ValidationError("huber_score_map: non-finite latent grid");
  ScoreMap m;
  m.rows = z.h();
  m.cols = z.w();
  m.source_height = grid.source_height;
  m.source_width = grid.source_width;
  m.values.assign(std::size_t(m.rows) * m.cols, 0.0);
  for (int u = 0; u < m.rows; ++u)
    for (int v = 0; v < m.cols; ++v) {
      double sq = 0;
      for (int c = 0; c < z.c(); ++c) sq += z(0, c, u, v) * z(0, c, u, v);
      m.at(u, v) = std::sqrt(sq + 1.0) - 1.0;
    }
  return m;
}

inline double sample_score(const ScoreMap& map) {
  if (map.values.empty()) throw ValidationError("sample_score: empty score map");
  double s = 0;
  for (double v : map.values) s += v;
  return s / double(map.values.size());
}

/// Loss contribution of an anomalous unit with score s: -log(1 - exp(-s)).
inline double anomalous_term(double s) { return -std::log(-std::expm1(-std::max(s, kScoreFloor))); }

/// d anomalous_term / ds.
inline double anomalous_term_slope(double s) { return s > kScoreFloor ? -1.0 / std::expm1(s) : 0.0; }

inline double unit_loss(double score, int label) { return label ? anomalous_term(score) : score; }

namespace detail {

inline void check_labels(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
}

}  // namespace detail

inline double fcdd_loss(const LabeledBatchScores& batch) {
  const std::size_t n = batch.score_maps.size();
  if (n == 0) throw ValidationError("fcdd_loss: empty batch");
  if (batch.labels.size() != n) throw ValidationError("fcdd_loss: label count mismatch");
  detail::check_labels(batch.labels);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += unit_loss(sample_score(batch.score_maps[i]), batch.labels[i]);
  return total / double(n);
}

enum class MaskPooling { Max, MeanThreshold };

struct PixelLossOptions {
  MaskPooling pooling = MaskPooling::Max;
  double mean_threshold = 0.5;
  /// Weight normal and anomalous cells equally instead of a flat mean.
  bool balance = false;
};

/// Reduces a full-resolution mask to a (rows, cols) cell mask. Cell (u, v) covers
/// pixel rows [floor(u*H/rows), ceil((u+1)*H/rows)) and likewise for columns.
inline Mask downsample_mask(const Mask& mask, int rows, int cols, const PixelLossOptions& opt = {}) {
  if (rows < 1 || cols < 1 || rows > mask.height || cols > mask.width)
    throw ValidationError("downsample_mask: invalid target grid");
  Mask out(rows, cols);
  for (int u = 0; u < rows; ++u) {
    const int y0 = u * mask.height / rows;
    const int y1 = ((u + 1) * mask.height + rows - 1) / rows;
    for (int v = 0; v < cols; ++v) {
      const int x0 = v * mask.width / cols;
      const int x1 = ((v + 1) * mask.width + cols - 1) / cols;
      int hits = 0, total = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hits += mask.at(y, x) != 0, ++total;
      out.at(u, v) = opt.pooling == MaskPooling::Max ? hits > 0 : double(hits) / total >= opt.mean_threshold;
    }
  }
  return out;
}

namespace detail {

inline void check_mask(const Mask& m, int h, int w, int label) {
  if (m.height != h || m.width != w) throw ValidationError("mask shape does not match the source image");
  bool any = false;
  for (auto v : m.values) {
    if (v > 1) throw ValidationError("mask values must be 0 or 1");
    any |= v != 0;
  }
  if (label == 0 && any) throw ValidationError("normal sample carries a non-empty anomaly mask");
}

/// Flat or balanced mean of per-cell losses.
struct CellAccumulator {
  double normal_sum = 0, anomalous_sum = 0;
  std::size_t normal_n = 0, anomalous_n = 0;

  void add(double loss, bool anomalous) {
    if (anomalous) anomalous_sum += loss, ++anomalous_n;
    else normal_sum += loss, ++normal_n;
  }
  // Weight applied to each cell's loss of the given kind.
  double weight(bool anomalous, bool balance) const {
    const std::size_t total = normal_n + anomalous_n;
    if (!balance || normal_n == 0 || anomalous_n == 0) return 1.0 / double(total);
    return 0.5 / double(anomalous ? anomalous_n : normal_n);
  }
  double value(bool balance) const {
    return normal_sum * (normal_n ? weight(false, balance) : 0.0) +
           anomalous_sum * (anomalous_n ? weight(true, balance) : 0.0);
  }
};

}  // namespace detail

inline double pixel_fcdd_loss(const LabeledBatchScores& batch, const PixelLossOptions& opt = {}) {
  const std::size_t n = batch.score_maps.size();
  if (n == 0) throw ValidationError("pixel_fcdd_loss: empty batch");
  if (!batch.masks || batch.masks->size() != n) throw ValidationError("pixel_fcdd_loss: a mask is required for every sample");
  if (batch.labels.size() != n) throw ValidationError("pixel_fcdd_loss: label count mismatch");
  detail::check_labels(batch.labels);
  detail::CellAccumulator acc;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& map = batch.score_maps[i];
    const auto& mask = (*batch.masks)[i];
    detail::check_mask(mask, map.source_height, map.source_width, batch.labels[i]);
    const Mask cells = downsample_mask(mask, map.rows, map.cols, opt);
    for (std::size_t k = 0; k < map.values.size(); ++k)
      acc.add(unit_loss(map.values[k], cells.values[k]), cells.values[k] != 0);
  }
  return acc.value(opt.balance);
}

// ---------------------------------------------------------------------------
// Training-path objectives on raw latent tensors (B, C', U, V).

struct LossAndGrad {
  double loss = 0;
  Tensor grad;  // d loss / d latent
  std::vector<double> sample_scores;
};

namespace detail {

/// Per-cell pseudo-Huber value and the factor 1/sqrt(|z|^2+1) used by its gradient.
inline void huber_cells(const Tensor& z, int n, std::vector<double>& score, std::vector<double>& inv_norm) {
  const std::size_t cells = std::size_t(z.h()) * z.w();
  score.assign(cells, 0.0);
  inv_norm.assign(cells, 0.0);
  for (int u = 0; u < z.h(); ++u)
    for (int v = 0; v < z.w(); ++v) {
      double sq = 0;
      for (int c = 0; c < z.c(); ++c) sq += z(n, c, u, v) * z(n, c, u, v);
      const double r = std::sqrt(sq + 1.0);
      score[std::size_t(u) * z.w() + v] = r - 1.0;
      inv_norm[std::size_t(u) * z.w() + v] = 1.0 / r;
    }
}

}  // namespace detail

inline LossAndGrad fcdd_loss_grad(const Tensor& latent, std::span<const int> labels) {
  const int n = latent.n();
  if (n == 0) throw ValidationError("fcdd_loss: empty batch");
  if (labels.size() != std::size_t(n)) throw ValidationError("fcdd_loss: label count mismatch");
  detail::check_labels(labels);
  if (!latent.all_finite()) throw RuntimeFailure("fcdd_loss: non-finite latent grid");
  LossAndGrad out{0.0, Tensor(n, latent.sample_shape()), {}};
  const double cells = double(latent.h()) * latent.w();
  std::vector<double> score, inv;
  for (int i = 0; i < n; ++i) {
    detail::huber_cells(latent, i, score, inv);
    double s = 0;
    for (double v : score) s += v;
    s /= cells;
    out.sample_scores.push_back(s);
    out.loss += unit_loss(s, labels[i]) / n;
    const double dl_ds = (labels[i] ? anomalous_term_slope(s) : 1.0) / n;
    for (int c = 0; c < latent.c(); ++c)
      for (int u = 0; u < latent.h(); ++u)
        for (int v = 0; v < latent.w(); ++v)
          out.grad(i, c, u, v) = dl_ds / cells * latent(i, c, u, v) * inv[std::size_t(u) * latent.w() + v];
  }
  return out;
}

/// `cell_masks` are already at grid resolution (see downsample_mask).
inline LossAndGrad pixel_fcdd_loss_grad(const Tensor& latent, std::span<const Mask> cell_masks, bool balance = false) {
  const int n = latent.n();
  if (n == 0) throw ValidationError("pixel_fcdd_loss: empty batch");
  if (cell_masks.size() != std::size_t(n)) throw ValidationError("pixel_fcdd_loss: mask count mismatch");
  if (!latent.all_finite()) throw RuntimeFailure("pixel_fcdd_loss: non-finite latent grid");
  LossAndGrad out{0.0, Tensor(n, latent.sample_shape()), {}};
  std::vector<std::vector<double>> scores(n), invs(n);
  detail::CellAccumulator acc;
  for (int i = 0; i < n; ++i) {
    const Mask& m = cell_masks[i];
    if (m.height != latent.h() || m.width != latent.w()) throw ValidationError("cell mask shape mismatch");
    detail::huber_cells(latent, i, scores[i], invs[i]);
    double s = 0;
    for (std::size_t k = 0; k < scores[i].size(); ++k) {
      acc.add(unit_loss(scores[i][k], m.values[k]), m.values[k] != 0);
      s += scores[i][k];
    }
    out.sample_scores.push_back(s / double(scores[i].size()));
  }
  out.loss = acc.value(balance);
  for (int i = 0; i < n; ++i)
    for (int u = 0; u < latent.h(); ++u)
      for (int v = 0; v < latent.w(); ++v) {
        const std::size_t k = std::size_t(u) * latent.w() + v;
        const bool anomalous = cell_masks[i].values[k] != 0;
        const double dl_ds = acc.weight(anomalous, balance) * (anomalous ? anomalous_term_slope(scores[i][k]) : 1.0);
        for (int c = 0; c < latent.c(); ++c) out.grad(i, c, u, v) = dl_ds * latent(i, c, u, v) * invs[i][k];
      }
  return out;
}

inline std::vector<ScoreMap> score_maps(const Tensor& latent, Shape3 source) {
  std::vector<ScoreMap> maps;
  for (const auto& g : to_grids(latent, source)) maps.push_back(huber_score_map(g));
  return maps;
}

}  // namespace fcdd
