#pragma once

// Full-resolution heatmaps from low-resolution score maps, rendering, and export.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "fcdd/backbone.hpp"
#include "fcdd/image_io.hpp"
#include "fcdd/objective.hpp"

namespace fcdd {

struct HeatmapProvenance {
  std::string source_id;
  ReceptiveField rf;
  double sigma = 0;
};

struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  HeatmapProvenance provenance;

  double at(int y, int x) const { return values[std::size_t(y) * width + x]; }
};

/// Default Gaussian width: a quarter of the receptive field.
inline double default_sigma(const ReceptiveField& rf) { return rf.size / 4.0; }

/// Pixel center of grid cell index `i` along one axis.
inline double cell_center(const ReceptiveField& rf, int i) { return rf.offset + i * rf.jump; }

/// Each cell spreads its score over a size x size window around its center with an
/// unnormalized Gaussian weight exp(-d^2 / (2 sigma^2)). Along an axis the window
/// covers pixel coordinates p with  center - size/2 <= p < center + size/2.
inline Heatmap upsample_heatmap(const ScoreMap& map, const ReceptiveField& rf, int height, int width, double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw ValidationError("upsample_heatmap: sigma must be positive");
  if (height != map.source_height || width != map.source_width)
    throw ValidationError("upsample_heatmap: target shape differs from the score map's source image");
  if (map.values.size() != std::size_t(map.rows) * map.cols) throw ValidationError("upsample_heatmap: malformed score map");
  Heatmap hm;
  hm.height = height;
  hm.width = width;
  hm.values.assign(std::size_t(height) * width, 0.0);
  hm.provenance = {map.id, rf, sigma};
  const double half = rf.size / 2.0;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  // Window bounds and 1-D weights are shared by every cell in a row/column.
  auto axis = [&](int cells, int extent) {
    std::vector<std::pair<int, std::vector<double>>> w(cells);
    for (int i = 0; i < cells; ++i) {
      const double c = cell_center(rf, i);
      const int lo = std::max(0, int(std::ceil(c - half)));
      const int hi = std::min(extent, int(std::ceil(c + half)));  // exclusive
      w[i].first = lo;
      for (int p = lo; p < hi; ++p) w[i].second.push_back(std::exp(-(p - c) * (p - c) * inv2s2));
    }
    return w;
  };
  const auto wy = axis(map.rows, height);
  const auto wx = axis(map.cols, width);
  for (int u = 0; u < map.rows; ++u)
    for (int v = 0; v < map.cols; ++v) {
      const double s = map.at(u, v);
      if (s == 0) continue;
      const auto& [y0, gy] = wy[u];
      const auto& [x0, gx] = wx[v];
      for (std::size_t a = 0; a < gy.size(); ++a) {
        double* row = hm.values.data() + std::size_t(y0 + a) * width + x0;
        const double sy = s * gy[a];
        for (std::size_t b = 0; b < gx.size(); ++b) row[b] += sy * gx[b];
      }
    }
  return hm;
}

// ---------------------------------------------------------------------------
// Rendering

enum class NormMode { PerImage, Global };

struct RenderOptions {
  NormMode mode = NormMode::PerImage;
  double lo = 0;  // global bounds
  double hi = 1;
};

struct RenderedHeatmap {
  Image8 intensity;  // single channel, monotone in score
  NormMode mode = NormMode::PerImage;
  double lo = 0;
  double hi = 0;
  bool constant = false;
};

/// Linear map of scores to [0, 255]. Per-image mode uses this heatmap's range; a
/// constant heatmap renders all-zero with `constant` set. Global mode clips to [lo, hi].
inline RenderedHeatmap render_heatmap(const Heatmap& hm, const RenderOptions& opt = {}) {
  for (double v : hm.values)
    if (!std::isfinite(v)) throw ValidationError("render_heatmap: non-finite heatmap");
  RenderedHeatmap r;
  r.mode = opt.mode;
  r.intensity = Image8(1, hm.height, hm.width);
  if (opt.mode == NormMode::Global) {
    if (!(opt.hi > opt.lo)) throw ValidationError("render_heatmap: global bounds require max > min");
    r.lo = opt.lo, r.hi = opt.hi;
  } else {
    const auto [mn, mx] = std::minmax_element(hm.values.begin(), hm.values.end());
    r.lo = hm.values.empty() ? 0 : *mn;
    r.hi = hm.values.empty() ? 0 : *mx;
    if (!(r.hi > r.lo)) {
      r.constant = true;
      return r;
    }
  }
  const double scale = 255.0 / (r.hi - r.lo);
  for (std::size_t k = 0; k < hm.values.size(); ++k)
    r.intensity.pixels[k] = std::uint8_t(std::lround(std::clamp((hm.values[k] - r.lo) * scale, 0.0, 255.0)));
  return r;
}

/// Piecewise-linear dark-purple-orange-yellow palette; luminance rises strictly with intensity.
inline std::array<std::uint8_t, 3> colormap(std::uint8_t intensity) {
  static constexpr std::array<std::array<double, 3>, 5> anchors = {
      {{0, 0, 4}, {87, 16, 110}, {188, 55, 84}, {249, 142, 9}, {252, 255, 164}}};
  const double t = intensity / 255.0 * (anchors.size() - 1);
  const std::size_t i = std::min<std::size_t>(std::size_t(t), anchors.size() - 2);
  const double f = t - double(i);
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c)
    rgb[c] = std::uint8_t(std::lround(anchors[i][c] + f * (anchors[i + 1][c] - anchors[i][c])));
  return rgb;
}

inline Image8 apply_colormap(const Image8& intensity) {
  Image8 out(3, intensity.height, intensity.width);
  for (int y = 0; y < intensity.height; ++y)
    for (int x = 0; x < intensity.width; ++x) {
      const auto rgb = colormap(intensity.at(y, x, 0));
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
    }
  return out;
}

inline std::string to_string(NormMode m) { return m == NormMode::PerImage ? "per_image" : "global"; }

/// Writes `<stem>.png` (colormapped) and `<stem>.json` (normalization and upsampling metadata).
inline void export_heatmap(const std::filesystem::path& stem, const Heatmap& hm, const RenderedHeatmap& r) {
  write_png(stem.string() + ".png", apply_colormap(r.intensity));
  const auto& p = hm.provenance;
  nlohmann::json meta = {{"source", p.source_id},
                         {"normalization", to_string(r.mode)},
                         {"min", r.lo},
                         {"max", r.hi},
                         {"constant", r.constant},
                         {"colormap", "fcdd-inferno-5"},
                         {"receptive_field", {{"size", p.rf.size}, {"jump", p.rf.jump}, {"offset", p.rf.offset}}},
                         {"sigma", p.sigma},
                         {"shape", {hm.height, hm.width}}};
  std::ofstream(stem.string() + ".json") << meta.dump(2) << '\n';
}

}  // namespace fcdd
