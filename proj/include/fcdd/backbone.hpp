#pragma once

// Fully-convolutional backbones: layer descriptors, the three reference
// architectures, a trainable parameter state with forward/backward passes,
// and receptive-field arithmetic.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "fcdd/tensor.hpp"

namespace fcdd {

enum class ArchId { FMNIST_CNN, CIFAR_CNN, VGG11_FCDD, CUSTOM };

inline std::string to_string(ArchId a) {
  switch (a) {
    case ArchId::FMNIST_CNN: return "FMNIST_CNN";
    case ArchId::CIFAR_CNN: return "CIFAR_CNN";
    case ArchId::VGG11_FCDD: return "VGG11_FCDD";
    case ArchId::CUSTOM: return "CUSTOM";
  }
  return "?";
}

inline ArchId parse_arch(const std::string& s) {
  if (s == "FMNIST_CNN" || s == "fmnist") return ArchId::FMNIST_CNN;
  if (s == "CIFAR_CNN" || s == "cifar") return ArchId::CIFAR_CNN;
  if (s == "VGG11_FCDD" || s == "vgg11") return ArchId::VGG11_FCDD;
  if (s == "CUSTOM" || s == "custom") return ArchId::CUSTOM;
  throw ValidationError("unknown architecture id: " + s);
}

struct ConvLayer {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  bool bias = false;
};

struct MaxPoolLayer {
  int kernel = 2;
  int stride = 2;
  int padding = 0;
};

struct BatchNormLayer {
  bool affine = false;
  double eps = 1e-4;
  double momentum = 0.1;
};

/// Leaky ReLU; slope 0 is a plain ReLU.
struct ActivationLayer {
  double slope = 0.01;
};

using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, BatchNormLayer, ActivationLayer>;

struct BackboneSpec {
  ArchId arch = ArchId::CUSTOM;
  std::vector<LayerSpec> layers;
  int frozen_prefix_len = 0;
  Shape3 input_shape;
  bool pretrained = false;
};

namespace detail {

inline int window_out(int extent, int kernel, int stride, int padding) {
  const int span = extent + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

}  // namespace detail

/// Output shape of every layer, in order. Throws on inconsistent geometry.
inline std::vector<Shape3> infer_shapes(const BackboneSpec& spec) {
  const Shape3 in = spec.input_shape;
  if (in.channels <= 0 || in.height <= 0 || in.width <= 0)
    throw ValidationError("input shape must be positive");
  std::vector<Shape3> shapes;
  Shape3 s = in;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      if (c->kernel < 1 || c->stride < 1 || c->padding < 0 || c->out_channels < 1)
        throw ValidationError("invalid convolution at layer " + std::to_string(i));
      s = {c->out_channels, detail::window_out(s.height, c->kernel, c->stride, c->padding),
           detail::window_out(s.width, c->kernel, c->stride, c->padding)};
    } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
      if (p->kernel < 1 || p->stride < 1 || p->padding < 0 || 2 * p->padding > p->kernel)
        throw ValidationError("invalid max-pool at layer " + std::to_string(i));
      s = {s.channels, detail::window_out(s.height, p->kernel, p->stride, p->padding),
           detail::window_out(s.width, p->kernel, p->stride, p->padding)};
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      if (!(b->eps > 0) || !(b->momentum >= 0 && b->momentum <= 1))
        throw ValidationError("invalid batch-norm at layer " + std::to_string(i));
    }
    if (s.height < 1 || s.width < 1)
      throw ValidationError("input " + std::to_string(in.height) + "x" + std::to_string(in.width) +
                            " is smaller than the network's downsampling footprint at layer " +
                            std::to_string(i));
    shapes.push_back(s);
  }
  return shapes;
}

/// Structural checks on a spec. Built-in architectures must strictly reduce resolution.
inline void validate(const BackboneSpec& spec) {
  const bool has_conv = std::any_of(spec.layers.begin(), spec.layers.end(), [](const LayerSpec& l) {
    return std::holds_alternative<ConvLayer>(l);
  });
  if (!has_conv) throw ValidationError("network must contain at least one convolution");
  if (spec.frozen_prefix_len < 0 || spec.frozen_prefix_len > int(spec.layers.size()))
    throw ValidationError("frozen prefix longer than the layer list");
  const auto shapes = infer_shapes(spec);
  if (spec.arch != ArchId::CUSTOM) {
    const Shape3 out = shapes.back();
    if (!(out.height < spec.input_shape.height && out.width < spec.input_shape.width))
      throw ValidationError("latent grid must be strictly lower-resolution than the input");
  }
}

inline Shape3 output_shape(const BackboneSpec& spec) {
  if (spec.layers.empty()) return spec.input_shape;
  return infer_shapes(spec).back();
}

// ---------------------------------------------------------------------------
// Reference architectures. `width` is the channel count of the hidden
// convolutions; the latent grid has `latent_channels` channels.

struct ArchOptions {
  int width = 128;
  int latent_channels = 1;
  double leaky_slope = 0.01;
};

/// conv - bn - lrelu - pool - conv - pool - conv(1x1).
inline BackboneSpec fmnist_cnn(Shape3 input, const ArchOptions& o = {}) {
  BackboneSpec s;
  s.arch = ArchId::FMNIST_CNN;
  s.input_shape = input;
  s.layers = {ConvLayer{o.width, 3, 1, 1, false},
              BatchNormLayer{},
              ActivationLayer{o.leaky_slope},
              MaxPoolLayer{2, 2, 0},
              ConvLayer{o.width, 3, 1, 1, false},
              MaxPoolLayer{2, 2, 0},
              ConvLayer{o.latent_channels, 1, 1, 0, false}};
  return s;
}

/// Three (conv - bn - lrelu - pool) blocks followed by two convolutions.
inline BackboneSpec cifar_cnn(Shape3 input, const ArchOptions& o = {}) {
  BackboneSpec s;
  s.arch = ArchId::CIFAR_CNN;
  s.input_shape = input;
  const int widths[3] = {o.width, 2 * o.width, 2 * o.width};
  for (int w : widths) {
    s.layers.push_back(ConvLayer{w, 3, 1, 1, false});
    s.layers.push_back(BatchNormLayer{});
    s.layers.push_back(ActivationLayer{o.leaky_slope});
    s.layers.push_back(MaxPoolLayer{2, 2, 0});
  }
  s.layers.push_back(ConvLayer{2 * o.width, 3, 1, 1, false});
  s.layers.push_back(ConvLayer{o.latent_channels, 1, 1, 0, false});
  return s;
}

/// Number of flat layers taken from the VGG11 feature extractor.
inline constexpr int kVggFrozenLayers = 10;

/// VGG11 features [conv64 relu pool conv128 relu pool conv256 relu conv256 relu]
/// (frozen) followed by a 3x3 and a 1x1 convolution.
inline BackboneSpec vgg11_fcdd(Shape3 input, const ArchOptions& o = {}) {
  BackboneSpec s;
  s.arch = ArchId::VGG11_FCDD;
  s.input_shape = input;
  s.layers = {ConvLayer{64, 3, 1, 1, true},  ActivationLayer{0.0}, MaxPoolLayer{2, 2, 0},
              ConvLayer{128, 3, 1, 1, true}, ActivationLayer{0.0}, MaxPoolLayer{2, 2, 0},
              ConvLayer{256, 3, 1, 1, true}, ActivationLayer{0.0}, ConvLayer{256, 3, 1, 1, true},
              ActivationLayer{0.0},
              ConvLayer{o.width, 3, 1, 1, false},
              ConvLayer{o.latent_channels, 1, 1, 0, false}};
  s.frozen_prefix_len = kVggFrozenLayers;
  return s;
}

// ---------------------------------------------------------------------------
// Receptive field

struct ReceptiveField {
  double size = 1;
  double jump = 1;
  double offset = 0;  // pixel coordinate (pixel i has its center at i) of cell (0, 0)

  friend bool operator==(const ReceptiveField&, const ReceptiveField&) = default;
};

inline ReceptiveField receptive_field(std::span<const LayerSpec> layers) {
  ReceptiveField rf;
  for (const auto& layer : layers) {
    int k = 1, s = 1, p = 0;
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      k = c->kernel, s = c->stride, p = c->padding;
    } else if (const auto* m = std::get_if<MaxPoolLayer>(&layer)) {
      k = m->kernel, s = m->stride, p = m->padding;
    } else {
      continue;
    }
    rf.offset += ((k - 1) / 2.0 - p) * rf.jump;
    rf.size += (k - 1) * rf.jump;
    rf.jump *= s;
  }
  return rf;
}

inline ReceptiveField receptive_field(const BackboneSpec& spec) { return receptive_field(spec.layers); }

// ---------------------------------------------------------------------------
// Parameter state

struct LayerParams {
  std::vector<double> weight;  // conv: (out, in, k, k); affine bn: gamma
  std::vector<double> bias;    // conv bias or affine bn beta
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool trainable = true;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct LayerGrads {
  std::vector<double> weight;
  std::vector<double> bias;
};

using Gradients = std::vector<LayerGrads>;

/// Per-layer cached activations from a training-mode forward pass.
struct Tape {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> argmax;  // max-pool winners (flat input index)
  std::vector<std::vector<double>> xhat;          // batch-norm normalized activations
  std::vector<std::vector<double>> inv_std;       // batch-norm per-channel 1/sqrt(var+eps)
  std::vector<bool> batch_stats;                  // batch-norm used batch statistics
  Tensor output;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void im2col(std::span<const double> x, Shape3 in, const ConvLayer& c, int oh, int ow, RowMat& col) {
  const int k = c.kernel;
  col.resize(Eigen::Index(in.channels) * k * k, Eigen::Index(oh) * ow);
  for (int ch = 0; ch < in.channels; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (Eigen::Index(ch) * k + ky) * k + kx;
        double* dst = col.row(row).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * c.stride - c.padding + ky;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * c.stride - c.padding + kx;
            dst[oy * ow + ox] = (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width)
                                    ? x[(std::size_t(ch) * in.height + iy) * in.width + ix]
                                    : 0.0;
          }
        }
      }
}

inline void col2im(const RowMat& col, Shape3 in, const ConvLayer& c, int oh, int ow, std::span<double> dx) {
  const int k = c.kernel;
  for (int ch = 0; ch < in.channels; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (Eigen::Index(ch) * k + ky) * k + kx;
        const double* src = col.row(row).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * c.stride - c.padding + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * c.stride - c.padding + kx;
            if (ix < 0 || ix >= in.width) continue;
            dx[(std::size_t(ch) * in.height + iy) * in.width + ix] += src[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

/// A backbone spec together with its parameter state.
///
/// Evaluation-mode forward passes are const and may run concurrently. Training
/// passes mutate batch-norm running statistics and require exclusive access.
class Network {
 public:
  Network() = default;

  /// Initializes trainable convolutions with uniform fan-in scaling from `seed`.
  Network(BackboneSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    validate(spec_);
    shapes_ = infer_shapes(spec_);
    params_.resize(spec_.layers.size());
    std::mt19937_64 rng(seed);
    Shape3 in = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      auto& p = params_[i];
      p.trainable = int(i) >= spec_.frozen_prefix_len;
      const auto& layer = spec_.layers[i];
      if (const auto* c = std::get_if<ConvLayer>(&layer)) {
        const int fan_in = in.channels * c->kernel * c->kernel;
        const double bound = 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        p.weight.resize(std::size_t(c->out_channels) * fan_in);
        for (auto& w : p.weight) w = u(rng);
        if (c->bias) {
          p.bias.resize(c->out_channels);
          for (auto& b : p.bias) b = u(rng);
        }
      } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
        p.running_mean.assign(in.channels, 0.0);
        p.running_var.assign(in.channels, 1.0);
        if (b->affine) {
          p.weight.assign(in.channels, 1.0);
          p.bias.assign(in.channels, 0.0);
        }
      }
      in = shapes_[i];
    }
  }

  const BackboneSpec& spec() const { return spec_; }
  Shape3 input_shape() const { return spec_.input_shape; }
  Shape3 output_shape() const { return shapes_.empty() ? spec_.input_shape : shapes_.back(); }
  Shape3 layer_input_shape(std::size_t i) const { return i == 0 ? spec_.input_shape : shapes_[i - 1]; }

  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }

  std::size_t parameter_count(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (!trainable_only || p.trainable) n += p.weight.size() + p.bias.size();
    return n;
  }

  /// Evaluation-mode forward pass (batch-norm uses running statistics).
  Tensor forward(const Tensor& batch) const {
    check_input(batch);
    Tensor x = batch;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) x = layer_forward(i, x, nullptr, false, nullptr);
    return x;
  }

  /// Training-mode forward pass recording everything backward() needs.
  /// Trainable batch-norm layers use batch statistics; frozen ones use running statistics.
  Tape forward_train(const Tensor& batch, bool update_running_stats = true) {
    check_input(batch);
    Tape tape;
    const std::size_t L = spec_.layers.size();
    tape.inputs.reserve(L);
    tape.argmax.resize(L);
    tape.xhat.resize(L);
    tape.inv_std.resize(L);
    tape.batch_stats.assign(L, false);
    Tensor x = batch;
    for (std::size_t i = 0; i < L; ++i) {
      tape.inputs.push_back(x);
      x = layer_forward(i, x, &tape, params_[i].trainable, update_running_stats ? &params_[i] : nullptr);
    }
    tape.output = std::move(x);
    return tape;
  }

  /// Gradients of a scalar loss w.r.t. trainable parameters, given dLoss/dOutput.
  /// Layers in the frozen prefix receive empty gradients.
  Gradients backward(const Tape& tape, const Tensor& grad_out) const {
    const std::size_t L = spec_.layers.size();
    Gradients grads(L);
    if (grad_out.sample_shape() != output_shape() || grad_out.n() != tape.output.n())
      throw ValidationError("backward: gradient shape mismatch");
    Tensor g = grad_out;
    const std::size_t first = std::size_t(spec_.frozen_prefix_len);
    for (std::size_t i = L; i-- > first;) {
      const bool need_input = i > first;
      g = layer_backward(i, tape, g, grads[i], need_input);
    }
    return grads;
  }

 private:
  void check_input(const Tensor& batch) const {
    if (batch.n() < 1) throw ValidationError("forward: empty batch");
    if (batch.sample_shape() != spec_.input_shape)
      throw ValidationError("forward: input shape " + shape_string(batch) + " does not match the backbone");
    if (!batch.all_finite()) throw ValidationError("forward: non-finite input");
  }

  Tensor layer_forward(std::size_t i, const Tensor& x, Tape* tape, bool batch_stats, LayerParams* update) const {
    const Shape3 in = x.sample_shape();
    const Shape3 out = shapes_[i];
    const auto& layer = spec_.layers[i];
    const auto& p = params_[i];
    Tensor y(x.n(), out);
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      const Eigen::Index kdim = Eigen::Index(in.channels) * c->kernel * c->kernel;
      Eigen::Map<const detail::RowMat> W(p.weight.data(), c->out_channels, kdim);
      detail::RowMat col;
      for (int n = 0; n < x.n(); ++n) {
        detail::im2col(x.sample(n), in, *c, out.height, out.width, col);
        Eigen::Map<detail::RowMat> Y(y.sample(n).data(), c->out_channels, Eigen::Index(out.height) * out.width);
        Y.noalias() = W * col;
        if (c->bias)
          for (int o = 0; o < c->out_channels; ++o) Y.row(o).array() += p.bias[o];
      }
    } else if (const auto* m = std::get_if<MaxPoolLayer>(&layer)) {
      std::vector<std::size_t>* winners = tape ? &tape->argmax[i] : nullptr;
      if (winners) winners->assign(y.size(), 0);
      for (int n = 0; n < x.n(); ++n)
        for (int ch = 0; ch < in.channels; ++ch)
          for (int oy = 0; oy < out.height; ++oy)
            for (int ox = 0; ox < out.width; ++ox) {
              double best = -std::numeric_limits<double>::infinity();
              std::size_t arg = 0;
              for (int ky = 0; ky < m->kernel; ++ky) {
                const int iy = oy * m->stride - m->padding + ky;
                if (iy < 0 || iy >= in.height) continue;
                for (int kx = 0; kx < m->kernel; ++kx) {
                  const int ix = ox * m->stride - m->padding + kx;
                  if (ix < 0 || ix >= in.width) continue;
                  const std::size_t idx = x.index(n, ch, iy, ix);
                  if (x.data()[idx] > best) best = x.data()[idx], arg = idx;
                }
              }
              const std::size_t o = y.index(n, ch, oy, ox);
              y.data()[o] = best;
              if (winners) (*winners)[o] = arg;
            }
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      const int C = in.channels;
      const std::size_t plane = std::size_t(in.height) * in.width;
      const double count = double(x.n()) * plane;
      std::vector<double> mean(C), inv(C);
      if (batch_stats) {
        std::vector<double> var(C);
        for (int ch = 0; ch < C; ++ch) {
          double s = 0;
          for (int n = 0; n < x.n(); ++n)
            for (std::size_t k = 0; k < plane; ++k) s += x.data()[x.index(n, ch, 0, 0) + k];
          mean[ch] = s / count;
          double v = 0;
          for (int n = 0; n < x.n(); ++n)
            for (std::size_t k = 0; k < plane; ++k) {
              const double d = x.data()[x.index(n, ch, 0, 0) + k] - mean[ch];
              v += d * d;
            }
          var[ch] = v / count;
          inv[ch] = 1.0 / std::sqrt(var[ch] + b->eps);
        }
        if (update) {
          const double unbias = count > 1 ? count / (count - 1) : 1.0;
          for (int ch = 0; ch < C; ++ch) {
            update->running_mean[ch] = (1 - b->momentum) * update->running_mean[ch] + b->momentum * mean[ch];
            update->running_var[ch] =
                (1 - b->momentum) * update->running_var[ch] + b->momentum * var[ch] * unbias;
          }
        }
      } else {
        for (int ch = 0; ch < C; ++ch) {
          mean[ch] = p.running_mean[ch];
          inv[ch] = 1.0 / std::sqrt(p.running_var[ch] + b->eps);
        }
      }
      std::vector<double>* xhat = nullptr;
      if (tape) {
        tape->batch_stats[i] = batch_stats;
        tape->inv_std[i] = inv;
        xhat = &tape->xhat[i];
        xhat->resize(x.size());
      }
      for (int n = 0; n < x.n(); ++n)
        for (int ch = 0; ch < C; ++ch) {
          const std::size_t base = x.index(n, ch, 0, 0);
          const double g = b->affine ? p.weight[ch] : 1.0;
          const double beta = b->affine ? p.bias[ch] : 0.0;
          for (std::size_t k = 0; k < plane; ++k) {
            const double h = (x.data()[base + k] - mean[ch]) * inv[ch];
            if (xhat) (*xhat)[base + k] = h;
            y.data()[base + k] = g * h + beta;
          }
        }
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double v = x.data()[k];
        y.data()[k] = v > 0 ? v : a->slope * v;
      }
    }
    return y;
  }

  Tensor layer_backward(std::size_t i, const Tape& tape, const Tensor& g, LayerGrads& grads, bool need_input) const {
    const Tensor& x = tape.inputs[i];
    const Shape3 in = x.sample_shape();
    const Shape3 out = shapes_[i];
    const auto& layer = spec_.layers[i];
    const auto& p = params_[i];
    Tensor dx;
    if (need_input) dx = Tensor(x.n(), in);
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      const Eigen::Index kdim = Eigen::Index(in.channels) * c->kernel * c->kernel;
      const Eigen::Index hw = Eigen::Index(out.height) * out.width;
      Eigen::Map<const detail::RowMat> W(p.weight.data(), c->out_channels, kdim);
      grads.weight.assign(p.weight.size(), 0.0);
      if (c->bias) grads.bias.assign(p.bias.size(), 0.0);
      Eigen::Map<detail::RowMat> dW(grads.weight.data(), c->out_channels, kdim);
      detail::RowMat col, dcol;
      for (int n = 0; n < x.n(); ++n) {
        Eigen::Map<const detail::RowMat> G(g.sample(n).data(), c->out_channels, hw);
        detail::im2col(x.sample(n), in, *c, out.height, out.width, col);
        dW.noalias() += G * col.transpose();
        if (c->bias)
          for (int o = 0; o < c->out_channels; ++o) grads.bias[o] += G.row(o).sum();
        if (need_input) {
          dcol.noalias() = W.transpose() * G;
          detail::col2im(dcol, in, *c, out.height, out.width, dx.sample(n));
        }
      }
    } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
      if (need_input) {
        const auto& winners = tape.argmax[i];
        for (std::size_t o = 0; o < g.size(); ++o) dx.data()[winners[o]] += g.data()[o];
      }
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      const int C = in.channels;
      const std::size_t plane = std::size_t(in.height) * in.width;
      const double count = double(x.n()) * plane;
      const auto& xhat = tape.xhat[i];
      const auto& inv = tape.inv_std[i];
      if (b->affine) {
        grads.weight.assign(C, 0.0);
        grads.bias.assign(C, 0.0);
      }
      for (int ch = 0; ch < C; ++ch) {
        const double gamma = b->affine ? p.weight[ch] : 1.0;
        double sum_g = 0, sum_gx = 0;
        for (int n = 0; n < x.n(); ++n) {
          const std::size_t base = x.index(n, ch, 0, 0);
          for (std::size_t k = 0; k < plane; ++k) {
            sum_g += g.data()[base + k];
            sum_gx += g.data()[base + k] * xhat[base + k];
          }
        }
        if (b->affine) {
          grads.weight[ch] = sum_gx;
          grads.bias[ch] = sum_g;
        }
        if (!need_input) continue;
        for (int n = 0; n < x.n(); ++n) {
          const std::size_t base = x.index(n, ch, 0, 0);
          for (std::size_t k = 0; k < plane; ++k) {
            const double gk = g.data()[base + k];
            dx.data()[base + k] =
                tape.batch_stats[i]
                    ? gamma * inv[ch] * (gk - sum_g / count - xhat[base + k] * sum_gx / count)
                    : gamma * inv[ch] * gk;
          }
        }
      }
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      if (need_input)
        for (std::size_t k = 0; k < x.size(); ++k)
          dx.data()[k] = x.data()[k] > 0 ? g.data()[k] : a->slope * g.data()[k];
    }
    return dx;
  }

  BackboneSpec spec_;
  std::vector<Shape3> shapes_;
  std::vector<LayerParams> params_;
};

// ---------------------------------------------------------------------------
// Latent grids

struct LatentGrid {
  Tensor values;  // (1, C', U, V)
  int source_height = 0;
  int source_width = 0;
};

/// Splits a batched network output into per-sample latent grids.
inline std::vector<LatentGrid> to_grids(const Tensor& out, Shape3 source) {
  std::vector<LatentGrid> grids;
  grids.reserve(out.n());
  for (int n = 0; n < out.n(); ++n) grids.push_back({out.slice(n), source.height, source.width});
  return grids;
}

inline std::vector<LatentGrid> forward_grids(const Network& net, const Tensor& images) {
  return to_grids(net.forward(images), net.input_shape());
}

// ---------------------------------------------------------------------------
// JSON description of specs, recorded verbatim into run manifests.

inline nlohmann::json to_json(const LayerSpec& l) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConvLayer>)
          return {{"type", "conv"}, {"out_channels", v.out_channels}, {"kernel", v.kernel},
                  {"stride", v.stride}, {"padding", v.padding}, {"bias", v.bias}};
        else if constexpr (std::is_same_v<T, MaxPoolLayer>)
          return {{"type", "maxpool"}, {"kernel", v.kernel}, {"stride", v.stride}, {"padding", v.padding}};
        else if constexpr (std::is_same_v<T, BatchNormLayer>)
          return {{"type", "batchnorm"}, {"affine", v.affine}, {"eps", v.eps}, {"momentum", v.momentum}};
        else
          return {{"type", v.slope == 0.0 ? "relu" : "leaky_relu"}, {"slope", v.slope}};
      },
      l);
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv")
    return ConvLayer{j.at("out_channels").get<int>(), j.value("kernel", 3), j.value("stride", 1),
                     j.value("padding", 0), j.value("bias", false)};
  if (type == "maxpool") return MaxPoolLayer{j.value("kernel", 2), j.value("stride", 2), j.value("padding", 0)};
  if (type == "batchnorm")
    return BatchNormLayer{j.value("affine", false), j.value("eps", 1e-4), j.value("momentum", 0.1)};
  if (type == "leaky_relu") return ActivationLayer{j.value("slope", 0.01)};
  if (type == "relu") return ActivationLayer{0.0};
  throw ValidationError("layer type '" + type + "' is not allowed in a fully-convolutional network");
}

inline nlohmann::json to_json(const BackboneSpec& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  const auto out = output_shape(s);
  const auto rf = receptive_field(s);
  return {{"arch", to_string(s.arch)},
          {"input_shape", {s.input_shape.channels, s.input_shape.height, s.input_shape.width}},
          {"layers", layers},
          {"frozen_prefix_len", s.frozen_prefix_len},
          {"pretrained", s.pretrained},
          {"grid_shape", {out.channels, out.height, out.width}},
          {"receptive_field", {{"size", rf.size}, {"jump", rf.jump}, {"offset", rf.offset}}}};
}

inline BackboneSpec backbone_from_json(const nlohmann::json& j) {
  BackboneSpec s;
  s.arch = parse_arch(j.at("arch").get<std::string>());
  const auto shape = j.at("input_shape").get<std::vector<int>>();
  if (shape.size() != 3) throw ValidationError("input_shape must have three entries");
  s.input_shape = {shape[0], shape[1], shape[2]};
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
  s.frozen_prefix_len = j.value("frozen_prefix_len", 0);
  s.pretrained = j.value("pretrained", false);
  return s;
}

}  // namespace fcdd
