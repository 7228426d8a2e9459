#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcdd {

/// Raised for malformed inputs: bad shapes, invalid parameters, unparsable files.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot complete (non-finite loss, unreadable snapshot).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const Shape3&, const Shape3&) = default;
  std::size_t size() const { return std::size_t(channels) * height * width; }
};

/// Dense NCHW tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w), data_(std::size_t(n) * c * h * w, fill) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ValidationError("negative tensor dimension");
  }
  Tensor(int n, Shape3 s, double fill = 0.0) : Tensor(n, s.channels, s.height, s.width, fill) {}

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  Shape3 sample_shape() const { return {c_, h_, w_}; }
  std::size_t size() const { return data_.size(); }
  std::size_t sample_size() const { return std::size_t(c_) * h_ * w_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((std::size_t(n) * c_ + c) * h_ + h) * w_ + w;
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::span<double> sample(int n) { return {data_.data() + n * sample_size(), sample_size()}; }
  std::span<const double> sample(int n) const {
    return {data_.data() + n * sample_size(), sample_size()};
  }

  Tensor slice(int n) const {
    Tensor out(1, c_, h_, w_);
    auto s = sample(n);
    std::copy(s.begin(), s.end(), out.data_.begin());
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Stacks equally-shaped single-sample tensors (n == 1) into one batch.
inline Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ValidationError("cannot stack an empty batch");
  const Shape3 s = items.front().sample_shape();
  Tensor out(int(items.size()), s);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].sample_shape() != s || items[i].n() != 1)
      throw ValidationError("stack: inconsistent sample shapes");
    std::copy(items[i].data().begin(), items[i].data().end(), out.sample(int(i)).begin());
  }
  return out;
}

/// Binary (H, W) mask; 1 marks anomalous pixels.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), values(std::size_t(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return values[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[std::size_t(y) * width + x]; }
  std::size_t count() const {
    return std::size_t(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
  }
  friend bool operator==(const Mask&, const Mask&) = default;
};

inline std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.n()) + "," + std::to_string(t.c()) + "," + std::to_string(t.h()) +
         "," + std::to_string(t.w()) + ")";
}

}  // namespace fcdd
