#pragma once

// Fixed-rate sampler of process (and, when a probe is supplied, accelerator)
// memory. Runs on its own thread and only reads process metrics.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "fcdd/tensor.hpp"

namespace fcdd {

struct ResourceSample {
  double t = 0;  // seconds since start
  std::uint64_t cpu_bytes = 0;
  std::optional<std::uint64_t> gpu_bytes;
};

struct ResourceLog {
  std::vector<ResourceSample> samples;
  std::uint64_t max_cpu_bytes = 0;
  std::optional<std::uint64_t> max_gpu_bytes;
  bool gpu_available = false;
};

/// Resident set size of this process.
inline std::uint64_t process_resident_bytes() {
  std::ifstream statm("/proc/self/statm");
  std::uint64_t size = 0, resident = 0;
  statm >> size >> resident;
  return resident * std::uint64_t(::sysconf(_SC_PAGESIZE));
}

using GpuProbe = std::function<std::optional<std::uint64_t>()>;

class ResourceMonitor {
 public:
  explicit ResourceMonitor(std::chrono::milliseconds interval = std::chrono::seconds(1), GpuProbe gpu = {})
      : interval_(interval), gpu_(std::move(gpu)) {}
  ResourceMonitor(const ResourceMonitor&) = delete;
  ResourceMonitor& operator=(const ResourceMonitor&) = delete;
  ~ResourceMonitor() { stop(); }

  void start() {
    if (thread_.joinable()) return;
    stop_requested_ = false;
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stop_requested_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  /// Snapshot of samples so far with maxima over them.
  ResourceLog log() const {
    std::lock_guard lock(mu_);
    ResourceLog l;
    l.samples = samples_;
    l.gpu_available = static_cast<bool>(gpu_);
    for (const auto& s : samples_) {
      l.max_cpu_bytes = std::max(l.max_cpu_bytes, s.cpu_bytes);
      if (s.gpu_bytes) l.max_gpu_bytes = std::max(l.max_gpu_bytes.value_or(0), *s.gpu_bytes);
    }
    if (!l.max_gpu_bytes) l.gpu_available = false;
    return l;
  }

 private:
  void run() {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    for (std::int64_t k = 0;; ++k) {
      const auto due = t0 + k * interval_;
      {
        std::unique_lock lock(mu_);
        if (cv_.wait_until(lock, due, [this] { return stop_requested_; })) return;
      }
      ResourceSample s;
      s.t = std::chrono::duration<double>(clock::now() - t0).count();
      s.cpu_bytes = process_resident_bytes();
      if (gpu_) s.gpu_bytes = gpu_();
      std::lock_guard lock(mu_);
      samples_.push_back(s);
    }
  }

  std::chrono::milliseconds interval_;
  GpuProbe gpu_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stop_requested_ = false;
  std::vector<ResourceSample> samples_;
  std::thread thread_;
};

/// CSV with header `t,cpu_bytes,gpu_bytes`; gpu_bytes is empty when unavailable.
inline void write_resources_csv(const std::filesystem::path& path, const ResourceLog& log) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "t,cpu_bytes,gpu_bytes\n";
  char buf[32];
  for (const auto& s : log.samples) {
    std::snprintf(buf, sizeof buf, "%.3f", s.t);
    out << buf << ',' << s.cpu_bytes << ',';
    if (s.gpu_bytes) out << *s.gpu_bytes;
    out << '\n';
  }
}

}  // namespace fcdd
