#pragma once

// Optimization loop, weight snapshots, run directories and the repetition protocol.
//
// Run directory layout (one per run):
//   spec.json              resolved experiment spec, written once at run start
//   split.json             manifest of every item with its role
//   log.txt                one line per epoch and per snapshot
//   snapshots/epoch_<k>.fcddw
//   resources.csv          t,cpu_bytes,gpu_bytes at 1 Hz
//   metrics.json           loss trace, snapshot metrics, final metrics, versions
//   heatmaps/              a few rendered test heatmaps with JSON sidecars

#include <png.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <new>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fcdd/backbone.hpp"
#include "fcdd/data.hpp"
#include "fcdd/eval.hpp"
#include "fcdd/explain.hpp"
#include "fcdd/objective.hpp"
#include "fcdd/resources.hpp"
#include "fcdd/weights.hpp"

#define FCDD_VERSION "0.1.0"

namespace fcdd {

enum class Objective { Sample, Pixel };

inline std::string to_string(Objective o) { return o == Objective::Sample ? "SAMPLE" : "PIXEL"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "SAMPLE" || s == "sample") return Objective::Sample;
  if (s == "PIXEL" || s == "pixel") return Objective::Pixel;
  throw ValidationError("unknown objective '" + s + "' (expected SAMPLE or PIXEL)");
}

struct ExperimentSpec {
  std::string name = "experiment";
  SplitSpec split;
  BackboneSpec backbone;
  std::optional<std::string> pretrained_weights;
  Preprocess preprocess;
  Objective objective = Objective::Sample;
  PixelLossOptions pixel_loss;
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  /// Exponential schedule: epoch e (1-based) runs at learning_rate * lr_gamma^(e-1).
  double lr_gamma = 0.98;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  int snapshot_every = 5;
  UpsampleConfig upsample;
  int heatmap_exports = 8;

  void validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (snapshot_every < 1) throw ValidationError("snapshot_every must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be positive");
    if (!(lr_gamma > 0) || lr_gamma > 1) throw ValidationError("lr_gamma must lie in (0, 1]");
    if (momentum < 0 || momentum >= 1) throw ValidationError("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw ValidationError("weight_decay must be non-negative");
    if (upsample.sigma && !(*upsample.sigma > 0)) throw ValidationError("upsampling sigma must be positive");
    fcdd::validate(backbone);
    if (!(preprocess.shape == backbone.input_shape)) throw ValidationError("preprocess shape differs from backbone input");
    if (split.train_items.empty()) throw ValidationError("training split is empty");
  }
};

/// Epochs at which a snapshot is written: every k-th epoch plus the final one.
inline std::vector<int> snapshot_epochs(int epochs, int every) {
  std::vector<int> out;
  for (int e = every; e <= epochs; e += every) out.push_back(e);
  if (out.empty() || out.back() != epochs) out.push_back(epochs);
  return out;
}

inline nlohmann::json version_stamps() {
  return {{"fcdd", FCDD_VERSION},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"libpng", PNG_LIBPNG_VER_STRING},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

/// Everything except the item list, which goes to split.json.
inline nlohmann::json to_json(const ExperimentSpec& s) {
  const ReceptiveField rf = receptive_field(s.backbone);
  nlohmann::json j = {
      {"name", s.name},
      {"objective", to_string(s.objective)},
      {"backbone", to_json(s.backbone)},
      {"pretrained_weights", s.pretrained_weights ? nlohmann::json(*s.pretrained_weights) : nlohmann::json(nullptr)},
      {"random_frozen_prefix", s.backbone.frozen_prefix_len > 0 && !s.backbone.pretrained},
      {"preprocess",
       {{"shape", {s.preprocess.shape.channels, s.preprocess.shape.height, s.preprocess.shape.width}},
        {"mean", s.preprocess.mean},
        {"stddev", s.preprocess.stddev}}},
      {"pixel_loss",
       {{"pooling", s.pixel_loss.pooling == MaskPooling::Max ? "max" : "mean_threshold"},
        {"mean_threshold", s.pixel_loss.mean_threshold},
        {"balance", s.pixel_loss.balance}}},
      {"optimizer",
       {{"kind", "sgd"},
        {"learning_rate", s.learning_rate},
        {"schedule", {{"kind", "exponential"}, {"gamma", s.lr_gamma}}},
        {"momentum", s.momentum},
        {"weight_decay", s.weight_decay}}},
      {"epochs", s.epochs},
      {"batch_size", s.batch_size},
      {"seed", s.seed},
      {"snapshot_every", s.snapshot_every},
      {"upsample_sigma", s.upsample.sigma.value_or(default_sigma(rf))},
      {"heatmap_exports", s.heatmap_exports},
      {"split",
       {{"dataset", s.split.dataset},
        {"normal_class", s.split.normal_class},
        {"mode", to_string(s.split.mode)},
        {"oe_source", s.split.oe_source ? nlohmann::json(*s.split.oe_source) : nlohmann::json(nullptr)},
        {"experiment_reference", s.split.experiment_reference},
        {"confetti", s.split.confetti ? to_json(*s.split.confetti) : nlohmann::json(nullptr)},
        {"train_items", s.split.train_items.size()},
        {"test_items", s.split.test_items.size()},
        {"manifest", "split.json"}}}};
  return j;
}

/// Inverse of to_json; the split comes from its manifest.
inline ExperimentSpec spec_from_json(const nlohmann::json& j, SplitSpec split) {
  ExperimentSpec s;
  s.name = j.at("name");
  s.objective = parse_objective(j.at("objective"));
  s.backbone = backbone_from_json(j.at("backbone"));
  if (!j.at("pretrained_weights").is_null()) s.pretrained_weights = j.at("pretrained_weights").get<std::string>();
  const auto& pp = j.at("preprocess");
  s.preprocess.shape = {pp.at("shape")[0], pp.at("shape")[1], pp.at("shape")[2]};
  s.preprocess.mean = pp.at("mean").get<std::vector<double>>();
  s.preprocess.stddev = pp.at("stddev").get<std::vector<double>>();
  const auto& pl = j.at("pixel_loss");
  s.pixel_loss.pooling = pl.at("pooling") == "max" ? MaskPooling::Max : MaskPooling::MeanThreshold;
  s.pixel_loss.mean_threshold = pl.at("mean_threshold");
  s.pixel_loss.balance = pl.at("balance");
  const auto& o = j.at("optimizer");
  s.learning_rate = o.at("learning_rate");
  s.lr_gamma = o.at("schedule").at("gamma");
  s.momentum = o.at("momentum");
  s.weight_decay = o.at("weight_decay");
  s.epochs = j.at("epochs");
  s.batch_size = j.at("batch_size");
  s.seed = j.at("seed");
  s.snapshot_every = j.at("snapshot_every");
  s.upsample.sigma = j.at("upsample_sigma").get<double>();
  s.heatmap_exports = j.value("heatmap_exports", 8);
  s.split = std::move(split);
  return s;
}

inline Network make_network(const ExperimentSpec& spec) {
  Network net(spec.backbone, spec.seed);
  if (spec.pretrained_weights) {
    const std::size_t limit =
        spec.backbone.arch == ArchId::VGG11_FCDD ? std::size_t(spec.backbone.frozen_prefix_len) : SIZE_MAX;
    load_into(net, read_archive(*spec.pretrained_weights), limit);
  }
  return net;
}

struct TrainData {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

inline TrainData load_data(const ExperimentSpec& spec, const ImageSource& source) {
  return {materialize(spec.split.train_items, spec.split, spec.preprocess, source),
          materialize(spec.split.test_items, spec.split, spec.preprocess, source)};
}

// ---------------------------------------------------------------------------
// Run record

struct Metrics {
  std::optional<double> sample_auc;
  std::optional<double> pixel_auc;
};

struct SnapshotRecord {
  int epoch = 0;
  std::filesystem::path path;  // relative to the run directory
  Metrics metrics;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0;
  double learning_rate = 0;
  double seconds = 0;
};

struct RunRecord {
  nlohmann::json spec;  // copy taken at run start
  std::filesystem::path run_dir;
  std::vector<EpochLog> epochs;
  std::vector<SnapshotRecord> snapshots;
  std::filesystem::path resource_log;  // relative; empty when monitoring was off
  std::uint64_t max_cpu_bytes = 0;
  std::optional<std::uint64_t> max_gpu_bytes;
  bool gpu_available = false;
  Metrics final_metrics;
  double duration_s = 0;
  nlohmann::json versions;
  std::string status = "completed";  // completed | aborted_non_finite | failed
  std::string error;

  bool ok() const { return status == "completed"; }
  std::vector<double> loss_trace() const {
    std::vector<double> t;
    for (const auto& e : epochs) t.push_back(e.loss);
    return t;
  }
};

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline nlohmann::json metrics_json(const Metrics& m) {
  return {{"sample_auc", opt_json(m.sample_auc)}, {"pixel_auc", opt_json(m.pixel_auc)}};
}

inline Metrics metrics_from_json(const nlohmann::json& j) { return {opt_double(j, "sample_auc"), opt_double(j, "pixel_auc")}; }

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw RuntimeFailure("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

inline std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out;
}

}  // namespace detail

/// metrics.json content. The spec itself lives in spec.json.
inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json epochs = nlohmann::json::array(), snaps = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"learning_rate", e.learning_rate}, {"seconds", e.seconds}});
  for (const auto& s : r.snapshots)
    snaps.push_back({{"epoch", s.epoch}, {"path", s.path.generic_string()}, {"metrics", detail::metrics_json(s.metrics)}});
  return {{"status", r.status},
          {"error", r.error},
          {"spec", "spec.json"},
          {"loss_trace", epochs},
          {"snapshots", snaps},
          {"resources",
           {{"log", r.resource_log.generic_string()},
            {"max_cpu_bytes", r.max_cpu_bytes},
            {"max_gpu_bytes", r.max_gpu_bytes ? nlohmann::json(*r.max_gpu_bytes) : nlohmann::json(nullptr)},
            {"gpu_available", r.gpu_available}}},
          {"final_metrics", detail::metrics_json(r.final_metrics)},
          {"duration_s", r.duration_s},
          {"versions", r.versions}};
}

/// Reads a run directory back (metrics.json + spec.json).
inline RunRecord read_run(const std::filesystem::path& dir) {
  auto load = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw ValidationError("run directory " + dir.string() + " has no " + name);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string(name) + " in " + dir.string() + ": " + e.what());
    }
  };
  const auto m = load("metrics.json");
  RunRecord r;
  r.spec = load("spec.json");
  r.run_dir = dir;
  r.status = m.at("status");
  r.error = m.value("error", std::string());
  for (const auto& e : m.at("loss_trace")) r.epochs.push_back({e.at("epoch"), e.at("loss"), e.at("learning_rate"), e.at("seconds")});
  for (const auto& s : m.at("snapshots"))
    r.snapshots.push_back({s.at("epoch"), s.at("path").get<std::string>(), detail::metrics_from_json(s.at("metrics"))});
  const auto& res = m.at("resources");
  r.resource_log = res.at("log").get<std::string>();
  r.max_cpu_bytes = res.at("max_cpu_bytes");
  if (!res.at("max_gpu_bytes").is_null()) r.max_gpu_bytes = res.at("max_gpu_bytes").get<std::uint64_t>();
  r.gpu_available = res.at("gpu_available");
  r.final_metrics = detail::metrics_from_json(m.at("final_metrics"));
  r.duration_s = m.at("duration_s");
  r.versions = m.at("versions");
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct RunOptions {
  std::filesystem::path run_dir;
  bool evaluate_snapshots = true;
  bool monitor_resources = true;
  std::ostream* echo = nullptr;  // mirror of log.txt, e.g. &std::cerr
};

struct TrainResult {
  RunRecord record;
  Network network;
};

namespace detail {

class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), wd_(weight_decay) {}

  void step(Network& net, const Gradients& g, double lr) {
    auto& params = net.params();
    velocity_.resize(params.size());
    for (std::size_t l = 0; l < params.size(); ++l) {
      if (!params[l].trainable) continue;
      update(params[l].weight, g[l].weight, velocity_[l].weight, lr);
      update(params[l].bias, g[l].bias, velocity_[l].bias, lr);
    }
  }

 private:
  void update(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v, double lr) const {
    if (g.empty()) return;
    v.resize(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + wd_ * w[i];
      w[i] -= lr * v[i];
    }
  }

  double momentum_, wd_;
  std::vector<LayerGrads> velocity_;
};

inline bool wants_pixel_metric(const ExperimentSpec& s) {
  return s.objective == Objective::Pixel || s.split.mode != SetupMode::SampleWise;
}

}  // namespace detail

/// Non-finite losses abort the run with status "aborted_non_finite"; allocation
/// failures and other runtime errors end it with status "failed". Either way the
/// partial record is persisted and returned.
inline TrainResult train_run(const ExperimentSpec& spec, const TrainData& data, const RunOptions& opt) {
  namespace fs = std::filesystem;
  spec.validate();
  if (data.train.empty()) throw ValidationError("no training samples");
  if (opt.run_dir.empty()) throw ValidationError("run directory required");
  const auto t_start = std::chrono::steady_clock::now();
  fs::create_directories(opt.run_dir / "snapshots");

  TrainResult result{RunRecord{}, make_network(spec)};
  RunRecord& rec = result.record;
  Network& net = result.network;
  rec.spec = to_json(spec);
  rec.run_dir = opt.run_dir;
  rec.versions = version_stamps();
  detail::write_json(opt.run_dir / "spec.json", rec.spec);
  detail::write_json(opt.run_dir / "split.json", to_json(spec.split));

  std::ofstream log(opt.run_dir / "log.txt");
  auto say = [&](const std::string& line) {
    log << line << '\n';
    log.flush();
    if (opt.echo) *opt.echo << line << '\n';
  };

  ResourceMonitor monitor;
  if (opt.monitor_resources) monitor.start();

  const Shape3 grid = net.output_shape();
  std::vector<int> labels;
  std::vector<Mask> cell_masks;
  for (const auto& s : data.train) {
    labels.push_back(s.label);
    if (spec.objective == Objective::Pixel) {
      detail::check_mask(s.mask, spec.preprocess.shape.height, spec.preprocess.shape.width, s.label);
      cell_masks.push_back(downsample_mask(s.mask, grid.height, grid.width, spec.pixel_loss));
    }
  }

  EvalOptions eo;
  eo.upsample = spec.upsample;
  eo.pixel = detail::wants_pixel_metric(spec);
  const auto schedule = snapshot_epochs(spec.epochs, spec.snapshot_every);
  std::mt19937_64 shuffle_rng(detail::mix_seed(spec.seed, 0x5eed));
  detail::Sgd sgd(spec.momentum, spec.weight_decay);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  char buf[256];
  try {
    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
      const auto t_epoch = std::chrono::steady_clock::now();
      const double lr = spec.learning_rate * std::pow(spec.lr_gamma, epoch - 1);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double loss_sum = 0;
      for (std::size_t b = 0; b < order.size(); b += std::size_t(spec.batch_size)) {
        const std::size_t e = std::min(order.size(), b + std::size_t(spec.batch_size));
        std::vector<Tensor> imgs;
        std::vector<int> batch_labels;
        std::vector<Mask> batch_masks;
        for (std::size_t i = b; i < e; ++i) {
          imgs.push_back(data.train[order[i]].image);
          batch_labels.push_back(labels[order[i]]);
          if (spec.objective == Objective::Pixel) batch_masks.push_back(cell_masks[order[i]]);
        }
        const Tape tape = net.forward_train(stack(imgs));
        if (!tape.output.all_finite()) {
          rec.status = "aborted_non_finite";
          std::snprintf(buf, sizeof buf, "non-finite latent output at epoch %d, batch %zu", epoch,
                        b / std::size_t(spec.batch_size));
          rec.error = buf;
          break;
        }
        const LossAndGrad lg = spec.objective == Objective::Sample
                                   ? fcdd_loss_grad(tape.output, batch_labels)
                                   : pixel_fcdd_loss_grad(tape.output, batch_masks, spec.pixel_loss.balance);
        if (!std::isfinite(lg.loss)) {
          rec.status = "aborted_non_finite";
          std::snprintf(buf, sizeof buf, "non-finite loss (%g) at epoch %d, batch %zu", lg.loss, epoch,
                        b / std::size_t(spec.batch_size));
          rec.error = buf;
          break;
        }
        sgd.step(net, net.backward(tape, lg.grad), lr);
        loss_sum += lg.loss * double(e - b);
      }
      if (!rec.ok()) {
        say("abort: " + rec.error);
        break;
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
      rec.epochs.push_back({epoch, loss_sum / double(order.size()), lr, secs});
      std::snprintf(buf, sizeof buf, "epoch %d/%d loss %.6f lr %.6g time %.2fs", epoch, spec.epochs,
                    rec.epochs.back().loss, lr, secs);
      say(buf);

      if (std::find(schedule.begin(), schedule.end(), epoch) != schedule.end()) {
        SnapshotRecord snap;
        snap.epoch = epoch;
        snap.path = fs::path("snapshots") / ("epoch_" + std::to_string(epoch) + ".fcddw");
        save_weights(net, opt.run_dir / snap.path);
        if (opt.evaluate_snapshots && !data.test.empty()) {
          const auto r = evaluate(net, data.test, eo);
          snap.metrics = {r.sample_auc, r.pixel_auc};
        }
        std::snprintf(buf, sizeof buf, "snapshot epoch %d sample_auc %s pixel_auc %s", epoch,
                      snap.metrics.sample_auc ? std::to_string(*snap.metrics.sample_auc).c_str() : "n/a",
                      snap.metrics.pixel_auc ? std::to_string(*snap.metrics.pixel_auc).c_str() : "n/a");
        say(buf);
        rec.snapshots.push_back(std::move(snap));
      }
    }

    if (rec.ok() && !data.test.empty()) {
      EvalOptions fo = eo;
      fo.keep_heatmaps = fo.pixel && spec.heatmap_exports > 0;
      const auto r = evaluate(net, data.test, fo);
      rec.final_metrics = {r.sample_auc, r.pixel_auc};
      if (fo.keep_heatmaps) {
        fs::create_directories(opt.run_dir / "heatmaps");
        int exported = 0;
        for (std::size_t i = 0; i < r.heatmaps.size() && exported < spec.heatmap_exports; ++i) {
          if (data.test[i].label != 1) continue;
          Heatmap hm = r.heatmaps[i];
          hm.provenance.source_id = data.test[i].id;
          export_heatmap(opt.run_dir / "heatmaps" / detail::file_safe(data.test[i].id), hm, render_heatmap(hm));
          ++exported;
        }
      }
    }
  } catch (const std::bad_alloc&) {
    rec.status = "failed";
    rec.error = "out of memory";
    say("abort: out of memory");
  } catch (const RuntimeFailure& e) {
    rec.status = "failed";
    rec.error = e.what();
    say(std::string("abort: ") + e.what());
  }

  monitor.stop();
  if (opt.monitor_resources) {
    const ResourceLog rl = monitor.log();
    rec.resource_log = "resources.csv";
    rec.max_cpu_bytes = rl.max_cpu_bytes;
    rec.max_gpu_bytes = rl.max_gpu_bytes;
    rec.gpu_available = rl.gpu_available;
    write_resources_csv(opt.run_dir / rec.resource_log, rl);
  }
  rec.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  detail::write_json(opt.run_dir / "metrics.json", to_json(rec));
  return result;
}

inline RunRecord train(const ExperimentSpec& spec, const TrainData& data, const RunOptions& opt) {
  return train_run(spec, data, opt).record;
}

// ---------------------------------------------------------------------------
// Repetition protocol

struct Aggregate {
  int requested = 0;
  int completed = 0;
  std::map<std::string, std::vector<double>> values;  // per completed run
  std::map<std::string, double> mean;
  std::vector<std::string> failures;
};

struct ProtocolResult {
  std::vector<RunRecord> runs;
  Aggregate aggregate;
};

inline Aggregate aggregate_runs(const std::vector<RunRecord>& runs) {
  Aggregate a;
  a.requested = int(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    if (!r.ok()) {
      a.failures.push_back("rep " + std::to_string(i) + ": " + r.status + (r.error.empty() ? "" : " (" + r.error + ")"));
      continue;
    }
    ++a.completed;
    if (r.final_metrics.sample_auc) a.values["sample_auc"].push_back(*r.final_metrics.sample_auc);
    if (r.final_metrics.pixel_auc) a.values["pixel_auc"].push_back(*r.final_metrics.pixel_auc);
  }
  for (const auto& [k, v] : a.values) a.mean[k] = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  return a;
}

inline nlohmann::json to_json(const Aggregate& a) {
  return {{"requested", a.requested}, {"completed", a.completed}, {"values", a.values}, {"mean", a.mean}, {"failures", a.failures}};
}

inline Aggregate aggregate_from_json(const nlohmann::json& j) {
  Aggregate a;
  a.requested = j.at("requested");
  a.completed = j.at("completed");
  a.values = j.at("values").get<std::map<std::string, std::vector<double>>>();
  a.mean = j.at("mean").get<std::map<std::string, double>>();
  a.failures = j.at("failures").get<std::vector<std::string>>();
  return a;
}

/// n runs with seeds seed+0 .. seed+n-1 under `parent/rep_<i>`, plus `parent/aggregate.json`.
/// The split is shared by all repetitions. A failed run is recorded and the rest continue.
inline ProtocolResult repeat_protocol(const ExperimentSpec& spec, const TrainData& data, int n,
                                      const std::filesystem::path& parent, const RunOptions& base = {}) {
  if (n < 1) throw ValidationError("repetitions must be >= 1");
  spec.validate();
  ProtocolResult out;
  for (int i = 0; i < n; ++i) {
    ExperimentSpec s = spec;
    s.seed = spec.seed + std::uint64_t(i);
    RunOptions o = base;
    o.run_dir = parent / ("rep_" + std::to_string(i));
    if (o.echo) *o.echo << "== repetition " << i + 1 << "/" << n << " (seed " << s.seed << ")\n";
    out.runs.push_back(train(s, data, o));
  }
  out.aggregate = aggregate_runs(out.runs);
  detail::write_json(parent / "aggregate.json", to_json(out.aggregate));
  return out;
}

/// `runs/<YYYYmmdd-HHMMSS>-<name>` under `root`, made unique with a numeric suffix.
inline std::filesystem::path timestamped_run_dir(const std::filesystem::path& root, const std::string& name) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  std::filesystem::path p = root / (std::string(stamp) + "-" + detail::file_safe(name));
  for (int k = 2; std::filesystem::exists(p); ++k) p = root / (std::string(stamp) + "-" + detail::file_safe(name) + "-" + std::to_string(k));
  return p;
}

}  // namespace fcdd
