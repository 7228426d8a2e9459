#pragma once

// Command-line front end: train, eval, history, diff, cdd, report.
//
// Exit codes: 0 success, 1 invalid flags or inputs, 2 runtime failure (partial
// artifacts are kept). Every command writes its resolved configuration to
// <out>/config.json before doing any work.
//
// Environment: FCDD_DATA_ROOT and FCDD_OE_ROOT supply --data-root / --oe-root
// when the flags are absent.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fcdd/eval.hpp"
#include "fcdd/plot.hpp"
#include "fcdd/stats.hpp"
#include "fcdd/train.hpp"

namespace fcdd {

namespace cli {

namespace fs = std::filesystem;

inline std::string env_or(const char* name, const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

inline void write_config(const fs::path& dir, const nlohmann::json& cfg) {
  fs::create_directories(dir);
  detail::write_json(dir / "config.json", cfg);
}

/// Two-column CSV `class,roc_auc` with values in percent; returns fractions.
inline std::map<std::string, double> read_class_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::map<std::string, double> out;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 2)
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": expected 2 cells, found " +
                            std::to_string(cells.size()));
    if (!header) {
      header = true;
      continue;
    }
    double v;
    if (!detail::parse_double(cells[1], v))
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ", column 'roc_auc': '" + cells[1] +
                            "' is not a number");
    if (v < 0 || v > 100)
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ", column 'roc_auc': " + cells[1] +
                            " is outside [0, 100]");
    if (!out.emplace(cells[0], v / 100.0).second)
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": duplicate class '" + cells[0] + "'");
  }
  if (out.empty()) throw ValidationError(path.string() + " has no rows");
  return out;
}

inline std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

/// Table-shaped difference output: per-class rows then the summary rows.
inline void write_diff(const fs::path& dir, const std::map<std::string, double>& ours,
                       const std::map<std::string, double>& ref, const DiffStats& d) {
  std::ofstream csv(dir / "diff.csv");
  csv << "class,ours,reference,abs_diff\n";
  for (std::size_t i = 0; i < d.classes.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", d.per_class_abs_diff[i]);
    csv << d.classes[i] << ',' << pct(ours.at(d.classes[i])) << ',' << pct(ref.at(d.classes[i])) << ',' << buf << '\n';
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max,,,%.2f\nmean,,,%.2f\nmean_rocauc,,,%.2f\n", d.max_diff, d.mean_diff,
                d.mean_rocauc_diff);
  csv << buf;
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t i = 0; i < d.classes.size(); ++i) per[d.classes[i]] = d.per_class_abs_diff[i];
  detail::write_json(dir / "diff.json", {{"per_class_abs_diff", per},
                                         {"max_diff", d.max_diff},
                                         {"mean_diff", d.mean_diff},
                                         {"mean_rocauc_diff", d.mean_rocauc_diff},
                                         {"unit", "percent points"}});
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  std::string setup = "synthetic";
  std::string data_root, oe_root;
  std::string dataset = "fmnist";
  std::string cls = "0";
  std::string oe = "cifar100";
  std::size_t oe_count = 0;
  std::string arch;
  int width = 128;
  int latent_channels = 1;
  std::string weights;
  bool no_pretrain = false;
  std::string objective;
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-3;
  double lr_gamma = 0.98;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  int snapshot_every = 10;
  int reps = 5;
  double sigma = 0;
  bool balance = false;
  int side = 224;
  std::string out = "runs";
  std::string name;
  bool quiet = false;
};

struct PreparedExperiment {
  ExperimentSpec spec;
  std::shared_ptr<ImageSource> source;
};

/// Re-creates the image source a split needs (synthetic corpora live in memory).
inline std::shared_ptr<ImageSource> source_for(const SplitSpec& split, int side) {
  if (split.dataset == "synthetic") {
    SyntheticOptions so;
    so.seed = split.seed;
    so.side = side;
    return make_synthetic_corpus(so).source;
  }
  return std::make_shared<FileSource>();
}

inline PreparedExperiment prepare_train(const TrainFlags& f) {
  if (f.reps < 1) throw ValidationError("--reps must be >= 1");
  const std::string data_root = env_or("FCDD_DATA_ROOT", f.data_root);
  PreparedExperiment p;
  ExperimentSpec& s = p.spec;
  std::string dataset;
  Objective default_objective = Objective::Pixel;
  int side = 0;
  if (f.setup == "synthetic") {
    dataset = "synthetic";
    SyntheticOptions so;
    so.seed = f.seed;
    auto corpus = make_synthetic_corpus(so);
    s.split = std::move(corpus.split);
    p.source = corpus.source;
  } else {
    if (data_root.empty()) throw ValidationError("--data-root is required for setup '" + f.setup + "'");
    if (!fs::is_directory(data_root)) throw ValidationError("dataset root does not exist: " + data_root);
    if (f.setup == "one-vs-rest") {
      dataset = f.dataset;
      const std::string oe_root = env_or("FCDD_OE_ROOT", f.oe_root);
      if (oe_root.empty()) throw ValidationError("--oe-root is required for setup 'one-vs-rest'");
      OneVsRestOptions o;
      o.seed = f.seed;
      o.oe_count = f.oe_count;
      s.split = make_one_vs_rest(f.dataset, f.cls, f.oe, data_root, oe_root, o);
      default_objective = Objective::Sample;
    } else if (f.setup == "mvtec-unsup" || f.setup == "mvtec-semisup") {
      dataset = "mvtec";
      side = f.side;
      MvtecOptions o;
      o.seed = f.seed;
      o.side = f.side;
      s.split = make_mvtec_setup(f.cls, f.setup == "mvtec-unsup" ? SetupMode::PixelUnsup : SetupMode::PixelSemisup,
                                 data_root, o);
    } else {
      throw ValidationError("unknown --setup '" + f.setup + "'");
    }
    p.source = std::make_shared<FileSource>();
  }
  const DatasetInfo& info = dataset_info(dataset);
  s.preprocess = side ? Preprocess::for_dataset(info, side) : Preprocess::for_dataset(info);
  BuildOptions bo;
  bo.arch.width = f.width;
  bo.arch.latent_channels = f.latent_channels;
  bo.no_pretrain = f.no_pretrain;
  bo.seed = f.seed;
  if (!f.weights.empty()) bo.pretrained_weights = f.weights;
  const ArchId arch = f.arch.empty() ? info.arch : parse_arch(f.arch);
  if (arch == ArchId::CUSTOM) throw ValidationError("CUSTOM backbones are available through the library API only");
  s.backbone = build_backbone(arch, s.preprocess.shape, bo).spec();
  if (!f.weights.empty()) s.pretrained_weights = f.weights;
  s.objective = f.objective.empty() ? default_objective : parse_objective(f.objective);
  s.pixel_loss.balance = f.balance;
  s.epochs = f.epochs;
  s.batch_size = f.batch_size;
  s.learning_rate = f.lr;
  s.lr_gamma = f.lr_gamma;
  s.momentum = f.momentum;
  s.weight_decay = f.weight_decay;
  s.seed = f.seed;
  s.snapshot_every = f.snapshot_every;
  if (f.sigma > 0) s.upsample.sigma = f.sigma;
  s.name = f.name.empty() ? f.setup + "-" + s.split.dataset + "-" + detail::file_safe(s.split.normal_class) : f.name;
  s.validate();
  return p;
}

inline int cmd_train(const TrainFlags& f, std::ostream& out) {
  PreparedExperiment p = prepare_train(f);
  const fs::path dir = timestamped_run_dir(f.out, p.spec.name);
  nlohmann::json cfg = {{"command", "train"},  {"setup", f.setup}, {"reps", f.reps},
                        {"experiment", to_json(p.spec)}, {"versions", version_stamps()}};
  write_config(dir, cfg);
  TrainData data = load_data(p.spec, *p.source);
  RunOptions ro;
  ro.echo = f.quiet ? nullptr : &out;
  const ProtocolResult r = repeat_protocol(p.spec, data, f.reps, dir, ro);
  out << "run directory: " << dir.string() << '\n';
  for (const auto& [k, v] : r.aggregate.mean) out << "mean " << k << ": " << v << '\n';
  out << "completed " << r.aggregate.completed << "/" << r.aggregate.requested << '\n';
  for (const auto& e : r.aggregate.failures) out << "failure: " << e << '\n';
  return r.aggregate.completed == r.aggregate.requested ? 0 : 2;
}

// ---------------------------------------------------------------------------
// eval / history

struct LoadedRun {
  RunRecord record;
  ExperimentSpec spec;
  Network network;  // architecture with freshly initialized weights
  TrainData data;
};

inline LoadedRun load_run(const fs::path& dir) {
  LoadedRun lr;
  lr.record = read_run(dir);
  std::ifstream in(dir / "split.json");
  if (!in) throw ValidationError("run directory " + dir.string() + " has no split.json");
  lr.spec = spec_from_json(lr.record.spec, split_from_json(nlohmann::json::parse(in)));
  lr.network = Network(lr.spec.backbone, lr.spec.seed);
  const auto src = source_for(lr.spec.split, lr.spec.preprocess.shape.height);
  lr.data.test = materialize(lr.spec.split.test_items, lr.spec.split, lr.spec.preprocess, *src);
  return lr;
}

struct EvalFlags {
  std::string run;
  int epoch = 0;  // 0 = last snapshot
  std::string out;
  int heatmaps = 8;
  std::string norm = "per-image";
  double lo = 0, hi = 1;
};

inline int cmd_eval(const EvalFlags& f, std::ostream& out) {
  if (f.norm != "per-image" && f.norm != "global") throw ValidationError("--norm must be per-image or global");
  if (f.norm == "global" && !(f.hi > f.lo)) throw ValidationError("--hi must exceed --lo for global normalization");
  const fs::path run = f.run;
  LoadedRun lr = load_run(run);
  if (lr.record.snapshots.empty()) throw ValidationError("run has no snapshots");
  const SnapshotRecord* snap = &lr.record.snapshots.back();
  if (f.epoch > 0) {
    snap = nullptr;
    for (const auto& s : lr.record.snapshots)
      if (s.epoch == f.epoch) snap = &s;
    if (!snap) throw ValidationError("no snapshot for epoch " + std::to_string(f.epoch));
  }
  const fs::path dir = f.out.empty() ? run / ("eval_epoch_" + std::to_string(snap->epoch)) : fs::path(f.out);
  write_config(dir, {{"command", "eval"}, {"run", run.generic_string()}, {"epoch", snap->epoch},
                     {"heatmaps", f.heatmaps}, {"norm", f.norm}, {"lo", f.lo}, {"hi", f.hi}});
  load_weights(lr.network, run / snap->path);
  EvalOptions eo;
  eo.upsample = lr.spec.upsample;
  eo.pixel = detail::wants_pixel_metric(lr.spec);
  eo.keep_heatmaps = eo.pixel && f.heatmaps > 0;
  const EvalResult r = evaluate(lr.network, lr.data.test, eo);
  detail::write_json(dir / "eval.json", {{"epoch", snap->epoch}, {"metrics", detail::metrics_json({r.sample_auc, r.pixel_auc})}});
  if (eo.keep_heatmaps) {
    fs::create_directories(dir / "heatmaps");
    RenderOptions ro;
    ro.mode = f.norm == "global" ? NormMode::Global : NormMode::PerImage;
    ro.lo = f.lo;
    ro.hi = f.hi;
    int n = 0;
    for (std::size_t i = 0; i < r.heatmaps.size() && n < f.heatmaps; ++i) {
      if (lr.data.test[i].label != 1) continue;
      Heatmap hm = r.heatmaps[i];
      hm.provenance.source_id = lr.data.test[i].id;
      export_heatmap(dir / "heatmaps" / detail::file_safe(lr.data.test[i].id), hm, render_heatmap(hm, ro));
      ++n;
    }
  }
  if (r.sample_auc) out << "sample_auc: " << *r.sample_auc << '\n';
  if (r.pixel_auc) out << "pixel_auc: " << *r.pixel_auc << '\n';
  return 0;
}

struct HistoryFlags {
  std::vector<std::string> runs;
  std::string out;
  std::string metric = "pixel";
};

inline int cmd_history(const HistoryFlags& f, std::ostream& out) {
  if (f.metric != "pixel" && f.metric != "sample") throw ValidationError("--metric must be pixel or sample");
  const fs::path dir = f.out;
  write_config(dir, {{"command", "history"}, {"runs", f.runs}, {"metric", f.metric}});
  std::vector<std::pair<std::string, HistoryCurve>> curves;
  nlohmann::json sidecar = nlohmann::json::array();
  for (const auto& run : f.runs) {
    LoadedRun lr = load_run(run);
    std::vector<SnapshotRef> refs;
    for (const auto& s : lr.record.snapshots) refs.push_back({s.epoch, fs::path(run) / s.path});
    EvalOptions eo;
    eo.upsample = lr.spec.upsample;
    const auto curve = performance_history(lr.network, refs, lr.data.test,
                                           f.metric == "pixel" ? HistoryMetric::PixelAuc : HistoryMetric::SampleAuc, eo);
    nlohmann::json pts = nlohmann::json::array(), gaps = nlohmann::json::array();
    for (const auto& p : curve.points) pts.push_back({{"epoch", p.epoch}, {"value", p.value}});
    for (const auto& g : curve.gaps) gaps.push_back({{"epoch", g.epoch}, {"reason", g.reason}});
    sidecar.push_back({{"run", run}, {"points", pts}, {"gaps", gaps}});
    for (const auto& g : curve.gaps) out << run << ": gap at epoch " << g.epoch << " (" << g.reason << ")\n";
    curves.emplace_back(fs::path(run).filename().string(), curve);
  }
  detail::write_json(dir / "history.json", {{"metric", f.metric + "_auc"}, {"curves", sidecar}});
  write_text(dir / "history.svg", history_svg(curves, f.metric + " ROC-AUC"));
  return 0;
}

// ---------------------------------------------------------------------------
// diff / cdd

struct DiffFlags {
  std::string ours, reference, out;
};

inline int cmd_diff(const DiffFlags& f, std::ostream& out) {
  const fs::path dir = f.out;
  write_config(dir, {{"command", "diff"}, {"ours", f.ours}, {"reference", f.reference}});
  const auto ours = read_class_csv(f.ours);
  const auto ref = read_class_csv(f.reference);
  const DiffStats d = diff_table(ours, ref);
  write_diff(dir, ours, ref, d);
  out << "max diff " << d.max_diff << " pp, mean diff " << d.mean_diff << " pp, mean ROC-AUC diff "
      << d.mean_rocauc_diff << " pp\n";
  return 0;
}

struct CddFlags {
  std::string scores, out;
  double alpha = 0.05;
  std::string zero_method = "discard";
};

inline int cmd_cdd(const CddFlags& f, std::ostream& out) {
  if (!(f.alpha > 0 && f.alpha < 1)) throw ValidationError("--alpha must lie in (0, 1)");
  if (f.zero_method != "discard" && f.zero_method != "pratt") throw ValidationError("--zero-method must be discard or pratt");
  const fs::path dir = f.out;
  write_config(dir, {{"command", "cdd"}, {"scores", f.scores}, {"alpha", f.alpha}, {"zero_method", f.zero_method}});
  const ScoreTable t = read_score_table(f.scores);
  const CdResult r = cd_diagram(t, f.alpha, f.zero_method == "pratt" ? ZeroMethod::Pratt : ZeroMethod::Discard);
  detail::write_json(dir / "cd.json", cd_sidecar(t, r));
  write_text(dir / "cd.svg", cd_diagram_svg(t, r));
  for (std::size_t m = 0; m < t.methods.size(); ++m) out << t.methods[m] << ": " << r.ranks.avg_rank[m] << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportFlags {
  std::vector<std::string> runs;
  std::string out;
  std::string reference;
  std::string diff_setting;
  std::string metric = "auto";
  bool strict = false;
};

struct ReportRow {
  std::string cls, setting, source, metric;
  std::vector<double> values;
  double mean = 0;
};

inline int cmd_report(const ReportFlags& f, std::ostream& out) {
  if (f.metric != "auto" && f.metric != "pixel" && f.metric != "sample")
    throw ValidationError("--metric must be auto, pixel or sample");
  const fs::path dir = f.out;
  write_config(dir, {{"command", "report"}, {"runs", f.runs}, {"reference", f.reference},
                     {"diff_setting", f.diff_setting}, {"metric", f.metric}, {"strict", f.strict}});
  std::vector<ReportRow> rows;
  std::vector<std::string> gaps;
  for (const auto& run : f.runs) {
    const fs::path p = run;
    try {
      // An experiment directory (aggregate.json + rep_*) or a single run directory.
      std::vector<RunRecord> recs;
      if (fs::exists(p / "aggregate.json")) {
        for (int i = 0; fs::is_directory(p / ("rep_" + std::to_string(i))); ++i) {
          try {
            recs.push_back(read_run(p / ("rep_" + std::to_string(i))));
          } catch (const ValidationError& e) {
            gaps.push_back(run + "/rep_" + std::to_string(i) + ": " + e.what());
          }
        }
      } else {
        recs.push_back(read_run(p));
      }
      if (recs.empty()) throw ValidationError("no readable runs");
      const auto& sp = recs.front().spec.at("split");
      ReportRow row;
      row.cls = sp.at("normal_class");
      row.setting = sp.at("mode");
      row.source = run;
      row.metric = f.metric == "auto" ? (row.setting == to_string(SetupMode::SampleWise) ? "sample_auc" : "pixel_auc")
                                      : f.metric + "_auc";
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& m = recs[i].final_metrics;
        const auto v = row.metric == "sample_auc" ? m.sample_auc : m.pixel_auc;
        if (recs[i].ok() && v)
          row.values.push_back(*v);
        else
          gaps.push_back(run + ": run " + std::to_string(i) + " has no " + row.metric + " (status " + recs[i].status + ")");
      }
      if (row.values.empty()) throw ValidationError("no completed run reports " + row.metric);
      row.mean = std::accumulate(row.values.begin(), row.values.end(), 0.0) / double(row.values.size());
      rows.push_back(std::move(row));
    } catch (const ValidationError& e) {
      gaps.push_back(run + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      gaps.push_back(run + ": malformed run files (" + e.what() + ")");
    }
  }

  nlohmann::json jrows = nlohmann::json::array();
  std::ofstream csv(dir / "report.csv");
  csv << "class,setting,metric,mean,n\n";
  for (const auto& r : rows) {
    jrows.push_back({{"class", r.cls}, {"setting", r.setting}, {"source", r.source}, {"metric", r.metric},
                     {"mean", r.mean}, {"values", r.values}});
    csv << r.cls << ',' << r.setting << ',' << r.metric << ',' << pct(r.mean) << ',' << r.values.size() << '\n';
  }

  // One box plot per class; settings share the axis.
  std::map<std::string, std::vector<BoxSeries>> by_class;
  for (const auto& r : rows) by_class[r.cls].push_back({r.cls, r.setting, boxplot_stats(r.values)});
  for (const auto& [cls, series] : by_class)
    write_text(dir / ("boxplot_" + detail::file_safe(cls) + ".svg"), boxplot_svg(series, "ROC-AUC"));

  nlohmann::json jdiff = nullptr;
  if (!f.reference.empty()) {
    const auto ref_all = read_class_csv(f.reference);
    std::map<std::string, double> ours, ref;
    std::map<std::string, std::set<std::string>> settings;
    for (const auto& r : rows) settings[r.cls].insert(r.setting);
    for (const auto& r : rows) {
      if (!f.diff_setting.empty() && r.setting != f.diff_setting) continue;
      if (f.diff_setting.empty() && settings[r.cls].size() > 1)
        throw ValidationError("class '" + r.cls + "' has several settings; choose one with --diff-setting");
      if (!ref_all.count(r.cls)) {
        gaps.push_back("reference has no entry for class '" + r.cls + "'");
        continue;
      }
      ours[r.cls] = r.mean;
      ref[r.cls] = ref_all.at(r.cls);
    }
    for (const auto& [cls, _] : ref_all)
      if (!ours.count(cls)) gaps.push_back("no result for reference class '" + cls + "'");
    if (!ours.empty()) {
      const DiffStats d = diff_table(ours, ref);
      write_diff(dir, ours, ref, d);
      jdiff = {{"max_diff", d.max_diff}, {"mean_diff", d.mean_diff}, {"mean_rocauc_diff", d.mean_rocauc_diff}};
    }
  }
  detail::write_json(dir / "report.json", {{"rows", jrows}, {"gaps", gaps}, {"diff", jdiff}});
  for (const auto& r : rows) out << r.cls << " [" << r.setting << "] " << r.metric << " " << pct(r.mean) << " (n=" << r.values.size() << ")\n";
  for (const auto& g : gaps) out << "gap: " << g << '\n';
  return f.strict && !gaps.empty() ? 1 : 0;
}

}  // namespace cli

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Fully convolutional anomaly detection: training, evaluation and reporting", "fcdd"};
  app.set_version_flag("--version", FCDD_VERSION);
  app.require_subcommand(1);

  cli::TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train with the repetition protocol and write a run directory");
  train->add_option("--setup", tf.setup, "synthetic | one-vs-rest | mvtec-unsup | mvtec-semisup")
      ->capture_default_str()
      ->check(CLI::IsMember({"synthetic", "one-vs-rest", "mvtec-unsup", "mvtec-semisup"}));
  train->add_option("--data-root", tf.data_root, "Dataset root (or FCDD_DATA_ROOT); not needed for synthetic");
  train->add_option("--dataset", tf.dataset, "One-vs-rest dataset id (fmnist, emnist, cifar10, cifar100)")->capture_default_str();
  train->add_option("--class", tf.cls, "Normal class (name or index) or MVTec-AD class name")->capture_default_str();
  train->add_option("--oe", tf.oe, "Outlier-exposure dataset id")->capture_default_str();
  train->add_option("--oe-root", tf.oe_root, "Outlier-exposure dataset root (or FCDD_OE_ROOT)");
  train->add_option("--oe-count", tf.oe_count, "Outlier-exposure images; 0 = as many as normal images")->capture_default_str();
  train->add_option("--arch", tf.arch, "FMNIST_CNN | CIFAR_CNN | VGG11_FCDD (default from the dataset)");
  train->add_option("--width", tf.width, "Channel width of the trainable convolutions")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--latent-channels", tf.latent_channels, "Channels of the final 1x1 convolution")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--weights", tf.weights, "Pretrained weight archive for the frozen prefix")->check(CLI::ExistingFile);
  train->add_flag("--no-pretrain", tf.no_pretrain, "Allow VGG11_FCDD with a random frozen prefix (recorded in the run)");
  train->add_option("--objective", tf.objective, "SAMPLE | PIXEL (default: SAMPLE for one-vs-rest, PIXEL otherwise)");
  train->add_option("--epochs", tf.epochs, "Training epochs")->capture_default_str();
  train->add_option("--batch-size", tf.batch_size, "Mini-batch size")->capture_default_str();
  train->add_option("--lr", tf.lr, "Initial SGD learning rate")->capture_default_str();
  train->add_option("--lr-gamma", tf.lr_gamma, "Per-epoch exponential learning-rate decay")->capture_default_str();
  train->add_option("--momentum", tf.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--weight-decay", tf.weight_decay, "L2 weight decay")->capture_default_str();
  train->add_option("--seed", tf.seed, "Base seed; repetition i uses seed + i")->capture_default_str();
  train->add_option("--snapshot-every", tf.snapshot_every, "Snapshot interval in epochs (the final epoch is always kept)")->capture_default_str();
  train->add_option("--reps", tf.reps, "Repetitions")->capture_default_str();
  train->add_option("--sigma", tf.sigma, "Heatmap upsampling sigma (default: receptive field / 4)");
  train->add_flag("--balance", tf.balance, "Weight normal and anomalous cells equally in the pixel loss");
  train->add_option("--side", tf.side, "MVTec-AD input side")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--out", tf.out, "Root directory for run directories")->capture_default_str();
  train->add_option("--name", tf.name, "Run name (default derived from setup and class)");
  train->add_flag("--quiet", tf.quiet, "Do not echo the training log");

  cli::EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Evaluate a snapshot of a run and export heatmaps");
  eval->add_option("--run", ef.run, "Run directory (a rep_<i> directory)")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--epoch", ef.epoch, "Snapshot epoch (default: last)");
  eval->add_option("--out", ef.out, "Output directory (default: <run>/eval_epoch_<k>)");
  eval->add_option("--heatmaps", ef.heatmaps, "Anomalous test heatmaps to export")->capture_default_str();
  eval->add_option("--norm", ef.norm, "per-image | global")->capture_default_str();
  eval->add_option("--lo", ef.lo, "Lower bound for global normalization")->capture_default_str();
  eval->add_option("--hi", ef.hi, "Upper bound for global normalization")->capture_default_str();

  cli::HistoryFlags hf;
  auto* history = app.add_subcommand("history", "Metric versus epoch over a run's snapshots");
  history->add_option("--run", hf.runs, "Run directories (repeatable)")->required()->check(CLI::ExistingDirectory);
  history->add_option("--out", hf.out, "Output directory")->required();
  history->add_option("--metric", hf.metric, "pixel | sample")->capture_default_str();

  cli::DiffFlags df;
  auto* diff = app.add_subcommand("diff", "Absolute per-class differences between two class,roc_auc CSVs");
  diff->add_option("--ours", df.ours, "Our results (percent)")->required();
  diff->add_option("--reference", df.reference, "Reference results (percent)")->required();
  diff->add_option("--out", df.out, "Output directory")->required();

  cli::CddFlags cf;
  auto* cdd = app.add_subcommand("cdd", "Critical-difference diagram from a method x dataset score CSV");
  cdd->add_option("--scores", cf.scores, "CSV: header 'method,<dataset>...', one row per method, values in [0, 100]")->required();
  cdd->add_option("--alpha", cf.alpha, "Family-wise significance level")->capture_default_str();
  cdd->add_option("--zero-method", cf.zero_method, "discard | pratt")->capture_default_str();
  cdd->add_option("--out", cf.out, "Output directory")->required();

  cli::ReportFlags rf;
  auto* report = app.add_subcommand("report", "Per-class means, box plots and an optional reference diff");
  report->add_option("runs", rf.runs, "Experiment or run directories")->required();
  report->add_option("--out", rf.out, "Output directory")->required();
  report->add_option("--reference", rf.reference, "Reference class,roc_auc CSV (percent)");
  report->add_option("--diff-setting", rf.diff_setting, "Setting to diff when a class has several");
  report->add_option("--metric", rf.metric, "auto | pixel | sample")->capture_default_str();
  report->add_flag("--strict", rf.strict, "Exit 1 when the report has gaps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cli::cmd_train(tf, out);
    if (eval->parsed()) return cli::cmd_eval(ef, out);
    if (history->parsed()) return cli::cmd_history(hf, out);
    if (diff->parsed()) return cli::cmd_diff(df, out);
    if (cdd->parsed()) return cli::cmd_cdd(cf, out);
    if (report->parsed()) return cli::cmd_report(rf, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace fcdd
