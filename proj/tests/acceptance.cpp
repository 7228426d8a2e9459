// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
// The optional full F-MNIST reproduction runs only when FCDD_DATA_ROOT (F-MNIST image
// folders), FCDD_OE_ROOT (CIFAR-100 image folders) and FCDD_REFERENCE_CSV (class,roc_auc
// in percent) are all set. FCDD_REPRO_EPOCHS overrides its epoch count.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "fcdd/cli.hpp"
#include "fcdd/fcdd.hpp"
#include "mvtec_rankings.hpp"
#include "oracles.hpp"

using namespace fcdd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  failures += !ok;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

/// Runs `body`; an exception counts as a failure of that criterion.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fcdd_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

Tensor random_tensor(int n, Shape3 s, std::uint64_t seed) {
  Tensor t(n, s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (auto& v : t.data()) v = g(rng);
  return t;
}

// conv3x3(2 -> 4) - conv1x1(4 -> 2) with no activation, so finite differences never cross a kink.
Network tiny_net() {
  BuildOptions bo;
  bo.custom_layers = {ConvLayer{4, 3, 1, 1, true}, ConvLayer{2, 1, 1, 0, true}};
  bo.seed = 5;
  return build_backbone(ArchId::CUSTOM, {2, 8, 8}, bo);
}

double worst_fd_error(Network& net, const std::function<LossAndGrad(const Tensor&)>& objective, const Tensor& x) {
  auto loss = [&] { return objective(net.forward_train(x, false).output).loss; };
  const Tape tape = net.forward_train(x, false);
  const Gradients g = net.backward(tape, objective(tape.output).grad);
  double worst = 0;
  for (std::size_t l = 0; l < net.params().size(); ++l) {
    auto check = [&](std::vector<double>& p, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double num = oracle::central_diff(loss, p[i], 1e-4);
        const double abs = std::abs(num - grad[i]);
        if (abs < 1e-9) continue;
        worst = std::max(worst, abs / std::max({std::abs(num), std::abs(grad[i]), 1e-8}));
      }
    };
    check(net.params()[l].weight, g[l].weight);
    check(net.params()[l].bias, g[l].bias);
  }
  return worst;
}

std::pair<bool, std::string> objective_gradients() {
  const auto t0 = Clock::now();
  double worst = 0;
  {
    Network net = tiny_net();
    const std::vector<int> labels = {0, 1, 0, 1};
    worst = std::max(worst, worst_fd_error(net, [&](const Tensor& z) { return fcdd_loss_grad(z, labels); },
                                           random_tensor(4, {2, 8, 8}, 6)));
  }
  Mask a(8, 8), b(8, 8);
  for (int y = 2; y < 5; ++y)
    for (int c = 3; c < 7; ++c) b.at(y, c) = 1;
  const std::vector<Mask> masks = {a, b};
  for (bool balance : {false, true}) {
    Network net = tiny_net();
    worst = std::max(worst, worst_fd_error(net, [&](const Tensor& z) { return pixel_fcdd_loss_grad(z, masks, balance); },
                                           random_tensor(2, {2, 8, 8}, 7)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && secs < 10, "max relative error " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

std::pair<bool, std::string> huber_closed_forms() {
  LatentGrid g{Tensor(1, 3, 1, 3), 12, 12};
  const std::vector<std::vector<double>> cells = {{0, 0, 0}, {1, 1, 1}, {2, 2, 0}};  // |z|^2 = 0, 3, 8
  for (int v = 0; v < 3; ++v)
    for (int k = 0; k < 3; ++k) g.values(0, k, 0, v) = cells[std::size_t(v)][std::size_t(k)];
  const ScoreMap m = huber_score_map(g);
  double err = 0;
  for (int v = 0; v < 3; ++v) err = std::max(err, std::abs(m.at(0, v) - double(v)));
  return {err <= 1e-12, "max error " + fmt(err)};
}

std::pair<bool, std::string> auc_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 200)(rng);
    const int levels = std::uniform_int_distribution<int>(1, 20)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, levels)(rng) / double(levels + 1);
      y[i] = std::uniform_int_distribution<int>(0, 1)(rng);
    }
    y[0] = 0;
    y[1] = 1;
    mismatches += roc_auc(s, y) != oracle::auc_pairs(s, y);
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30, std::to_string(mismatches) + " mismatches in 1000 sets, " + fmt(secs, 3) + " s"};
}

std::pair<bool, std::string> upsampling_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int rows = std::uniform_int_distribution<int>(1, 8)(rng);
    const int cols = std::uniform_int_distribution<int>(1, 8)(rng);
    const int jump = std::uniform_int_distribution<int>(1, 4)(rng);
    const int size = std::uniform_int_distribution<int>(1, 12)(rng);
    const double offset = std::uniform_int_distribution<int>(0, 6)(rng) / 2.0;
    const int h = rows * jump + 2, w = cols * jump + 1;
    const double sigma = std::uniform_real_distribution<double>(0.3, 4.0)(rng);
    ScoreMap m;
    m.rows = rows;
    m.cols = cols;
    m.source_height = h;
    m.source_width = w;
    m.values.resize(std::size_t(rows) * cols);
    for (auto& x : m.values) x = std::uniform_real_distribution<double>(0, 5)(rng);
    const Heatmap hm = upsample_heatmap(m, {double(size), double(jump), offset}, h, w, sigma);
    const auto want = oracle::upsample_direct(m.values, rows, cols, size, jump, offset, h, w, sigma);
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(hm.values[i] - want[i]));
  }
  // A single unit cell at (1, 2) of a 4x4 grid, size 8, jump 4, offset 2: centre (6, 10).
  ScoreMap delta;
  delta.rows = delta.cols = 4;
  delta.source_height = delta.source_width = 16;
  delta.values.assign(16, 0.0);
  delta.values[1 * 4 + 2] = 1.0;
  const double sigma = 2.0;
  const Heatmap hm = upsample_heatmap(delta, {8, 4, 2}, 16, 16, sigma);
  double bump = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool inside = y >= 2 && y < 10 && x >= 6 && x < 14;
      const double want = inside ? std::exp(-((y - 6.0) * (y - 6.0) + (x - 10.0) * (x - 10.0)) / (2 * sigma * sigma)) : 0.0;
      bump = std::max(bump, std::abs(hm.at(y, x) - want));
    }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && bump <= 1e-10 && secs < 30,
          "random max error " + fmt(worst) + ", delta bump error " + fmt(bump) + ", " + fmt(secs, 3) + " s"};
}

std::pair<bool, std::string> wilcoxon_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  int compared = 0, mismatches = 0;
  for (int n = 1; n <= 12; ++n)
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> x(n), y(n), d(n);
      const bool coarse = rep % 2 == 0;  // coarse values force ties and zeros
      for (int i = 0; i < n; ++i) {
        x[i] = coarse ? std::uniform_int_distribution<int>(0, 6)(rng) : std::uniform_real_distribution<double>(0, 1)(rng);
        y[i] = coarse ? std::uniform_int_distribution<int>(0, 6)(rng) : std::uniform_real_distribution<double>(0, 1)(rng);
        d[i] = x[i] - y[i];
      }
      const auto w = wilcoxon_signed_rank(x, y);
      if (w.no_signal) continue;
      ++compared;
      mismatches += w.p_value != oracle::wilcoxon_enumerate(d);
    }
  const auto five = wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>(5, 0.0));
  const double secs = seconds_since(t0);
  return {mismatches == 0 && compared > 0 && five.p_value == 0.0625 && secs < 60,
          std::to_string(mismatches) + " mismatches in " + std::to_string(compared) + " cases, d={1..5} p=" +
              fmt(five.p_value) + ", " + fmt(secs, 3) + " s"};
}

const fs::path kLiterature = fs::path(FCDD_SOURCE_DIR) / "data/mvtec_literature_pixel_auc.csv";

int index_of(const std::vector<std::string>& v, const std::string& s) {
  const auto it = std::find(v.begin(), v.end(), s);
  return it == v.end() ? -1 : int(it - v.begin());
}

std::pair<bool, std::string> mvtec_orderings() {
  const ScoreTable t = read_score_table(kLiterature);
  const RankTable r = rank_per_dataset(t);
  std::vector<std::string> wrong;
  for (const auto& pr : oracle::mvtec_top5()) {
    const int d = index_of(t.datasets, pr.cls);
    bool ok = d >= 0;
    for (int p = 1; ok && p <= 5; ++p) {
      const int m = index_of(t.methods, pr.top5[std::size_t(p - 1)].first);
      ok = m >= 0 && t.values[m][d] == pr.top5[std::size_t(p - 1)].second && r.ranks[m][d] == oracle::expected_rank(pr, p);
    }
    int in_top5 = 0;
    for (std::size_t m = 0; ok && m < t.methods.size(); ++m) in_top5 += r.ranks[m][std::size_t(d)] <= 5.0;
    if (!ok || in_top5 != 5) wrong.push_back(pr.cls);
  }
  std::string detail = std::to_string(15 - wrong.size()) + "/15 classes reproduce the printed top five";
  for (const auto& c : wrong) detail += "; wrong: " + c;
  return {wrong.empty() && oracle::mvtec_top5().size() == 15, detail};
}

std::pair<bool, std::string> cd_check() {
  const ScoreTable t = read_score_table(kLiterature);
  const CdResult cd = cd_diagram(t);
  const double gdr = cd.ranks.avg_rank[std::size_t(index_of(t.methods, "GDR"))];
  const double fu = cd.ranks.avg_rank[std::size_t(index_of(t.methods, "FCDD (U)"))];
  return {gdr < fu, "avg rank GDR " + fmt(gdr) + " vs FCDD (U) " + fmt(fu)};
}

std::pair<bool, std::string> end_to_end_smoke() {
  const auto t0 = Clock::now();
  SyntheticOptions so;
  so.seed = 0;
  auto corpus = make_synthetic_corpus(so);
  ExperimentSpec spec;
  spec.name = "smoke";
  spec.split = corpus.split;
  spec.preprocess = Preprocess::for_dataset(dataset_info("synthetic"));
  spec.backbone = fmnist_cnn(spec.preprocess.shape, ArchOptions{});
  spec.objective = Objective::Pixel;
  spec.epochs = 20;
  spec.learning_rate = 1e-3;
  spec.snapshot_every = 20;
  spec.seed = 0;
  const TrainData data = load_data(spec, *corpus.source);
  RunOptions ro;
  ro.run_dir = fresh("smoke");
  const TrainResult res = train_run(spec, data, ro);
  const double secs = seconds_since(t0);
  const Metrics& m = res.record.final_metrics;
  if (!res.record.ok() || !m.sample_auc || !m.pixel_auc) return {false, "run status " + res.record.status + " " + res.record.error};
  return {*m.sample_auc >= 0.95 && *m.pixel_auc >= 0.90 && secs <= 300,
          "sample AUC " + fmt(*m.sample_auc) + ", pixel AUC " + fmt(*m.pixel_auc) + " on " +
              std::to_string(data.test.size()) + " held-out images, " + fmt(secs, 3) + " s"};
}

std::pair<bool, std::string> protocol_mechanics() {
  SyntheticOptions so;
  so.train_normal = so.train_anomalous = 24;
  so.test_normal = so.test_anomalous = 12;
  so.seed = 1;
  auto corpus = make_synthetic_corpus(so);
  ExperimentSpec spec;
  spec.name = "protocol";
  spec.split = corpus.split;
  spec.preprocess = Preprocess::for_dataset(dataset_info("synthetic"));
  ArchOptions ao;
  ao.width = 8;
  spec.backbone = fmnist_cnn(spec.preprocess.shape, ao);
  spec.objective = Objective::Pixel;
  spec.epochs = 2;
  spec.batch_size = 16;
  spec.learning_rate = 0.01;
  spec.snapshot_every = 1;
  spec.seed = 3;
  const TrainData data = load_data(spec, *corpus.source);
  const fs::path parent = fresh("protocol");
  RunOptions base;
  base.monitor_resources = false;
  const ProtocolResult p = repeat_protocol(spec, data, 5, parent, base);

  std::vector<std::string> problems;
  if (p.runs.size() != 5 || p.aggregate.completed != 5) problems.push_back("expected 5 completed runs");
  const auto& values = p.aggregate.values.at("pixel_auc");
  double sum = 0;
  for (std::size_t i = 0; i < p.runs.size(); ++i) {
    const double v = *p.runs[i].final_metrics.pixel_auc;
    sum += v;
    if (i >= values.size() || values[i] != v) problems.push_back("aggregate value " + std::to_string(i) + " differs from run");
  }
  const double mean = sum / 5;
  if (std::abs(p.aggregate.mean.at("pixel_auc") - mean) > 1e-12) problems.push_back("mean mismatch");

  // Box-plot statistics recomputed from the raw values with linear-interpolation quartiles.
  const BoxplotStats b = boxplot_stats(values);
  std::vector<double> s = values;
  std::sort(s.begin(), s.end());
  auto q = [&](double f) {
    const double pos = f * double(s.size() - 1);
    const std::size_t lo = std::size_t(pos);
    return lo + 1 < s.size() ? s[lo] + (pos - double(lo)) * (s[lo + 1] - s[lo]) : s[lo];
  };
  const double iqr = q(0.75) - q(0.25);
  bool box_ok = std::abs(b.q1 - q(0.25)) < 1e-12 && std::abs(b.median - q(0.5)) < 1e-12 && std::abs(b.q3 - q(0.75)) < 1e-12 &&
                b.samples == values;
  std::vector<double> inside;
  std::size_t outliers = 0;
  for (double v : s) {
    if (v < q(0.25) - 1.5 * iqr || v > q(0.75) + 1.5 * iqr) ++outliers;
    else inside.push_back(v);
  }
  box_ok = box_ok && outliers == b.outliers.size() && !inside.empty() && b.whisker_lo == inside.front() &&
           b.whisker_hi == inside.back();
  if (!box_ok) problems.push_back("box-plot statistics not reconstructible");

  double worst = 0;
  std::size_t reloaded = 0;
  for (const auto& run : p.runs)
    for (const auto& snap : run.snapshots) {
      Network net = make_network(spec);
      load_weights(net, run.run_dir / snap.path);
      const EvalResult e = evaluate(net, data.test);
      worst = std::max({worst, std::abs(*e.pixel_auc - *snap.metrics.pixel_auc), std::abs(*e.sample_auc - *snap.metrics.sample_auc)});
      ++reloaded;
    }
  if (reloaded == 0 || worst > 1e-6) problems.push_back("snapshot round trip off by " + fmt(worst));

  std::string detail = "5 runs, mean pixel AUC " + fmt(mean) + ", median " + fmt(b.median) + ", " + std::to_string(reloaded) +
                       " snapshots reload within " + fmt(worst);
  for (const auto& e : problems) detail += "; " + e;
  return {problems.empty(), detail};
}

std::pair<bool, std::string> resource_rate(ResourceMonitor& monitor, Clock::time_point started) {
  const double wait = 61.0 - seconds_since(started);
  if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  monitor.stop();
  const ResourceLog log = monitor.log();
  std::size_t per_minute = 0;
  for (const auto& s : log.samples) per_minute += s.t < 60.0;
  return {per_minute >= 58 && per_minute <= 62,
          std::to_string(per_minute) + " samples in the first 60 s at a 1 s interval, peak " +
              fmt(double(log.max_cpu_bytes) / (1 << 20), 4) + " MiB"};
}

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

int run_cli_quiet(std::vector<std::string> args) {
  args.insert(args.begin(), "fcdd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  const int code = run_cli(int(argv.size()), argv.data(), out, std::cerr);
  return code;
}

void full_reproduction() {
  const std::string name = "Full reproduction (F-MNIST, OE CIFAR-100, 10 classes x 5 reps)";
  const std::string data_root = env("FCDD_DATA_ROOT"), oe_root = env("FCDD_OE_ROOT"), reference = env("FCDD_REFERENCE_CSV");
  if (data_root.empty() || oe_root.empty() || reference.empty()) {
    std::cout << "SKIP " << name << ": set FCDD_DATA_ROOT, FCDD_OE_ROOT and FCDD_REFERENCE_CSV to run" << std::endl;
    return;
  }
  criterion(name, [&]() -> std::pair<bool, std::string> {
    const std::string epochs = env("FCDD_REPRO_EPOCHS").empty() ? "50" : env("FCDD_REPRO_EPOCHS");
    const fs::path root = fresh("reproduction");
    for (int c = 0; c < 10; ++c) {
      const int code = run_cli_quiet({"train", "--setup", "one-vs-rest", "--dataset", "fmnist", "--class", std::to_string(c),
                                      "--oe", "cifar100", "--reps", "5", "--epochs", epochs, "--out", (root / "runs").string(),
                                      "--quiet"});
      if (code != 0) return {false, "training class " + std::to_string(c) + " exited with " + std::to_string(code)};
    }
    std::vector<std::string> report_args = {"report"};
    for (const auto& e : fs::directory_iterator(root / "runs")) report_args.push_back(e.path().string());
    report_args.insert(report_args.end(), {"--out", (root / "report").string(), "--reference", reference, "--strict"});
    if (run_cli_quiet(report_args) != 0) return {false, "report has gaps against the reference"};
    std::ifstream in(root / "report" / "diff.json");
    const auto d = nlohmann::json::parse(in);
    const double max_diff = d["max_diff"], mean_diff = d["mean_rocauc_diff"];
    return {max_diff <= 2.0 && mean_diff <= 1.0,
            "max per-class diff " + fmt(max_diff) + " pp, class-mean diff " + fmt(mean_diff) + " pp"};
  });
}

}  // namespace

int main() {
  const auto started = Clock::now();
  ResourceMonitor monitor(std::chrono::seconds(1));
  monitor.start();

  criterion("Objective correctness (FD gradients, sample and pixel loss)", objective_gradients);
  criterion("Pseudo-Huber closed forms", huber_closed_forms);
  criterion("ROC-AUC oracle equivalence", auc_oracle);
  criterion("Upsampling oracle", upsampling_oracle);
  criterion("Wilcoxon exactness", wilcoxon_exactness);
  criterion("MVTec-AD literature top-5 orderings", mvtec_orderings);
  criterion("CD diagram: GDR ranks ahead of FCDD (U)", cd_check);
  criterion("End-to-end smoke (synthetic, FMNIST_CNN, 20 epochs)", end_to_end_smoke);
  criterion("Protocol mechanics (5 reps, aggregates, box plot, snapshots)", protocol_mechanics);
  criterion("Protocol mechanics (resource log rate)", [&] { return resource_rate(monitor, started); });
  full_reproduction();

  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
