#pragma once

// Dataset registry, one-vs-rest and MVTec-style split composition, confetti
// noise, split manifests, and materialization of items into tensors.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fcdd/backbone.hpp"
#include "fcdd/image_io.hpp"
#include "fcdd/tensor.hpp"

namespace fcdd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Registry

struct DatasetInfo {
  std::string id;
  std::string display_name;
  Shape3 shape;
  int num_classes = 0;
  std::vector<double> mean;
  std::vector<double> stddev;
  ArchId arch = ArchId::CUSTOM;
};

inline const std::vector<DatasetInfo>& dataset_registry() {
  static const std::vector<DatasetInfo> registry = {
      {"fmnist", "F-MNIST", {1, 28, 28}, 10, {0.2860}, {0.3530}, ArchId::FMNIST_CNN},
      {"emnist", "EMNIST", {1, 28, 28}, 26, {0.1722}, {0.3309}, ArchId::FMNIST_CNN},
      {"cifar10", "CIFAR-10", {3, 32, 32}, 10, {0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}, ArchId::CIFAR_CNN},
      {"cifar100", "CIFAR-100", {3, 32, 32}, 100, {0.5071, 0.4865, 0.4409}, {0.2673, 0.2564, 0.2762}, ArchId::CIFAR_CNN},
      {"mvtec", "MVTec-AD", {3, 224, 224}, 15, {0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, ArchId::VGG11_FCDD},
      {"synthetic", "Synthetic", {1, 28, 28}, 2, {0.5}, {0.25}, ArchId::FMNIST_CNN},
  };
  return registry;
}

inline const DatasetInfo& dataset_info(const std::string& id) {
  for (const auto& d : dataset_registry())
    if (d.id == id) return d;
  throw ValidationError("unknown dataset id: " + id);
}

inline const std::vector<std::string>& mvtec_classes() {
  static const std::vector<std::string> classes = {"bottle", "cable",    "capsule",    "carpet",     "grid",
                                                   "hazelnut", "leather", "metal_nut", "pill",       "screw",
                                                   "tile",   "toothbrush", "transistor", "wood", "zipper"};
  return classes;
}

/// Reference name of a one-vs-rest configuration, e.g. "F-MNIST (OE-CIFAR-100)".
inline std::string experiment_reference(const std::string& dataset, const std::string& oe) {
  if (dataset == "cifar10" && oe == "cifar100") return "CIFAR-10";
  return dataset_info(dataset).display_name + " (OE-" + dataset_info(oe).display_name + ")";
}

// ---------------------------------------------------------------------------
// Split specification

enum class SetupMode { SampleWise, PixelUnsup, PixelSemisup };

inline std::string to_string(SetupMode m) {
  switch (m) {
    case SetupMode::SampleWise: return "SAMPLE_WISE";
    case SetupMode::PixelUnsup: return "PIXEL_UNSUP";
    case SetupMode::PixelSemisup: return "PIXEL_SEMISUP";
  }
  return "?";
}

inline SetupMode parse_setup_mode(const std::string& s) {
  if (s == "SAMPLE_WISE") return SetupMode::SampleWise;
  if (s == "PIXEL_UNSUP") return SetupMode::PixelUnsup;
  if (s == "PIXEL_SEMISUP") return SetupMode::PixelSemisup;
  throw ValidationError("unknown setup mode: " + s);
}

enum class ColorMode { UniformRandom, ChannelRandom };

struct ConfettiParams {
  int min_count = 1;
  int max_count = 8;
  int min_size = 2;
  int max_size = 16;
  ColorMode color_mode = ColorMode::UniformRandom;
  std::uint64_t rng_seed = 0;

  void validate(int height, int width) const {
    if (min_count < 1 || max_count < min_count) throw ValidationError("confetti: invalid blob count range");
    if (min_size < 1 || max_size < min_size) throw ValidationError("confetti: invalid blob size range");
    if (max_size >= height || max_size >= width) throw ValidationError("confetti: blob size exceeds the image");
  }

  /// Default geometry (counts 1-8, sizes 2-16 px at 224 px) scaled to the image side.
  static ConfettiParams defaults_for(int height, int width, std::uint64_t seed = 0) {
    ConfettiParams p;
    const double scale = std::min(height, width) / 224.0;
    p.min_size = std::max(1, int(std::lround(2 * scale)));
    p.max_size = std::max(p.min_size, std::min(std::min(height, width) - 1, int(std::lround(16 * scale))));
    p.rng_seed = seed;
    return p;
  }
};

enum class ItemKind { Real, Confetti };

struct Item {
  std::string id;     // unique within a split
  std::string image;  // image reference resolved by an ImageSource
  std::string mask;   // ground-truth mask reference; empty means none
  int label = 0;      // 0 normal, 1 anomalous
  int class_id = -1;
  std::string group;  // class name or defect type
  ItemKind kind = ItemKind::Real;
  std::uint64_t confetti_seed = 0;
};

struct SplitSpec {
  std::string dataset;
  std::string normal_class;
  SetupMode mode = SetupMode::SampleWise;
  std::optional<std::string> oe_source;
  std::string experiment_reference;
  std::vector<Item> train_items;
  std::vector<Item> test_items;
  std::optional<ConfettiParams> confetti;
  std::vector<std::string> moved_items;  // semi-supervised: test items moved into train
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Confetti noise

struct ConfettiResult {
  Tensor image;     // (1, C, H, W), values in [0, 1]
  Mask blob_mask;   // union of blob footprints
};

/// Pastes axis-aligned rectangular blobs of random color onto `image` (values in [0, 1]).
inline ConfettiResult confetti_noise(const Tensor& image, const ConfettiParams& p) {
  if (image.n() != 1) throw ValidationError("confetti_noise: expects a single image");
  if (!image.all_finite()) throw ValidationError("confetti_noise: non-finite image");
  p.validate(image.h(), image.w());
  std::mt19937_64 rng(p.rng_seed);
  std::uniform_int_distribution<int> count_d(p.min_count, p.max_count);
  std::uniform_int_distribution<int> size_d(p.min_size, p.max_size);
  std::uniform_real_distribution<double> color_d(0.0, 1.0);
  ConfettiResult r{image, Mask(image.h(), image.w())};
  const int blobs = count_d(rng);
  for (int b = 0; b < blobs; ++b) {
    const int bh = size_d(rng), bw = size_d(rng);
    const int y0 = std::uniform_int_distribution<int>(0, image.h() - bh)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, image.w() - bw)(rng);
    std::vector<double> color(image.c());
    for (auto& c : color) c = color_d(rng);
    for (int y = y0; y < y0 + bh; ++y)
      for (int x = x0; x < x0 + bw; ++x) {
        for (int c = 0; c < image.c(); ++c)
          r.image(0, c, y, x) = p.color_mode == ColorMode::UniformRandom ? color[c] : color_d(rng);
        r.blob_mask.at(y, x) = 1;
      }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Folder scanning

namespace detail {

inline bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext == ".png";
}

inline std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Labeled image folder: <root>/{train,test}/<class>/*.png. Class ids follow sorted class names.
struct FolderDataset {
  std::vector<std::string> classes;
  std::vector<Item> train;
  std::vector<Item> test;
};

inline FolderDataset scan_image_folder(const fs::path& root, const std::string& prefix) {
  if (!fs::is_directory(root)) throw ValidationError("missing dataset root: " + root.string());
  FolderDataset ds;
  ds.classes = detail::sorted_subdirs(root / "train");
  for (const auto& c : detail::sorted_subdirs(root / "test"))
    if (std::find(ds.classes.begin(), ds.classes.end(), c) == ds.classes.end()) ds.classes.push_back(c);
  std::sort(ds.classes.begin(), ds.classes.end());
  if (ds.classes.empty()) throw ValidationError("no class folders under " + root.string());
  for (const char* role : {"train", "test"}) {
    auto& items = std::string(role) == "train" ? ds.train : ds.test;
    for (int k = 0; k < int(ds.classes.size()); ++k)
      for (const auto& f : detail::sorted_images(root / role / ds.classes[k])) {
        Item it;
        it.id = prefix + ":" + role + "/" + ds.classes[k] + "/" + f.filename().string();
        it.image = f.string();
        it.class_id = k;
        it.group = ds.classes[k];
        items.push_back(std::move(it));
      }
  }
  return ds;
}

inline int resolve_class(const std::vector<std::string>& classes, const std::string& name) {
  for (int k = 0; k < int(classes.size()); ++k)
    if (classes[k] == name) return k;
  if (!name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const int k = std::stoi(name);
    if (k >= 0 && k < int(classes.size())) return k;
  }
  throw ValidationError("unknown class '" + name + "'");
}

struct OneVsRestOptions {
  std::uint64_t seed = 0;
  /// Number of OE images; 0 means as many as there are normal training images.
  std::size_t oe_count = 0;
};

/// One class normal; every other class anomalous at test time; OE images anomalous at training time.
inline SplitSpec make_one_vs_rest(const std::string& dataset, const std::string& normal_class,
                                  const std::string& oe, const fs::path& data_root, const fs::path& oe_root,
                                  const OneVsRestOptions& opt = {}) {
  dataset_info(dataset);
  dataset_info(oe);
  if (!fs::is_directory(oe_root)) throw ValidationError("missing OE dataset root: " + oe_root.string());
  const FolderDataset ds = scan_image_folder(data_root, dataset);
  const int normal = resolve_class(ds.classes, normal_class);
  SplitSpec s;
  s.dataset = dataset;
  s.normal_class = ds.classes[normal];
  s.mode = SetupMode::SampleWise;
  s.oe_source = oe;
  s.experiment_reference = experiment_reference(dataset, oe);
  s.seed = opt.seed;
  for (const auto& it : ds.train)
    if (it.class_id == normal) s.train_items.push_back(it);
  if (s.train_items.empty()) throw ValidationError("no training images for class '" + s.normal_class + "'");
  for (auto it : ds.test) {
    it.label = it.class_id == normal ? 0 : 1;
    s.test_items.push_back(std::move(it));
  }
  // OE pool: every image under <oe_root>/train (any class folder), sorted, then seeded shuffle.
  std::vector<Item> pool;
  for (const auto& c : detail::sorted_subdirs(oe_root / "train"))
    for (const auto& f : detail::sorted_images(oe_root / "train" / c)) {
      Item it;
      it.id = "oe:" + oe + "/" + c + "/" + f.filename().string();
      it.image = f.string();
      it.label = 1;
      it.group = "oe";
      pool.push_back(std::move(it));
    }
  if (pool.empty()) throw ValidationError("OE dataset has no images under " + (oe_root / "train").string());
  std::mt19937_64 rng(detail::mix_seed(opt.seed, 1));
  std::shuffle(pool.begin(), pool.end(), rng);
  const std::size_t want = opt.oe_count ? opt.oe_count : s.train_items.size();
  pool.resize(std::min(want, pool.size()));
  for (auto& it : pool) s.train_items.push_back(std::move(it));
  return s;
}

// ---------------------------------------------------------------------------
// MVTec-AD

struct MvtecOptions {
  std::uint64_t seed = 0;
  std::optional<ConfettiParams> confetti;  // defaults scaled to the input side
  int side = 224;
};

namespace detail {

inline void add_confetti_copies(SplitSpec& s, const ConfettiParams& base) {
  std::vector<Item> extra;
  std::uint64_t k = 0;
  for (const auto& it : s.train_items) {
    if (it.label != 0) continue;
    Item c = it;
    c.id = "confetti:" + it.id;
    c.label = 1;
    c.kind = ItemKind::Confetti;
    c.group = "confetti";
    c.confetti_seed = mix_seed(base.rng_seed, k++);
    extra.push_back(std::move(c));
  }
  for (auto& c : extra) s.train_items.push_back(std::move(c));
}

}  // namespace detail

/// <root>/<class>/train/good, <root>/<class>/test/<defect>, <root>/<class>/ground_truth/<defect>/<stem>_mask.png.
inline SplitSpec make_mvtec_setup(const std::string& cls, SetupMode mode, const fs::path& data_root,
                                  const MvtecOptions& opt = {}) {
  if (mode == SetupMode::SampleWise) throw ValidationError("MVTec setups are pixel-wise");
  if (!fs::is_directory(data_root)) throw ValidationError("missing dataset root: " + data_root.string());
  const fs::path base = data_root / cls;
  if (!fs::is_directory(base)) throw ValidationError("unknown class '" + cls + "' under " + data_root.string());
  SplitSpec s;
  s.dataset = "mvtec";
  s.normal_class = cls;
  s.mode = mode;
  s.experiment_reference = std::string("MVTec-AD ") + (mode == SetupMode::PixelUnsup ? "unsupervised" : "semi-supervised");
  s.seed = opt.seed;
  for (const auto& f : detail::sorted_images(base / "train" / "good")) {
    Item it;
    it.id = "mvtec:" + cls + "/train/good/" + f.filename().string();
    it.image = f.string();
    it.group = "good";
    s.train_items.push_back(std::move(it));
  }
  if (s.train_items.empty()) throw ValidationError("no normal training images for class '" + cls + "'");
  std::map<std::string, std::vector<Item>> defects;
  const auto groups = detail::sorted_subdirs(base / "test");
  if (groups.empty()) throw ValidationError("no test folders for class '" + cls + "'");
  for (const auto& g : groups) {
    const auto files = detail::sorted_images(base / "test" / g);
    if (files.empty()) throw ValidationError("defect type '" + g + "' has no test images");
    for (const auto& f : files) {
      Item it;
      it.id = "mvtec:" + cls + "/test/" + g + "/" + f.filename().string();
      it.image = f.string();
      it.group = g;
      if (g != "good") {
        it.label = 1;
        const fs::path m = base / "ground_truth" / g / (f.stem().string() + "_mask.png");
        if (!fs::exists(m)) throw ValidationError("missing ground-truth mask " + m.string());
        it.mask = m.string();
        defects[g].push_back(it);
      } else {
        s.test_items.push_back(std::move(it));
      }
    }
  }
  for (auto& [g, items] : defects)
    for (const auto& it : items) s.test_items.push_back(it);

  ConfettiParams cp = opt.confetti.value_or(ConfettiParams::defaults_for(opt.side, opt.side));
  if (!opt.confetti) cp.rng_seed = detail::mix_seed(opt.seed, 2);
  s.confetti = cp;
  detail::add_confetti_copies(s, cp);

  if (mode == SetupMode::PixelSemisup) {
    std::uint64_t salt = 100;
    for (auto& [g, items] : defects) {
      std::vector<std::size_t> order(items.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::mt19937_64 rng(detail::mix_seed(opt.seed, salt++));
      std::shuffle(order.begin(), order.end(), rng);
      Item chosen = items[order.front()];
      s.moved_items.push_back(chosen.id);
      s.test_items.erase(std::remove_if(s.test_items.begin(), s.test_items.end(),
                                        [&](const Item& t) { return t.id == chosen.id; }),
                         s.test_items.end());
      s.train_items.push_back(std::move(chosen));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Image sources and materialization

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Image8 load(const std::string& ref) const = 0;
};

class FileSource : public ImageSource {
 public:
  Image8 load(const std::string& ref) const override { return read_png(ref); }
};

class MemorySource : public ImageSource {
 public:
  void put(std::string key, Image8 img) { images_[std::move(key)] = std::move(img); }
  Image8 load(const std::string& ref) const override {
    const auto it = images_.find(ref);
    if (it == images_.end()) throw ValidationError("unknown in-memory image " + ref);
    return it->second;
  }
  std::size_t size() const { return images_.size(); }

 private:
  std::map<std::string, Image8> images_;
};

struct Preprocess {
  Shape3 shape;
  std::vector<double> mean;
  std::vector<double> stddev;

  static Preprocess for_dataset(const DatasetInfo& d, std::optional<int> side = std::nullopt) {
    Shape3 s = d.shape;
    if (side) s.height = s.width = *side;
    return {s, d.mean, d.stddev};
  }
};

struct Sample {
  std::string id;
  Tensor image;    // normalized, (1, C, H, W)
  int label = 0;
  Mask mask;       // training/evaluation mask under the split's conventions
  Mask blob_mask;  // true confetti footprint (diagnostic); empty otherwise
};

inline Tensor normalize(Tensor t, const Preprocess& p) {
  for (int c = 0; c < t.c(); ++c) {
    const double m = p.mean[std::size_t(c) % p.mean.size()];
    const double sd = p.stddev[std::size_t(c) % p.stddev.size()];
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) t(0, c, y, x) = (t(0, c, y, x) - m) / sd;
  }
  return t;
}

/// Mask conventions: normals all-zero; real anomalies use their ground truth when
/// present and are all-ones otherwise; confetti anomalies are all-ones (the blob
/// footprint is kept separately in `blob_mask`).
inline Sample materialize(const Item& it, const SplitSpec& split, const Preprocess& p, const ImageSource& src) {
  const Shape3 s = p.shape;
  Image8 img = resize_bilinear(convert_channels(src.load(it.image), s.channels), s.height, s.width);
  Sample out;
  out.id = it.id;
  out.label = it.label;
  Tensor t = to_tensor(img);
  if (it.kind == ItemKind::Confetti) {
    if (!split.confetti) throw ValidationError("confetti item without confetti parameters");
    ConfettiParams cp = *split.confetti;
    cp.rng_seed = it.confetti_seed;
    auto r = confetti_noise(t, cp);
    t = std::move(r.image);
    out.blob_mask = std::move(r.blob_mask);
  }
  out.image = normalize(std::move(t), p);
  if (it.label == 0) {
    out.mask = Mask(s.height, s.width, 0);
  } else if (!it.mask.empty()) {
    out.mask = resize_nearest(to_mask(src.load(it.mask)), s.height, s.width);
  } else {
    out.mask = Mask(s.height, s.width, 1);
  }
  return out;
}

inline std::vector<Sample> materialize(const std::vector<Item>& items, const SplitSpec& split, const Preprocess& p,
                                       const ImageSource& src) {
  std::vector<Sample> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(materialize(it, split, p, src));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: textured background; anomalies carry a bright square.

struct SyntheticOptions {
  int side = 28;
  int train_normal = 120;
  int train_anomalous = 120;
  int test_normal = 60;
  int test_anomalous = 60;
  int min_square = 5;
  int max_square = 9;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::shared_ptr<MemorySource> source;
  SplitSpec split;
};

inline SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o = {}) {
  auto src = std::make_shared<MemorySource>();
  SplitSpec s;
  s.dataset = "synthetic";
  s.normal_class = "texture";
  s.mode = SetupMode::PixelSemisup;
  s.experiment_reference = "Synthetic (bright squares)";
  s.seed = o.seed;
  std::mt19937_64 rng(detail::mix_seed(o.seed, 7));
  std::uniform_real_distribution<double> noise(-0.08, 0.08), phase(0.0, 6.283185307179586);
  std::uniform_int_distribution<int> side_d(o.min_square, o.max_square);
  auto make = [&](const std::string& role, int index, bool anomalous) {
    Image8 img(1, o.side, o.side);
    Mask mask(o.side, o.side);
    const double px = phase(rng), py = phase(rng);
    for (int y = 0; y < o.side; ++y)
      for (int x = 0; x < o.side; ++x) {
        const double v = 0.35 + 0.1 * std::sin(0.9 * x + px) * std::cos(0.7 * y + py) + noise(rng);
        img.at(y, x, 0) = std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255));
      }
    if (anomalous) {
      const int k = side_d(rng);
      const int y0 = std::uniform_int_distribution<int>(0, o.side - k)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, o.side - k)(rng);
      for (int y = y0; y < y0 + k; ++y)
        for (int x = x0; x < x0 + k; ++x) img.at(y, x, 0) = 255, mask.at(y, x) = 1;
    }
    Item it;
    it.id = "synthetic:" + role + "/" + (anomalous ? "square/" : "good/") + std::to_string(index);
    it.image = it.id;
    it.label = anomalous;
    it.group = anomalous ? "square" : "good";
    src->put(it.image, std::move(img));
    if (anomalous) {
      it.mask = it.id + "#mask";
      src->put(it.mask, mask_to_image8(mask));
    }
    return it;
  };
  for (int i = 0; i < o.train_normal; ++i) s.train_items.push_back(make("train", i, false));
  for (int i = 0; i < o.train_anomalous; ++i) s.train_items.push_back(make("train", o.train_normal + i, true));
  for (int i = 0; i < o.test_normal; ++i) s.test_items.push_back(make("test", i, false));
  for (int i = 0; i < o.test_anomalous; ++i) s.test_items.push_back(make("test", o.test_normal + i, true));
  return {src, std::move(s)};
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json to_json(const ConfettiParams& p) {
  return {{"blob_count_range", {p.min_count, p.max_count}},
          {"blob_size_range", {p.min_size, p.max_size}},
          {"color_mode", p.color_mode == ColorMode::UniformRandom ? "uniform_random" : "channel_random"},
          {"rng_seed", p.rng_seed}};
}

inline ConfettiParams confetti_from_json(const nlohmann::json& j) {
  ConfettiParams p;
  p.min_count = j.at("blob_count_range")[0];
  p.max_count = j.at("blob_count_range")[1];
  p.min_size = j.at("blob_size_range")[0];
  p.max_size = j.at("blob_size_range")[1];
  p.color_mode = j.at("color_mode") == "uniform_random" ? ColorMode::UniformRandom : ColorMode::ChannelRandom;
  p.rng_seed = j.at("rng_seed");
  return p;
}

inline nlohmann::json to_json(const Item& it, const std::string& role) {
  nlohmann::json j = {{"id", it.id},     {"role", role},        {"image", it.image},
                      {"label", it.label}, {"class_id", it.class_id}, {"group", it.group},
                      {"kind", it.kind == ItemKind::Real ? "real" : "confetti"}};
  if (!it.mask.empty()) j["mask"] = it.mask;
  if (it.kind == ItemKind::Confetti) j["confetti_seed"] = it.confetti_seed;
  return j;
}

inline Item item_from_json(const nlohmann::json& j) {
  Item it;
  it.id = j.at("id");
  it.image = j.at("image");
  it.mask = j.value("mask", std::string());
  it.label = j.at("label");
  it.class_id = j.value("class_id", -1);
  it.group = j.value("group", std::string());
  it.kind = j.value("kind", std::string("real")) == "confetti" ? ItemKind::Confetti : ItemKind::Real;
  it.confetti_seed = j.value("confetti_seed", std::uint64_t(0));
  return it;
}

/// Manifest listing every item with its role.
inline nlohmann::json to_json(const SplitSpec& s) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : s.train_items) items.push_back(to_json(it, "train"));
  for (const auto& it : s.test_items) items.push_back(to_json(it, "test"));
  nlohmann::json j = {{"dataset", s.dataset},
                      {"normal_class", s.normal_class},
                      {"mode", to_string(s.mode)},
                      {"experiment_reference", s.experiment_reference},
                      {"seed", s.seed},
                      {"moved_items", s.moved_items},
                      {"items", items}};
  j["oe_source"] = s.oe_source ? nlohmann::json(*s.oe_source) : nlohmann::json(nullptr);
  j["confetti"] = s.confetti ? to_json(*s.confetti) : nlohmann::json(nullptr);
  return j;
}

inline SplitSpec split_from_json(const nlohmann::json& j) {
  SplitSpec s;
  s.dataset = j.at("dataset");
  s.normal_class = j.at("normal_class");
  s.mode = parse_setup_mode(j.at("mode"));
  s.experiment_reference = j.value("experiment_reference", std::string());
  s.seed = j.value("seed", std::uint64_t(0));
  s.moved_items = j.value("moved_items", std::vector<std::string>{});
  if (!j.at("oe_source").is_null()) s.oe_source = j.at("oe_source").get<std::string>();
  if (!j.at("confetti").is_null()) s.confetti = confetti_from_json(j.at("confetti"));
  for (const auto& e : j.at("items")) (e.at("role") == "train" ? s.train_items : s.test_items).push_back(item_from_json(e));
  return s;
}

}  // namespace fcdd
