#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "fcdd/data.hpp"

using namespace fcdd;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fcdd_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put_png(const fs::path& p, int channels, int side, std::uint8_t fill) {
  fs::create_directories(p.parent_path());
  Image8 img(channels, side, side);
  std::fill(img.pixels.begin(), img.pixels.end(), fill);
  write_png(p, img);
}

/// <root>/{train,test}/c<k>/*.png with `classes` classes.
fs::path folder_fixture(const std::string& name, int classes, int per_class) {
  const fs::path root = fresh(name);
  for (const char* role : {"train", "test"})
    for (int k = 0; k < classes; ++k)
      for (int i = 0; i < per_class; ++i)
        put_png(root / role / ("c" + std::to_string(k)) / (std::to_string(i) + ".png"), 1, 8, std::uint8_t(20 * k));
  return root;
}

/// MVTec layout for class "widget" with the given defect types (3 images each).
fs::path mvtec_fixture(const std::string& name, const std::vector<std::string>& defects) {
  const fs::path root = fresh(name);
  const fs::path base = root / "widget";
  for (int i = 0; i < 4; ++i) put_png(base / "train" / "good" / (std::to_string(i) + ".png"), 3, 16, 100);
  for (int i = 0; i < 2; ++i) put_png(base / "test" / "good" / (std::to_string(i) + ".png"), 3, 16, 100);
  for (const auto& d : defects)
    for (int i = 0; i < 3; ++i) {
      put_png(base / "test" / d / (std::to_string(i) + ".png"), 3, 16, 200);
      Image8 m(1, 16, 16);
      for (int y = 4; y < 8; ++y)
        for (int x = 2; x < 6; ++x) m.at(y, x, 0) = 255;
      fs::create_directories(base / "ground_truth" / d);
      write_png(base / "ground_truth" / d / (std::to_string(i) + "_mask.png"), m);
    }
  return root;
}

std::set<std::string> ids(const std::vector<Item>& items) {
  std::set<std::string> s;
  for (const auto& it : items) s.insert(it.id);
  return s;
}

void expect_disjoint(const SplitSpec& s) {
  const auto train = ids(s.train_items);
  for (const auto& it : s.test_items) EXPECT_EQ(train.count(it.id), 0u) << it.id;
}

Tensor gray_image(int side, std::uint64_t seed) {
  Tensor t(1, 3, side, side);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(Registry, KnownDatasets) {
  EXPECT_EQ(dataset_info("fmnist").shape, (Shape3{1, 28, 28}));
  EXPECT_EQ(dataset_info("cifar10").shape, (Shape3{3, 32, 32}));
  EXPECT_EQ(dataset_info("mvtec").arch, ArchId::VGG11_FCDD);
  EXPECT_THROW(dataset_info("imagenet"), ValidationError);
  EXPECT_EQ(mvtec_classes().size(), 15u);
  EXPECT_EQ(experiment_reference("fmnist", "cifar100"), "F-MNIST (OE-CIFAR-100)");
  EXPECT_EQ(experiment_reference("cifar10", "cifar100"), "CIFAR-10");
  EXPECT_EQ(experiment_reference("fmnist", "emnist"), "F-MNIST (OE-EMNIST)");
}

TEST(Confetti, DeterministicUnderSeed) {
  const Tensor img = gray_image(32, 1);
  ConfettiParams p = ConfettiParams::defaults_for(32, 32, 77);
  const auto a = confetti_noise(img, p), b = confetti_noise(img, p);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.blob_mask.values, b.blob_mask.values);
  p.rng_seed = 78;
  EXPECT_NE(confetti_noise(img, p).blob_mask.values, a.blob_mask.values);
}

TEST(Confetti, OnlyMaskedPixelsChange) {
  const Tensor img = gray_image(40, 2);
  for (ColorMode mode : {ColorMode::UniformRandom, ColorMode::ChannelRandom})
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      ConfettiParams p;
      p.min_size = 3;
      p.max_size = 12;
      p.color_mode = mode;
      p.rng_seed = seed;
      const auto r = confetti_noise(img, p);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 40; ++y)
          for (int x = 0; x < 40; ++x)
            if (!r.blob_mask.at(y, x)) EXPECT_EQ(r.image(0, c, y, x), img(0, c, y, x));
    }
}

TEST(Confetti, PixelCountWithinGeometryBounds) {
  const Tensor img = gray_image(48, 3);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    ConfettiParams p;
    p.min_count = 2;
    p.max_count = 5;
    p.min_size = 3;
    p.max_size = 9;
    p.rng_seed = seed;
    const auto n = confetti_noise(img, p).blob_mask.count();
    EXPECT_GE(n, std::size_t(p.min_size * p.min_size));
    EXPECT_LE(n, std::size_t(p.max_count * p.max_size * p.max_size));
  }
}

TEST(Confetti, InvalidParams) {
  const Tensor img = gray_image(16, 4);
  ConfettiParams p;
  p.max_size = 16;
  EXPECT_THROW(confetti_noise(img, p), ValidationError);
  p.max_size = 4;
  p.min_size = 5;
  EXPECT_THROW(confetti_noise(img, p), ValidationError);
  p = ConfettiParams{};
  p.min_count = 0;
  EXPECT_THROW(confetti_noise(img, p), ValidationError);
}

TEST(OneVsRest, CompositionAndLabels) {
  const fs::path data = folder_fixture("fmnist", 10, 2);
  const fs::path oe = folder_fixture("cifar100", 3, 4);
  OneVsRestOptions o;
  o.seed = 5;
  const SplitSpec s = make_one_vs_rest("fmnist", "c0", "cifar100", data, oe, o);
  EXPECT_EQ(s.experiment_reference, "F-MNIST (OE-CIFAR-100)");
  EXPECT_EQ(s.mode, SetupMode::SampleWise);
  int normals = 0, oe_items = 0;
  for (const auto& it : s.train_items) {
    if (it.label == 0) {
      ++normals;
      EXPECT_EQ(it.group, "c0");
    } else {
      ++oe_items;
      EXPECT_EQ(it.group, "oe");
      EXPECT_EQ(it.id.rfind("oe:cifar100/", 0), 0u);
    }
  }
  EXPECT_EQ(normals, 2);
  EXPECT_EQ(oe_items, 2);  // capped at the normal count
  std::set<std::string> test_classes;
  int pos = 0, neg = 0;
  for (const auto& it : s.test_items) {
    test_classes.insert(it.group);
    (it.label ? pos : neg)++;
    EXPECT_EQ(it.label, it.group == "c0" ? 0 : 1);
  }
  EXPECT_EQ(test_classes.size(), 10u);
  EXPECT_EQ(pos, 18);
  EXPECT_EQ(neg, 2);
  expect_disjoint(s);
}

TEST(OneVsRest, ClassByIndexAndErrors) {
  const fs::path data = folder_fixture("cifar10", 10, 1);
  const fs::path oe = folder_fixture("cifar100_b", 2, 2);
  EXPECT_EQ(make_one_vs_rest("cifar10", "3", "cifar100", data, oe).normal_class, "c3");
  EXPECT_EQ(make_one_vs_rest("cifar10", "3", "cifar100", data, oe).experiment_reference, "CIFAR-10");
  EXPECT_THROW(make_one_vs_rest("cifar10", "c42", "cifar100", data, oe), ValidationError);
  EXPECT_THROW(make_one_vs_rest("cifar10", "c1", "cifar100", data / "nope", oe), ValidationError);
  EXPECT_THROW(make_one_vs_rest("cifar10", "c1", "cifar100", data, oe / "nope"), ValidationError);
}

TEST(OneVsRest, SeededOeSelectionIsStable) {
  const fs::path data = folder_fixture("fmnist_c", 3, 2);
  const fs::path oe = folder_fixture("oe_c", 4, 5);
  OneVsRestOptions o;
  o.seed = 11;
  EXPECT_EQ(ids(make_one_vs_rest("fmnist", "c1", "cifar100", data, oe, o).train_items),
            ids(make_one_vs_rest("fmnist", "c1", "cifar100", data, oe, o).train_items));
}

TEST(Mvtec, UnsupervisedHasOnlyConfettiAnomalies) {
  const fs::path root = mvtec_fixture("mvtec_u", {"crack", "hole", "scratch"});
  MvtecOptions o;
  o.side = 16;
  const SplitSpec s = make_mvtec_setup("widget", SetupMode::PixelUnsup, root, o);
  int normal = 0, confetti = 0;
  for (const auto& it : s.train_items) {
    if (it.label == 0) ++normal;
    else {
      EXPECT_EQ(it.kind, ItemKind::Confetti);
      ++confetti;
    }
  }
  EXPECT_EQ(normal, 4);
  EXPECT_EQ(confetti, 4);
  EXPECT_EQ(s.test_items.size(), 2u + 9u);
  EXPECT_TRUE(s.moved_items.empty());
  ASSERT_TRUE(s.confetti.has_value());
  expect_disjoint(s);
}

TEST(Mvtec, SemiSupervisedMovesOnePerDefectType) {
  const fs::path root = mvtec_fixture("mvtec_s", {"crack", "hole", "scratch", "stain", "tear"});
  MvtecOptions o;
  o.seed = 3;
  o.side = 16;
  const SplitSpec u = make_mvtec_setup("widget", SetupMode::PixelUnsup, root, o);
  const SplitSpec s = make_mvtec_setup("widget", SetupMode::PixelSemisup, root, o);
  ASSERT_EQ(s.moved_items.size(), 5u);
  EXPECT_EQ(s.test_items.size(), u.test_items.size() - 5);
  std::set<std::string> groups;
  const auto test_ids = ids(s.test_items);
  for (const auto& id : s.moved_items) {
    EXPECT_EQ(test_ids.count(id), 0u);
    const auto it = std::find_if(s.train_items.begin(), s.train_items.end(), [&](const Item& t) { return t.id == id; });
    ASSERT_NE(it, s.train_items.end());
    EXPECT_EQ(it->label, 1);
    EXPECT_EQ(it->kind, ItemKind::Real);
    EXPECT_FALSE(it->mask.empty());
    groups.insert(it->group);
  }
  EXPECT_EQ(groups.size(), 5u);
  EXPECT_EQ(make_mvtec_setup("widget", SetupMode::PixelSemisup, root, o).moved_items, s.moved_items);
  expect_disjoint(s);
}

TEST(Mvtec, Errors) {
  const fs::path root = mvtec_fixture("mvtec_e", {"crack"});
  EXPECT_THROW(make_mvtec_setup("gadget", SetupMode::PixelUnsup, root), ValidationError);
  EXPECT_THROW(make_mvtec_setup("widget", SetupMode::PixelUnsup, root / "missing"), ValidationError);
  EXPECT_THROW(make_mvtec_setup("widget", SetupMode::SampleWise, root), ValidationError);
  fs::create_directories(root / "widget" / "test" / "empty_type");
  EXPECT_THROW(make_mvtec_setup("widget", SetupMode::PixelUnsup, root), ValidationError);
  fs::remove_all(root / "widget" / "test" / "empty_type");
  fs::remove(root / "widget" / "ground_truth" / "crack" / "1_mask.png");
  EXPECT_THROW(make_mvtec_setup("widget", SetupMode::PixelUnsup, root), ValidationError);
}

TEST(Materialize, MaskConventions) {
  const fs::path root = mvtec_fixture("mvtec_m", {"crack"});
  MvtecOptions o;
  o.side = 16;
  const SplitSpec s = make_mvtec_setup("widget", SetupMode::PixelSemisup, root, o);
  const Preprocess pp = Preprocess::for_dataset(dataset_info("mvtec"), 16);
  FileSource src;
  for (const auto& it : s.train_items) {
    const Sample smp = materialize(it, s, pp, src);
    EXPECT_EQ(smp.image.sample_shape(), (Shape3{3, 16, 16}));
    if (it.label == 0) {
      EXPECT_EQ(smp.mask.count(), 0u);
    } else if (it.kind == ItemKind::Confetti) {
      EXPECT_EQ(smp.mask.count(), 256u);
      EXPECT_GT(smp.blob_mask.count(), 0u);
    } else {
      EXPECT_EQ(smp.mask.count(), 16u);  // the 4x4 ground-truth square
      EXPECT_EQ(smp.mask.at(5, 3), 1);
    }
  }
}

TEST(Materialize, ConfettiItemIsReproducible) {
  const fs::path root = mvtec_fixture("mvtec_r", {"crack"});
  MvtecOptions o;
  o.side = 16;
  const SplitSpec s = make_mvtec_setup("widget", SetupMode::PixelUnsup, root, o);
  const Preprocess pp = Preprocess::for_dataset(dataset_info("mvtec"), 16);
  FileSource src;
  const auto it = std::find_if(s.train_items.begin(), s.train_items.end(), [](const Item& t) { return t.kind == ItemKind::Confetti; });
  ASSERT_NE(it, s.train_items.end());
  EXPECT_EQ(materialize(*it, s, pp, src).image, materialize(*it, s, pp, src).image);
}

TEST(Synthetic, SquaresCarryMasks) {
  SyntheticOptions o;
  o.train_normal = o.train_anomalous = 5;
  o.test_normal = o.test_anomalous = 4;
  o.seed = 9;
  const auto c = make_synthetic_corpus(o);
  EXPECT_EQ(c.split.train_items.size(), 10u);
  EXPECT_EQ(c.split.test_items.size(), 8u);
  expect_disjoint(c.split);
  const Preprocess pp = Preprocess::for_dataset(dataset_info("synthetic"));
  for (const auto& it : c.split.test_items) {
    const Sample s = materialize(it, c.split, pp, *c.source);
    if (it.label == 0) {
      EXPECT_EQ(s.mask.count(), 0u);
      continue;
    }
    const auto n = s.mask.count();
    EXPECT_GE(n, 25u);
    EXPECT_LE(n, 81u);
    const Image8 img = c.source->load(it.image);
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x)
        if (s.mask.at(y, x)) EXPECT_EQ(img.at(y, x, 0), 255);
  }
  const auto again = make_synthetic_corpus(o);
  EXPECT_EQ(again.source->load(c.split.test_items.back().image).pixels,
            c.source->load(c.split.test_items.back().image).pixels);
}

TEST(Manifest, RoundTrip) {
  const fs::path root = mvtec_fixture("mvtec_j", {"crack", "hole"});
  const SplitSpec s = make_mvtec_setup("widget", SetupMode::PixelSemisup, root, {});
  const auto j = to_json(s);
  const SplitSpec back = split_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(j["items"].size(), s.train_items.size() + s.test_items.size());
  for (const auto& e : j["items"]) EXPECT_TRUE(e["role"] == "train" || e["role"] == "test");
}
