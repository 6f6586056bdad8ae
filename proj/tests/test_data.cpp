#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "lps/data.hpp"

using namespace lps;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "lps_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

SyntheticConfig small_cfg() {
  SyntheticConfig cfg;
  cfg.num_classes = 4;
  cfg.dim = 3;
  cfg.samples_per_class = 20;
  cfg.seen_fraction = 0.5;
  cfg.labeled_fraction = 0.5;
  cfg.cluster_separation = 3.0;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generate_synthetic splits classes and samples as configured") {
  SyntheticConfig cfg;
  cfg.num_classes = 8;
  cfg.dim = 4;
  cfg.samples_per_class = 50;
  cfg.seen_fraction = 0.5;
  cfg.labeled_fraction = 0.5;
  cfg.seed = 1;
  const Dataset ds = generate_synthetic(cfg);

  CHECK(ds.seen_classes.size() == 4);
  CHECK(ds.novel_classes.size() == 4);
  CHECK(ds.size() == 8 * 50);
  CHECK(ds.dim() == 4);
  ds.validate();

  // 20% test per class.
  CHECK(ds.indices_of(Split::Test).size() == 8 * 10);
}

TEST_CASE("generate_synthetic labeled counting example") {
  SyntheticConfig cfg;
  cfg.num_classes = 10;
  cfg.dim = 2;
  cfg.samples_per_class = 100;
  cfg.seen_fraction = 0.5;
  cfg.labeled_fraction = 0.1;
  cfg.seed = 3;
  const Dataset ds = generate_synthetic(cfg);

  // 10% of the 80 non-test samples per seen class.
  CHECK(ds.labeled_count() == 5 * 8);
  // Unlabeled = remaining seen (72 each) + all novel train (80 each).
  CHECK(ds.unlabeled_count() == 5 * 72 + 5 * 80);
}

TEST_CASE("generate_synthetic is deterministic per seed") {
  const Dataset a = generate_synthetic(small_cfg());
  const Dataset b = generate_synthetic(small_cfg());
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.split == b.split);
  CHECK(a.seen_classes == b.seen_classes);

  SyntheticConfig other = small_cfg();
  other.seed = 6;
  const Dataset c = generate_synthetic(other);
  CHECK(a.features != c.features);
}

TEST_CASE("generate_synthetic never labels novel classes") {
  const Dataset ds = generate_synthetic(small_cfg());
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (ds.split[static_cast<size_t>(i)] == Split::Labeled) {
      CHECK(ds.is_seen(ds.labels(i)));
    }
    if (ds.split[static_cast<size_t>(i)] == Split::Unlabeled) {
      CHECK(ds.labels(i) == kNoLabel);
    }
  }
}

TEST_CASE("generate_synthetic center separation matches the knob") {
  SyntheticConfig cfg = small_cfg();
  cfg.samples_per_class = 500;
  cfg.cluster_separation = 6.0;
  const Dataset ds = generate_synthetic(cfg);
  // Recover empirical class means; their mean pairwise distance should be
  // close to the configured separation (sample noise shifts it slightly).
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(cfg.num_classes, cfg.dim);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(cfg.num_classes);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (ds.labels(i) == kNoLabel) continue;
    means.row(ds.labels(i)) += ds.features.row(i);
    count(ds.labels(i)) += 1.0;
  }
  for (int c = 0; c < cfg.num_classes; ++c) means.row(c) /= count(c);
  double sum = 0.0;
  int pairs = 0;
  for (int a = 0; a < cfg.num_classes; ++a) {
    for (int b = a + 1; b < cfg.num_classes; ++b) {
      sum += (means.row(a) - means.row(b)).norm();
      ++pairs;
    }
  }
  CHECK(sum / pairs == doctest::Approx(6.0).epsilon(0.15));
}

TEST_CASE("generate_synthetic rejects starved splits") {
  SyntheticConfig cfg = small_cfg();
  cfg.samples_per_class = 2;  // test split rounds to zero
  CHECK_THROWS_AS((void)generate_synthetic(cfg), std::invalid_argument);

  cfg = small_cfg();
  cfg.samples_per_class = 10;
  cfg.labeled_fraction = 0.01;  // labeled count rounds to zero
  CHECK_THROWS_AS((void)generate_synthetic(cfg), std::invalid_argument);
}

TEST_CASE("save/load round-trip is bit exact") {
  const Dataset ds = generate_synthetic(small_cfg());
  const auto path = temp_file("roundtrip.csv");
  save_dataset(ds, path.string());
  const Dataset back = load_dataset(path.string());

  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.split == ds.split);
  CHECK(back.ids == ds.ids);
  CHECK(back.num_classes == ds.num_classes);
  CHECK(back.seen_classes == ds.seen_classes);
  CHECK(back.novel_classes == ds.novel_classes);
}

TEST_CASE("load_dataset happy path") {
  const auto path = temp_file("tiny.csv");
  write_text(path,
             "id,split,label,f0,f1\n"
             "0,labeled,0,1.5,-2.25\n"
             "1,unlabeled,-1,0.5,0\n"
             "2,test,1,3,4\n");
  write_text(temp_file("tiny.csv.meta"), "K=2\nseen_classes=0\n");
  const Dataset ds = load_dataset(path.string());
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.labels(0) == 0);
  CHECK(ds.labels(1) == kNoLabel);
  CHECK(ds.split[2] == Split::Test);
  CHECK(ds.features(0, 1) == -2.25);
  CHECK(ds.novel_classes == std::vector<int>{1});
}

TEST_CASE("load_dataset rejects labeled novel-class rows with line info") {
  const auto path = temp_file("badlabel.csv");
  write_text(path,
             "id,split,label,f0\n"
             "0,labeled,0,1\n"
             "1,labeled,1,2\n");
  write_text(temp_file("badlabel.csv.meta"), "K=2\nseen_classes=0\n");
  try {
    (void)load_dataset(path.string());
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":3:") != std::string::npos);
    CHECK(msg.find("novel") != std::string::npos);
  }
}

TEST_CASE("load_dataset rejects sentinel misuse and malformed rows") {
  const auto meta = "K=2\nseen_classes=0\n";

  auto expect_error = [&](const std::string& name, const std::string& body,
                          const std::string& needle) {
    const auto path = temp_file(name);
    write_text(path, body);
    write_text(temp_file(name + ".meta"), meta);
    try {
      (void)load_dataset(path.string());
      FAIL("expected a parse error for " << name);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  expect_error("sentinel.csv", "id,split,label,f0\n0,labeled,-1,1\n",
               "labeled row without a label");
  expect_error("unlabeled_with_label.csv",
               "id,split,label,f0\n0,unlabeled,1,1\n", "label -1");
  expect_error("fields.csv", "id,split,label,f0\n0,test,1,1,9\n", "fields");
  expect_error("split.csv", "id,split,label,f0\n0,holdout,1,1\n", "split");
  expect_error("range.csv", "id,split,label,f0\n0,test,7,1\n", "out of range");
  expect_error("header.csv", "id,split,label,g0\n0,test,1,1\n", "f0");
  expect_error("badvalue.csv", "id,split,label,f0\n0,test,1,abc\n",
               "feature");
}

TEST_CASE("load_dataset requires metadata") {
  const auto path = temp_file("nometa.csv");
  write_text(path, "id,split,label,f0\n0,test,0,1\n");
  std::filesystem::remove(temp_file("nometa.csv.meta"));
  CHECK_THROWS_AS((void)load_dataset(path.string()), std::runtime_error);
}

TEST_CASE("augment_weak with zero sigma is the identity") {
  std::mt19937_64 rng(1);
  AugmentParams ap;
  ap.sigma_weak = 0.0;
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.25;
  CHECK(augment_weak(x, ap, rng) == x);
}

TEST_CASE("augment_strong with full masking zeroes everything") {
  std::mt19937_64 rng(1);
  AugmentParams ap;
  ap.sigma_strong = 0.0;
  ap.mask_prob = 1.0;
  Eigen::VectorXd x(4);
  x << 1.0, 2.0, 3.0, 4.0;
  CHECK(augment_strong(x, ap, rng) == Eigen::VectorXd::Zero(4));
}

TEST_CASE("augmentation is deterministic given the rng state") {
  AugmentParams ap;
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  std::mt19937_64 a(9), b(9);
  CHECK(augment_weak(x, ap, a) == augment_weak(x, ap, b));
  CHECK(augment_strong(x, ap, a) == augment_strong(x, ap, b));
}

TEST_CASE("weak jitter magnitude follows the chi distribution mean") {
  // E||N(0, I_D)|| for D=16, scaled by sigma_weak.
  const double chi16 = 3.9380256218873266;
  AugmentParams ap;
  ap.sigma_weak = 0.1;
  std::mt19937_64 rng(23);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(16);
  double sum = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    sum += (augment_weak(x, ap, rng) - x).norm();
  }
  CHECK(sum / draws == doctest::Approx(ap.sigma_weak * chi16).epsilon(0.05));
}

TEST_CASE("BatchSampler composition and epoch coverage") {
  const Dataset ds = generate_synthetic(small_cfg());
  BatchSampler sampler(ds, 10, 0.5, AugmentParams{}, 31);
  CHECK(sampler.labeled_per_batch() == 5);

  const long unlabeled_total = ds.unlabeled_count();
  const int bpe = sampler.batches_per_epoch();
  CHECK(bpe == (unlabeled_total + 4) / 5);

  std::multiset<int> seen_rows;
  for (int b = 0; b < bpe; ++b) {
    MultiViewBatch batch = sampler.next();
    CHECK(batch.labeled_in_batch() == 5);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const int row = batch.dataset_rows[static_cast<size_t>(i)];
      const bool lab = batch.is_labeled[static_cast<size_t>(i)];
      CHECK(lab == (ds.split[row] == Split::Labeled));
      CHECK(batch.labels(i) == ds.labels(row));
      if (!lab) {
        CHECK(batch.labels(i) == kNoLabel);
        seen_rows.insert(row);
      }
      CHECK_FALSE(batch.partitioned);
    }
  }
  // Every unlabeled sample appears exactly once per epoch.
  CHECK(seen_rows.size() == static_cast<size_t>(unlabeled_total));
  std::set<int> unique(seen_rows.begin(), seen_rows.end());
  CHECK(unique.size() == seen_rows.size());
}

TEST_CASE("BatchSampler is deterministic per seed") {
  const Dataset ds = generate_synthetic(small_cfg());
  BatchSampler a(ds, 8, 0.25, AugmentParams{}, 77);
  BatchSampler b(ds, 8, 0.25, AugmentParams{}, 77);
  for (int i = 0; i < 5; ++i) {
    const MultiViewBatch ba = a.next();
    const MultiViewBatch bb = b.next();
    CHECK(ba.weak_views == bb.weak_views);
    CHECK(ba.strong_views == bb.strong_views);
    CHECK(ba.dataset_rows == bb.dataset_rows);
  }
}

TEST_CASE("BatchSampler recycles the labeled stream") {
  SyntheticConfig cfg = small_cfg();
  cfg.samples_per_class = 10;  // 2 seen classes * 4 labeled each
  const Dataset ds = generate_synthetic(cfg);
  REQUIRE(ds.labeled_count() == 8);
  BatchSampler sampler(ds, 24, 0.5, AugmentParams{}, 3);
  // 12 labeled per batch > 8 in the pool: the stream must reshuffle.
  const MultiViewBatch batch = sampler.next();
  CHECK(batch.labeled_in_batch() == 12);
}

TEST_CASE("BatchSampler rejects bad configurations") {
  const Dataset ds = generate_synthetic(small_cfg());
  CHECK_THROWS_AS(BatchSampler(ds, 1, 0.5, AugmentParams{}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(BatchSampler(ds, 8, 1.0, AugmentParams{}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(BatchSampler(ds, 8, -0.1, AugmentParams{}, 1),
                  std::invalid_argument);
}

TEST_CASE("Dataset::validate catches structural violations") {
  Dataset ds = generate_synthetic(small_cfg());
  ds.validate();

  Dataset broken = ds;
  // Give an unlabeled sample a label.
  const auto unl = broken.indices_of(Split::Unlabeled);
  REQUIRE_FALSE(unl.empty());
  broken.labels(unl[0]) = broken.seen_classes[0];
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

  broken = ds;
  const auto lab = broken.indices_of(Split::Labeled);
  REQUIRE_FALSE(lab.empty());
  broken.labels(lab[0]) = broken.novel_classes[0];
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

  broken = ds;
  broken.seen_classes.push_back(broken.novel_classes[0]);
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}
