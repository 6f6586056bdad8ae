#include "lps/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lps {

namespace {

std::string line_error(const std::string& path, long line,
                       const std::string& msg) {
  std::ostringstream os;
  os << path << ":" << line << ": " << msg;
  return os.str();
}

// Full-precision decimal form; guarantees bit-exact reload of doubles.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "labeled") return Split::Labeled;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split tag: " + s);
}

bool Dataset::is_seen(int c) const {
  return std::binary_search(seen_classes.begin(), seen_classes.end(), c);
}

std::vector<int> Dataset::indices_of(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

long Dataset::labeled_count() const {
  return std::count(split.begin(), split.end(), Split::Labeled);
}

long Dataset::unlabeled_count() const {
  return std::count(split.begin(), split.end(), Split::Unlabeled);
}

void Dataset::validate() const {
  const auto n = size();
  if (labels.size() != n || static_cast<Eigen::Index>(split.size()) != n ||
      static_cast<Eigen::Index>(ids.size()) != n) {
    throw std::invalid_argument("dataset: per-sample arrays disagree on N");
  }
  if (num_classes < 2) throw std::invalid_argument("dataset: K must be >= 2");
  std::set<int> seen(seen_classes.begin(), seen_classes.end());
  std::set<int> novel(novel_classes.begin(), novel_classes.end());
  if (static_cast<int>(seen.size() + novel.size()) != num_classes) {
    throw std::invalid_argument("dataset: seen/novel must partition [0, K)");
  }
  for (int c = 0; c < num_classes; ++c) {
    if (seen.count(c) + novel.count(c) != 1) {
      throw std::invalid_argument("dataset: seen/novel must partition [0, K)");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels(i);
    switch (split[i]) {
      case Split::Labeled:
        if (y == kNoLabel) {
          throw std::invalid_argument("dataset: labeled sample without label");
        }
        if (!seen.count(y)) {
          throw std::invalid_argument(
              "dataset: labeled sample carries a novel-class label");
        }
        break;
      case Split::Unlabeled:
        if (y != kNoLabel) {
          throw std::invalid_argument("dataset: unlabeled sample with label");
        }
        break;
      case Split::Test:
        if (y < 0 || y >= num_classes) {
          throw std::invalid_argument("dataset: test label out of range");
        }
        break;
    }
  }
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw std::invalid_argument("synthetic: K must be >= 2");
  }
  if (cfg.dim < 1) throw std::invalid_argument("synthetic: dim must be >= 1");
  if (!(cfg.seen_fraction > 0.0 && cfg.seen_fraction < 1.0)) {
    throw std::invalid_argument("synthetic: seen_fraction must be in (0,1)");
  }
  if (!(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0)) {
    throw std::invalid_argument("synthetic: labeled_fraction must be in (0,1]");
  }
  if (!(cfg.cluster_separation > 0.0)) {
    throw std::invalid_argument("synthetic: cluster_separation must be > 0");
  }

  const int spc = cfg.samples_per_class;
  const int test_per_class = static_cast<int>(std::llround(0.2 * spc));
  const int train_per_class = spc - test_per_class;
  const int labeled_per_seen =
      static_cast<int>(std::llround(cfg.labeled_fraction * train_per_class));
  if (test_per_class < 1 || train_per_class < 1 || labeled_per_seen < 1) {
    throw std::invalid_argument(
        "synthetic: samples_per_class too small to populate all splits");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int k = cfg.num_classes;
  const int seen_count = static_cast<int>(std::llround(cfg.seen_fraction * k));
  if (seen_count < 1 || seen_count >= k) {
    throw std::invalid_argument("synthetic: seen_fraction leaves no classes");
  }

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset ds;
  ds.num_classes = k;
  ds.seen_classes.assign(order.begin(), order.begin() + seen_count);
  ds.novel_classes.assign(order.begin() + seen_count, order.end());
  std::sort(ds.seen_classes.begin(), ds.seen_classes.end());
  std::sort(ds.novel_classes.begin(), ds.novel_classes.end());

  // Centers: iid Gaussian, rescaled so the mean pairwise distance matches
  // the configured separation (within-class std is 1).
  Eigen::MatrixXd centers(k, cfg.dim);
  for (int c = 0; c < k; ++c) {
    for (int d = 0; d < cfg.dim; ++d) centers(c, d) = gauss(rng);
  }
  double dist_sum = 0.0;
  int pairs = 0;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      dist_sum += (centers.row(a) - centers.row(b)).norm();
      ++pairs;
    }
  }
  centers *= cfg.cluster_separation / (dist_sum / pairs);

  const long total = static_cast<long>(k) * spc;
  ds.features.resize(total, cfg.dim);
  ds.labels.resize(total);
  ds.split.resize(total);
  ds.ids.resize(total);

  long row = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<int> perm(spc);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    Eigen::MatrixXd pts(spc, cfg.dim);
    for (int s = 0; s < spc; ++s) {
      for (int d = 0; d < cfg.dim; ++d) {
        pts(s, d) = centers(c, d) + gauss(rng);
      }
    }
    const bool seen = ds.is_seen(c);
    for (int s = 0; s < spc; ++s, ++row) {
      ds.features.row(row) = pts.row(perm[s]);
      ds.ids[row] = row;
      if (s < test_per_class) {
        ds.split[row] = Split::Test;
        ds.labels(row) = c;
      } else if (seen && s < test_per_class + labeled_per_seen) {
        ds.split[row] = Split::Labeled;
        ds.labels(row) = c;
      } else {
        ds.split[row] = Split::Unlabeled;
        ds.labels(row) = kNoLabel;
      }
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& csv_path) {
  ds.validate();
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + csv_path);
  out << "id,split,label";
  for (Eigen::Index d = 0; d < ds.dim(); ++d) out << ",f" << d;
  out << "\n";
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out << ds.ids[i] << ',' << to_string(ds.split[i]) << ',' << ds.labels(i);
    for (Eigen::Index d = 0; d < ds.dim(); ++d) {
      out << ',' << format_double(ds.features(i, d));
    }
    out << "\n";
  }

  std::ofstream meta(csv_path + ".meta", std::ios::binary);
  if (!meta) {
    throw std::runtime_error("cannot open for writing: " + csv_path + ".meta");
  }
  meta << "K=" << ds.num_classes << "\n";
  meta << "seen_classes=";
  for (size_t i = 0; i < ds.seen_classes.size(); ++i) {
    if (i) meta << ',';
    meta << ds.seen_classes[i];
  }
  meta << "\n";
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

long parse_long(const std::string& s, const std::string& path, long line,
                const std::string& what) {
  try {
    size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(line_error(path, line, "bad " + what + ": " + s));
  }
}

double parse_double(const std::string& s, const std::string& path, long line) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(line_error(path, line, "bad feature value: " + s));
  }
}

}  // namespace

Dataset load_dataset(const std::string& csv_path) {
  const std::string meta_path = csv_path + ".meta";
  std::ifstream meta(meta_path);
  if (!meta) throw std::runtime_error("cannot open metadata: " + meta_path);

  Dataset ds;
  ds.num_classes = 0;
  bool have_seen = false;
  std::string line;
  long meta_line = 0;
  while (std::getline(meta, line)) {
    ++meta_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(
          line_error(meta_path, meta_line, "expected key=value"));
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "K") {
      ds.num_classes =
          static_cast<int>(parse_long(value, meta_path, meta_line, "K"));
    } else if (key == "seen_classes") {
      for (const auto& tok : split_fields(value)) {
        ds.seen_classes.push_back(static_cast<int>(
            parse_long(tok, meta_path, meta_line, "seen class id")));
      }
      have_seen = true;
    } else {
      throw std::runtime_error(
          line_error(meta_path, meta_line, "unknown metadata key: " + key));
    }
  }
  if (ds.num_classes < 2 || !have_seen) {
    throw std::runtime_error(meta_path + ": metadata must define K and seen_classes");
  }
  std::sort(ds.seen_classes.begin(), ds.seen_classes.end());
  for (int c = 0; c < ds.num_classes; ++c) {
    if (!ds.is_seen(c)) ds.novel_classes.push_back(c);
  }

  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open dataset: " + csv_path);

  long lineno = 0;
  if (!std::getline(in, line)) {
    throw std::runtime_error(csv_path + ": empty file");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "split" ||
      header[2] != "label") {
    throw std::runtime_error(
        line_error(csv_path, lineno, "header must be id,split,label,f0,..."));
  }
  const int dim = static_cast<int>(header.size()) - 3;
  for (int d = 0; d < dim; ++d) {
    if (header[3 + d] != "f" + std::to_string(d)) {
      throw std::runtime_error(
          line_error(csv_path, lineno, "feature columns must be f0..f{D-1}"));
    }
  }

  std::vector<long> ids;
  std::vector<Split> splits;
  std::vector<int> labels;
  std::vector<double> values;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != dim + 3) {
      throw std::runtime_error(line_error(
          csv_path, lineno,
          "expected " + std::to_string(dim + 3) + " fields, got " +
              std::to_string(fields.size())));
    }
    ids.push_back(parse_long(fields[0], csv_path, lineno, "id"));
    Split sp;
    try {
      sp = split_from_string(fields[1]);
    } catch (const std::exception& e) {
      throw std::runtime_error(line_error(csv_path, lineno, e.what()));
    }
    splits.push_back(sp);
    const int y =
        static_cast<int>(parse_long(fields[2], csv_path, lineno, "label"));
    if (y != kNoLabel && (y < 0 || y >= ds.num_classes)) {
      throw std::runtime_error(
          line_error(csv_path, lineno, "label out of range: " + fields[2]));
    }
    if (sp == Split::Labeled) {
      if (y == kNoLabel) {
        throw std::runtime_error(
            line_error(csv_path, lineno, "labeled row without a label"));
      }
      if (!ds.is_seen(y)) {
        throw std::runtime_error(line_error(
            csv_path, lineno,
            "labeled row carries novel-class label " + std::to_string(y)));
      }
    } else if (sp == Split::Unlabeled && y != kNoLabel) {
      throw std::runtime_error(
          line_error(csv_path, lineno, "unlabeled row must carry label -1"));
    } else if (sp == Split::Test && y == kNoLabel) {
      throw std::runtime_error(
          line_error(csv_path, lineno, "test row requires a ground-truth label"));
    }
    labels.push_back(y);
    for (int d = 0; d < dim; ++d) {
      values.push_back(parse_double(fields[3 + d], csv_path, lineno));
    }
  }

  const long n = static_cast<long>(ids.size());
  ds.features.resize(n, dim);
  ds.labels.resize(n);
  for (long i = 0; i < n; ++i) {
    ds.labels(i) = labels[i];
    for (int d = 0; d < dim; ++d) ds.features(i, d) = values[i * dim + d];
  }
  ds.split = std::move(splits);
  ds.ids = std::move(ids);
  ds.validate();
  return ds;
}

Eigen::VectorXd augment_weak(const Eigen::VectorXd& x, const AugmentParams& ap,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    out(d) = x(d) + ap.sigma_weak * gauss(rng);
  }
  return out;
}

Eigen::VectorXd augment_strong(const Eigen::VectorXd& x,
                               const AugmentParams& ap, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    out(d) = x(d) + ap.sigma_strong * gauss(rng);
  }
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    if (unif(rng) < ap.mask_prob) out(d) = 0.0;
  }
  return out;
}

long MultiViewBatch::labeled_in_batch() const {
  return std::count(is_labeled.begin(), is_labeled.end(), char(1));
}

long MultiViewBatch::unlabeled_in_batch() const {
  return static_cast<long>(is_labeled.size()) - labeled_in_batch();
}

BatchSampler::BatchSampler(const Dataset& ds, int batch_size,
                           double labeled_fraction_in_batch,
                           const AugmentParams& ap, std::uint64_t seed)
    : ds_(ds), ap_(ap), rng_(seed), batch_size_(batch_size) {
  if (batch_size < 2) {
    throw std::invalid_argument("batch_size must be >= 2");
  }
  if (labeled_fraction_in_batch < 0.0 || labeled_fraction_in_batch >= 1.0) {
    throw std::invalid_argument("labeled_fraction_in_batch must be in [0,1)");
  }
  labeled_pool_ = ds.indices_of(Split::Labeled);
  unlabeled_pool_ = ds.indices_of(Split::Unlabeled);
  if (labeled_pool_.empty() || unlabeled_pool_.empty()) {
    throw std::invalid_argument(
        "sampler needs at least one labeled and one unlabeled sample");
  }
  labeled_per_batch_ = static_cast<int>(
      std::llround(labeled_fraction_in_batch * batch_size));
  labeled_per_batch_ = std::min(labeled_per_batch_, batch_size_ - 1);
  unlabeled_per_batch_ = batch_size_ - labeled_per_batch_;
  batches_per_epoch_ = static_cast<int>(
      (unlabeled_pool_.size() + unlabeled_per_batch_ - 1) /
      unlabeled_per_batch_);
  refill_labeled();
  refill_unlabeled();
}

void BatchSampler::refill_labeled() {
  labeled_queue_ = labeled_pool_;
  std::shuffle(labeled_queue_.begin(), labeled_queue_.end(), rng_);
}

void BatchSampler::refill_unlabeled() {
  unlabeled_queue_ = unlabeled_pool_;
  std::shuffle(unlabeled_queue_.begin(), unlabeled_queue_.end(), rng_);
}

MultiViewBatch BatchSampler::next() {
  std::vector<int> rows;
  rows.reserve(batch_size_);
  for (int i = 0; i < labeled_per_batch_; ++i) {
    if (labeled_queue_.empty()) refill_labeled();
    rows.push_back(labeled_queue_.back());
    labeled_queue_.pop_back();
  }
  const int want_unlabeled =
      std::min<int>(unlabeled_per_batch_,
                    static_cast<int>(unlabeled_queue_.size()));
  for (int i = 0; i < want_unlabeled; ++i) {
    rows.push_back(unlabeled_queue_.back());
    unlabeled_queue_.pop_back();
  }
  if (unlabeled_queue_.empty()) refill_unlabeled();

  const int b = static_cast<int>(rows.size());
  MultiViewBatch batch;
  batch.weak_views.resize(b, ds_.dim());
  batch.strong_views.resize(b, ds_.dim());
  batch.labels.resize(b);
  batch.is_labeled.resize(b);
  batch.dataset_rows = rows;
  for (int i = 0; i < b; ++i) {
    const int r = rows[i];
    const Eigen::VectorXd x = ds_.features.row(r);
    batch.weak_views.row(i) = augment_weak(x, ap_, rng_);
    batch.strong_views.row(i) = augment_strong(x, ap_, rng_);
    batch.labels(i) = ds_.labels(r);
    batch.is_labeled[i] = ds_.split[r] == Split::Labeled ? 1 : 0;
  }
  return batch;
}

}  // namespace lps
