#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lps {

inline constexpr int kNoLabel = -1;

enum class Split { Labeled, Unlabeled, Test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// Feature-vector dataset with a seen/novel class partition.
/// Labels are ground truth for labeled and test rows and kNoLabel for
/// unlabeled rows; test labels are used by evaluation only.
struct Dataset {
  Eigen::MatrixXd features;        // N x D, one sample per row
  Eigen::VectorXi labels;          // kNoLabel where the sample is unlabeled
  std::vector<Split> split;        // per-sample tag
  std::vector<long> ids;           // stable sample ids (file order)
  int num_classes = 0;             // K
  std::vector<int> seen_classes;   // sorted subset of [0, K)
  std::vector<int> novel_classes;  // sorted complement

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool is_seen(int c) const;
  std::vector<int> indices_of(Split s) const;
  long labeled_count() const;
  long unlabeled_count() const;

  /// Throws std::invalid_argument if any structural invariant is broken.
  void validate() const;
};

struct SyntheticConfig {
  int num_classes = 8;
  int dim = 16;
  int samples_per_class = 100;
  double seen_fraction = 0.5;
  double labeled_fraction = 0.5;
  double cluster_separation = 4.0;  // mean center distance, in within-class stds
  std::uint64_t seed = 1;
};

/// One isotropic unit-variance Gaussian cluster per class, centers rescaled
/// so their mean pairwise distance equals cluster_separation. 20% of each
/// class is held out as the test split; labeled_fraction of each seen class's
/// remaining samples is labeled; everything else is unlabeled.
Dataset generate_synthetic(const SyntheticConfig& cfg);

/// CSV schema: header `id,split,label,f0,...,f{D-1}`, plus a companion
/// metadata file at `<path>.meta` with `K=<int>` and `seen_classes=<list>`.
Dataset load_dataset(const std::string& csv_path);
void save_dataset(const Dataset& ds, const std::string& csv_path);

struct AugmentParams {
  double sigma_weak = 0.1;
  double sigma_strong = 0.25;
  double mask_prob = 0.1;
};

/// Weak view: Gaussian jitter. Strong view: heavier jitter, then each
/// coordinate independently zeroed with probability mask_prob.
Eigen::VectorXd augment_weak(const Eigen::VectorXd& x, const AugmentParams& ap,
                             std::mt19937_64& rng);
Eigen::VectorXd augment_strong(const Eigen::VectorXd& x,
                               const AugmentParams& ap, std::mt19937_64& rng);

/// One multi-viewed minibatch. The confidence partition (confident mask and
/// pseudo_labels) starts unset and is filled from weak-view probabilities
/// after a forward pass; labeled samples are never marked confident.
struct MultiViewBatch {
  Eigen::MatrixXd weak_views;   // B x D
  Eigen::MatrixXd strong_views; // B x D
  Eigen::VectorXi labels;       // kNoLabel for unlabeled samples
  std::vector<char> is_labeled;
  std::vector<int> dataset_rows;

  // Filled by partition_confidence.
  std::vector<char> confident;     // per sample, true only for unlabeled
  Eigen::VectorXi pseudo_labels;   // argmax of weak-view probs, all unlabeled
  bool partitioned = false;

  Eigen::Index size() const { return weak_views.rows(); }
  long labeled_in_batch() const;
  long unlabeled_in_batch() const;
};

/// Interleaves without-replacement labeled and unlabeled streams. An epoch
/// ends exactly when the unlabeled pool is exhausted; the labeled stream
/// reshuffles and recycles as needed.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, int batch_size,
               double labeled_fraction_in_batch, const AugmentParams& ap,
               std::uint64_t seed);

  int batches_per_epoch() const { return batches_per_epoch_; }
  int labeled_per_batch() const { return labeled_per_batch_; }
  MultiViewBatch next();

 private:
  const Dataset& ds_;
  AugmentParams ap_;
  std::mt19937_64 rng_;
  std::vector<int> labeled_pool_;
  std::vector<int> unlabeled_pool_;
  std::vector<int> labeled_queue_;
  std::vector<int> unlabeled_queue_;
  int batch_size_ = 0;
  int labeled_per_batch_ = 0;
  int unlabeled_per_batch_ = 0;
  int batches_per_epoch_ = 0;

  void refill_labeled();
  void refill_unlabeled();
};

}  // namespace lps
