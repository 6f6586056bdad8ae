#pragma once

#include <Eigen/Dense>

#include <vector>

#include "lps/data.hpp"

namespace lps {

/// Model-estimated class distribution pi_hat next to the uniform prior.
struct ClassDistribution {
  Eigen::VectorXd pi_hat;
  Eigen::VectorXd pi_prior;

  static ClassDistribution uniform(int num_classes);
  int num_classes() const { return static_cast<int>(pi_hat.size()); }
};

struct Hyperparams {
  double margin_scale = 10.0;      // C
  double temperature = 0.4;        // tau
  double eta1 = 1.0;               // weight of the pseudo-label contrastive term
  double eta2 = 1.0;               // weight of the unsupervised contrastive term
  double lambda_seen = 0.95;
  double lambda_novel_base = 0.4;
  double lambda_novel_ramp = 0.4;
  bool normalize_similarity = true;  // L2-normalize logits before dot products
  double pi_ema_decay = 0.0;         // 0 = per-batch estimate, no smoothing

  void validate() const;
};

struct TrainSchedule {
  long t = 0;  // current iteration
  long total = 1;

  double progress() const { return static_cast<double>(t) / total; }
};

/// Scalar loss with its gradient with respect to one logit vector.
struct LossResult {
  double value = 0.0;
  Eigen::VectorXd grad_logits;
};

/// Scalar loss with gradients into a stack of view logits (one row per view).
struct ViewsLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_logits;
};

/// Scalar loss with gradients into both views of a minibatch.
struct BatchLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_weak;
  Eigen::MatrixXd grad_strong;
};

struct AblationFlags {
  bool no_am = false;       // adaptive margin replaced by plain cross-entropy
  bool no_pc = false;
  bool no_uc = false;
  bool no_entropy = false;
};

/// Per-class confidence threshold: lambda_seen for seen classes, the ramp
/// lambda_novel_base + lambda_novel_ramp * t/T otherwise.
double confidence_threshold(int class_id, const std::vector<int>& seen_classes,
                            const TrainSchedule& sched, const Hyperparams& hp);

/// Sums soft predictions of labeled samples plus unlabeled samples whose max
/// probability clears the threshold of their argmax class, then L1-normalizes.
/// Falls back to uniform when nothing contributes.
ClassDistribution estimate_class_distribution(
    const std::vector<Eigen::VectorXd>& weak_probs_labeled,
    const std::vector<Eigen::VectorXd>& weak_probs_unlabeled,
    const std::vector<int>& seen_classes, const TrainSchedule& sched,
    const Hyperparams& hp);

/// delta_j = -KL(pi_hat || pi) * (pi_hat_j / max(pi_hat)) * C. All entries
/// are <= 0; the modal class gets exactly -KL*C.
Eigen::VectorXd adaptive_margins(const ClassDistribution& dist, double margin_scale);

/// Margin-adjusted cross-entropy of one logit vector: the target coordinate
/// competes as z_y - delta_y against the unmodified rest.
LossResult adaptive_margin_loss(const Eigen::VectorXd& logits, int target,
                                const Eigen::VectorXd& margins);

/// Fills the batch's confident mask and pseudo-labels from weak-view logits.
/// Pseudo-labels and the mask are constants thereafter: no gradient flows
/// through argmax or the indicator.
void partition_confidence(MultiViewBatch& batch,
                          const Eigen::MatrixXd& weak_logits,
                          const std::vector<int>& seen_classes,
                          const TrainSchedule& sched, const Hyperparams& hp);

/// Labeled weak views against ground truth averaged over |B_l|, plus
/// confident strong views against pseudo-labels divided by the full
/// unlabeled count |B_u|.
BatchLoss am_batch_loss(const MultiViewBatch& batch,
                        const Eigen::MatrixXd& weak_logits,
                        const Eigen::MatrixXd& strong_logits,
                        const Eigen::VectorXd& margins);

/// Contrastive loss over an explicit view stack where positives share the
/// anchor's label. Anchors without positives contribute nothing and are
/// dropped from the averaging count.
ViewsLoss supcon_views_loss(const Eigen::MatrixXd& view_logits,
                            const std::vector<int>& view_labels,
                            const Hyperparams& hp);

/// Instance-discrimination loss over an explicit view stack: each listed
/// anchor attracts its designated positive against every other view.
ViewsLoss pair_views_loss(const Eigen::MatrixXd& view_logits,
                          const std::vector<int>& anchor_rows,
                          const std::vector<int>& positive_rows,
                          const Hyperparams& hp);

/// Pseudo-label contrastive clustering over both views of the confident set.
BatchLoss pc_loss(const MultiViewBatch& batch,
                  const Eigen::MatrixXd& weak_logits,
                  const Eigen::MatrixXd& strong_logits, const Hyperparams& hp);

/// Unsupervised contrastive loss: each view of a low-confidence sample pulls
/// its other view against every view in the batch.
BatchLoss uc_loss(const MultiViewBatch& batch,
                  const Eigen::MatrixXd& weak_logits,
                  const Eigen::MatrixXd& strong_logits, const Hyperparams& hp);

/// KL(mean prediction || uniform) over the given view logits, with gradient
/// through the mean and each softmax.
ViewsLoss entropy_regularizer(const Eigen::MatrixXd& view_logits);

/// Unweighted values of the individual terms, for logging.
struct LossTerms {
  double am = 0.0;
  double pc = 0.0;
  double uc = 0.0;
  double entropy = 0.0;
};

/// Weighted sum of the four terms; requires a partitioned batch. Ablation
/// flags zero out individual terms, except no_am which swaps the adaptive
/// margins for plain cross-entropy (zero margins).
BatchLoss total_loss(const MultiViewBatch& batch,
                     const Eigen::MatrixXd& weak_logits,
                     const Eigen::MatrixXd& strong_logits,
                     const ClassDistribution& dist, const TrainSchedule& sched,
                     const Hyperparams& hp, const AblationFlags& flags,
                     LossTerms* terms = nullptr);

}  // namespace lps
