#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "lps/objective.hpp"

namespace lps {

/// Returned by metrics whose input set is empty (e.g. no novel test samples).
inline constexpr double kUndefinedMetric = -1.0;

/// Minimum-cost perfect matching: mapping[row] = assigned column.
struct AssignmentResult {
  std::vector<int> mapping;
  double total_cost = 0.0;
};

/// Jonker-Volgenant shortest augmenting path over a square cost matrix.
/// total_cost is the sum of the matched entries taken row by row from the
/// input matrix, so integral or dyadic inputs produce exact sums.
AssignmentResult hungarian(const Eigen::MatrixXd& cost);

/// Hungarian-matched accuracy over samples whose ground truth is a novel
/// class: confusion counts between predicted indices and novel targets are
/// maximized via matching. Predictions may use any class index.
double novel_accuracy(const Eigen::VectorXi& preds,
                      const Eigen::VectorXi& targets,
                      const std::vector<int>& novel_classes);

/// Whole-set accuracy. Pinned (default): seen-class predictions score
/// directly against ground truth and only novel target columns are matched,
/// using predicted indices outside the seen set. Free: one matching over the
/// full confusion matrix.
double overall_accuracy(const Eigen::VectorXi& preds,
                        const Eigen::VectorXi& targets,
                        const std::vector<int>& seen_classes,
                        const std::vector<int>& novel_classes,
                        bool free_matching = false);

/// Plain accuracy over samples whose ground truth is a seen class.
double seen_accuracy(const Eigen::VectorXi& preds,
                     const Eigen::VectorXi& targets,
                     const std::vector<int>& seen_classes);

/// Normalized mutual information, arithmetic-mean normalization. When either
/// partition has zero entropy: 1 if the partitions are identical up to
/// relabeling, else 0.
double nmi(const Eigen::VectorXi& preds, const Eigen::VectorXi& targets);

/// Per-entry KL(pi_hat || pi_prior) over a history of estimates.
std::vector<double> pace_trace(const std::vector<ClassDistribution>& history);

/// One evaluation snapshot; serialized as a single JSONL object with exactly
/// these field names. Loss fields hold per-epoch means of the unweighted
/// terms; loss_total is the weighted objective.
struct MetricsRecord {
  long epoch = 0;
  double seen_acc = kUndefinedMetric;
  double novel_acc = kUndefinedMetric;
  double all_acc = kUndefinedMetric;
  double nmi_novel = kUndefinedMetric;
  double kl_to_prior = 0.0;
  double loss_am = 0.0;
  double loss_pc = 0.0;
  double loss_uc = 0.0;
  double loss_entropy = 0.0;
  double loss_total = 0.0;
};

std::string to_jsonl(const MetricsRecord& rec);
MetricsRecord metrics_from_jsonl(const std::string& line);

}  // namespace lps
