#include "lps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "lps/numeric.hpp"

namespace lps {

namespace {

bool contains(const std::vector<int>& sorted, int value) {
  return std::binary_search(sorted.begin(), sorted.end(), value);
}

}  // namespace

AssignmentResult hungarian(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  if (n < 1 || cost.cols() != n) {
    throw std::invalid_argument("hungarian: cost matrix must be square");
  }
  if (!cost.allFinite()) {
    throw std::invalid_argument("hungarian: non-finite cost entry");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);  // match[col] = row, 1-based

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult out;
  out.mapping.assign(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) out.mapping[match[j] - 1] = j - 1;
  // Sum matched entries of the original matrix in row order so that integral
  // and dyadic inputs yield exact totals.
  for (Eigen::Index r = 0; r < n; ++r) out.total_cost += cost(r, out.mapping[r]);
  return out;
}

namespace {

// Maximum-count matching over a (possibly rectangular) confusion matrix,
// zero-padded to square. Returns the summed matched counts.
double matched_counts(const Eigen::MatrixXd& counts) {
  const Eigen::Index side = std::max(counts.rows(), counts.cols());
  Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(side, side);
  padded.topLeftCorner(counts.rows(), counts.cols()) = counts;
  return -hungarian(-padded).total_cost;
}

}  // namespace

double novel_accuracy(const Eigen::VectorXi& preds,
                      const Eigen::VectorXi& targets,
                      const std::vector<int>& novel_classes) {
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("novel_accuracy: length mismatch");
  }
  const Eigen::Index n = preds.size();
  if (n == 0 || novel_classes.empty()) return kUndefinedMetric;

  std::map<int, int> col;
  for (size_t k = 0; k < novel_classes.size(); ++k) {
    col[novel_classes[k]] = static_cast<int>(k);
  }
  int max_pred = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!col.count(targets(i))) {
      throw std::invalid_argument("novel_accuracy: target not a novel class");
    }
    if (preds(i) < 0) throw std::invalid_argument("novel_accuracy: negative pred");
    max_pred = std::max(max_pred, preds(i));
  }

  const Eigen::Index rows = std::max<Eigen::Index>(
      max_pred + 1, static_cast<Eigen::Index>(novel_classes.size()));
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(
      rows, static_cast<Eigen::Index>(novel_classes.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    counts(preds(i), col[targets(i)]) += 1.0;
  }
  return matched_counts(counts) / static_cast<double>(n);
}

double overall_accuracy(const Eigen::VectorXi& preds,
                        const Eigen::VectorXi& targets,
                        const std::vector<int>& seen_classes,
                        const std::vector<int>& novel_classes,
                        bool free_matching) {
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("overall_accuracy: length mismatch");
  }
  const Eigen::Index n = preds.size();
  if (n == 0) return kUndefinedMetric;

  if (free_matching) {
    int hi = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      hi = std::max({hi, preds(i), targets(i)});
    }
    for (int c : seen_classes) hi = std::max(hi, c);
    for (int c : novel_classes) hi = std::max(hi, c);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(hi + 1, hi + 1);
    for (Eigen::Index i = 0; i < n; ++i) counts(preds(i), targets(i)) += 1.0;
    return matched_counts(counts) / static_cast<double>(n);
  }

  double correct = 0.0;
  std::map<int, int> novel_col;
  for (size_t k = 0; k < novel_classes.size(); ++k) {
    novel_col[novel_classes[k]] = static_cast<int>(k);
  }

  // Seen indices stay pinned to themselves; every other predicted index is a
  // candidate cluster for the novel-column matching.
  std::map<int, int> pred_row;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (contains(seen_classes, targets(i))) continue;
    if (!novel_col.count(targets(i))) {
      throw std::invalid_argument("overall_accuracy: target in neither split");
    }
    if (!contains(seen_classes, preds(i))) {
      pred_row.emplace(preds(i), static_cast<int>(pred_row.size()));
    }
  }

  const Eigen::Index nn = static_cast<Eigen::Index>(novel_classes.size());
  Eigen::MatrixXd counts =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pred_row.size()), nn);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (contains(seen_classes, targets(i))) {
      if (preds(i) == targets(i)) correct += 1.0;
    } else if (!contains(seen_classes, preds(i))) {
      counts(pred_row[preds(i)], novel_col[targets(i)]) += 1.0;
    }
  }
  if (counts.size() > 0) correct += matched_counts(counts);
  return correct / static_cast<double>(n);
}

double seen_accuracy(const Eigen::VectorXi& preds,
                     const Eigen::VectorXi& targets,
                     const std::vector<int>& seen_classes) {
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("seen_accuracy: length mismatch");
  }
  long total = 0, correct = 0;
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    if (!contains(seen_classes, targets(i))) continue;
    ++total;
    if (preds(i) == targets(i)) ++correct;
  }
  if (total == 0) return kUndefinedMetric;
  return static_cast<double>(correct) / static_cast<double>(total);
}

double nmi(const Eigen::VectorXi& preds, const Eigen::VectorXi& targets) {
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("nmi: length mismatch");
  }
  const Eigen::Index n = preds.size();
  if (n == 0) throw std::invalid_argument("nmi: empty input");

  std::map<int, int> pid, tid;
  for (Eigen::Index i = 0; i < n; ++i) {
    pid.emplace(preds(i), static_cast<int>(pid.size()));
    tid.emplace(targets(i), static_cast<int>(tid.size()));
  }
  const Eigen::Index np = static_cast<Eigen::Index>(pid.size());
  const Eigen::Index nt = static_cast<Eigen::Index>(tid.size());
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(np, nt);
  for (Eigen::Index i = 0; i < n; ++i) {
    joint(pid[preds(i)], tid[targets(i)]) += 1.0;
  }
  const Eigen::VectorXd a = joint.rowwise().sum();
  const Eigen::VectorXd b = joint.colwise().sum().transpose();
  const double dn = static_cast<double>(n);

  auto entropy = [dn](const Eigen::VectorXd& c) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (c(i) > 0) h -= (c(i) / dn) * std::log(c(i) / dn);
    }
    return h;
  };
  const double hp = entropy(a);
  const double ht = entropy(b);

  if (hp == 0.0 || ht == 0.0) {
    // Zero entropy means a single cluster on that side; the partitions are
    // identical up to relabeling only if both sides are single clusters.
    return (hp == 0.0 && ht == 0.0) ? 1.0 : 0.0;
  }

  double mi = 0.0;
  for (Eigen::Index i = 0; i < np; ++i) {
    for (Eigen::Index j = 0; j < nt; ++j) {
      if (joint(i, j) > 0) {
        mi += (joint(i, j) / dn) *
              std::log(dn * joint(i, j) / (a(i) * b(j)));
      }
    }
  }
  const double value = mi / (0.5 * (hp + ht));
  return std::clamp(value, 0.0, 1.0);
}

std::vector<double> pace_trace(const std::vector<ClassDistribution>& history) {
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& d : history) {
    out.push_back(kl_divergence(d.pi_hat, d.pi_prior));
  }
  return out;
}

std::string to_jsonl(const MetricsRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["seen_acc"] = rec.seen_acc;
  j["novel_acc"] = rec.novel_acc;
  j["all_acc"] = rec.all_acc;
  j["nmi_novel"] = rec.nmi_novel;
  j["kl_to_prior"] = rec.kl_to_prior;
  j["loss_am"] = rec.loss_am;
  j["loss_pc"] = rec.loss_pc;
  j["loss_uc"] = rec.loss_uc;
  j["loss_entropy"] = rec.loss_entropy;
  j["loss_total"] = rec.loss_total;
  return j.dump();
}

MetricsRecord metrics_from_jsonl(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  MetricsRecord rec;
  rec.epoch = j.at("epoch").get<long>();
  rec.seen_acc = j.at("seen_acc").get<double>();
  rec.novel_acc = j.at("novel_acc").get<double>();
  rec.all_acc = j.at("all_acc").get<double>();
  rec.nmi_novel = j.at("nmi_novel").get<double>();
  rec.kl_to_prior = j.at("kl_to_prior").get<double>();
  rec.loss_am = j.at("loss_am").get<double>();
  rec.loss_pc = j.at("loss_pc").get<double>();
  rec.loss_uc = j.at("loss_uc").get<double>();
  rec.loss_entropy = j.at("loss_entropy").get<double>();
  rec.loss_total = j.at("loss_total").get<double>();
  return rec;
}

}  // namespace lps
