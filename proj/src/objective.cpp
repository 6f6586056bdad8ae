#include "lps/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lps/numeric.hpp"

namespace lps {

namespace {

bool contains(const std::vector<int>& sorted, int value) {
  return std::binary_search(sorted.begin(), sorted.end(), value);
}

void require_partitioned(const MultiViewBatch& batch, const char* who) {
  if (!batch.partitioned) {
    throw std::invalid_argument(std::string(who) +
                                ": batch confidence partition not filled");
  }
}

// Similarity features for the contrastive terms: logit rows, L2-normalized
// unless disabled.
struct SimilarityViews {
  Eigen::MatrixXd phi;          // V x K rows used in dot products
  Eigen::VectorXd norms;        // original norms (1 where degenerate/raw)
  std::vector<char> normalized; // whether the row was actually rescaled

  explicit SimilarityViews(const Eigen::MatrixXd& logits, bool normalize)
      : phi(logits),
        norms(Eigen::VectorXd::Ones(logits.rows())),
        normalized(static_cast<size_t>(logits.rows()), 0) {
    if (!normalize) return;
    for (Eigen::Index v = 0; v < logits.rows(); ++v) {
      const UnitVector u = l2_normalize(logits.row(v).transpose());
      if (!u.degenerate) {
        phi.row(v) = u.value.transpose();
        norms(v) = logits.row(v).norm();
        normalized[v] = 1;
      }
    }
  }

  // Pulls gradients w.r.t. phi back to gradients w.r.t. the raw logits.
  Eigen::MatrixXd backprop(const Eigen::MatrixXd& grad_phi) const {
    Eigen::MatrixXd grad = grad_phi;
    for (Eigen::Index v = 0; v < grad.rows(); ++v) {
      if (!normalized[static_cast<size_t>(v)]) continue;
      const Eigen::RowVectorXd p = phi.row(v);
      const double along = p.dot(grad_phi.row(v));
      grad.row(v) = (grad_phi.row(v) - along * p) / norms(v);
    }
    return grad;
  }
};

}  // namespace

ClassDistribution ClassDistribution::uniform(int num_classes) {
  ClassDistribution d;
  d.pi_hat = Eigen::VectorXd::Constant(num_classes, 1.0 / num_classes);
  d.pi_prior = d.pi_hat;
  return d;
}

void Hyperparams::validate() const {
  if (!(margin_scale > 0)) throw std::invalid_argument("margin_scale must be > 0");
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be > 0");
  if (eta1 < 0 || eta2 < 0) throw std::invalid_argument("eta weights must be >= 0");
  if (!(lambda_seen > 0 && lambda_seen <= 1)) {
    throw std::invalid_argument("lambda_seen must be in (0,1]");
  }
  if (!(lambda_novel_base > 0 && lambda_novel_base <= 1)) {
    throw std::invalid_argument("lambda_novel_base must be in (0,1]");
  }
  if (lambda_novel_base + lambda_novel_ramp > 1.0) {
    throw std::invalid_argument("lambda_novel_base + lambda_novel_ramp must be <= 1");
  }
  if (pi_ema_decay < 0 || pi_ema_decay >= 1) {
    throw std::invalid_argument("pi_ema_decay must be in [0,1)");
  }
}

double confidence_threshold(int class_id, const std::vector<int>& seen_classes,
                            const TrainSchedule& sched, const Hyperparams& hp) {
  if (contains(seen_classes, class_id)) return hp.lambda_seen;
  return hp.lambda_novel_base + hp.lambda_novel_ramp * sched.progress();
}

ClassDistribution estimate_class_distribution(
    const std::vector<Eigen::VectorXd>& weak_probs_labeled,
    const std::vector<Eigen::VectorXd>& weak_probs_unlabeled,
    const std::vector<int>& seen_classes, const TrainSchedule& sched,
    const Hyperparams& hp) {
  int k = 0;
  if (!weak_probs_labeled.empty()) {
    k = static_cast<int>(weak_probs_labeled.front().size());
  } else if (!weak_probs_unlabeled.empty()) {
    k = static_cast<int>(weak_probs_unlabeled.front().size());
  } else {
    throw std::invalid_argument(
        "estimate_class_distribution: no probability vectors given");
  }

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
  for (const auto& p : weak_probs_labeled) {
    if (p.size() != k) throw std::invalid_argument("probability length mismatch");
    sum += p;
  }
  for (const auto& p : weak_probs_unlabeled) {
    if (p.size() != k) throw std::invalid_argument("probability length mismatch");
    Eigen::Index argmax = 0;
    const double pmax = p.maxCoeff(&argmax);
    const double thr = confidence_threshold(static_cast<int>(argmax),
                                            seen_classes, sched, hp);
    if (pmax >= thr) sum += p;
  }

  const double total = sum.sum();
  ClassDistribution dist = ClassDistribution::uniform(k);
  if (total > 0.0) dist.pi_hat = sum / total;
  return dist;
}

Eigen::VectorXd adaptive_margins(const ClassDistribution& dist,
                                 double margin_scale) {
  const double kl = kl_divergence(dist.pi_hat, dist.pi_prior);
  const double pmax = dist.pi_hat.maxCoeff();
  return dist.pi_hat * (-kl * margin_scale / pmax);
}

LossResult adaptive_margin_loss(const Eigen::VectorXd& logits, int target,
                                const Eigen::VectorXd& margins) {
  if (target < 0 || target >= logits.size()) {
    throw std::invalid_argument("adaptive_margin_loss: target out of range");
  }
  if (margins.size() != logits.size()) {
    throw std::invalid_argument("adaptive_margin_loss: margin length mismatch");
  }
  Eigen::VectorXd adjusted = logits;
  adjusted(target) -= margins(target);

  LossResult out;
  out.value = log_sum_exp(adjusted) - adjusted(target);
  out.grad_logits = softmax(adjusted);
  out.grad_logits(target) -= 1.0;
  return out;
}

void partition_confidence(MultiViewBatch& batch,
                          const Eigen::MatrixXd& weak_logits,
                          const std::vector<int>& seen_classes,
                          const TrainSchedule& sched, const Hyperparams& hp) {
  const Eigen::Index b = batch.size();
  if (weak_logits.rows() != b) {
    throw std::invalid_argument("partition_confidence: logit rows != batch size");
  }
  batch.confident.assign(static_cast<size_t>(b), 0);
  batch.pseudo_labels = Eigen::VectorXi::Constant(b, kNoLabel);
  for (Eigen::Index i = 0; i < b; ++i) {
    if (batch.is_labeled[static_cast<size_t>(i)]) continue;
    const Eigen::VectorXd p = softmax(weak_logits.row(i).transpose());
    Eigen::Index argmax = 0;
    const double pmax = p.maxCoeff(&argmax);
    batch.pseudo_labels(i) = static_cast<int>(argmax);
    const double thr = confidence_threshold(static_cast<int>(argmax),
                                            seen_classes, sched, hp);
    if (pmax >= thr) batch.confident[static_cast<size_t>(i)] = 1;
  }
  batch.partitioned = true;
}

BatchLoss am_batch_loss(const MultiViewBatch& batch,
                        const Eigen::MatrixXd& weak_logits,
                        const Eigen::MatrixXd& strong_logits,
                        const Eigen::VectorXd& margins) {
  require_partitioned(batch, "am_batch_loss");
  const Eigen::Index b = batch.size();
  const Eigen::Index k = weak_logits.cols();

  BatchLoss out;
  out.grad_weak = Eigen::MatrixXd::Zero(b, k);
  out.grad_strong = Eigen::MatrixXd::Zero(b, k);

  const long n_labeled = batch.labeled_in_batch();
  const long n_unlabeled = batch.unlabeled_in_batch();

  for (Eigen::Index i = 0; i < b; ++i) {
    if (batch.is_labeled[static_cast<size_t>(i)]) {
      const LossResult r = adaptive_margin_loss(weak_logits.row(i).transpose(),
                                                batch.labels(i), margins);
      out.value += r.value / n_labeled;
      out.grad_weak.row(i) += r.grad_logits.transpose() / n_labeled;
    } else if (batch.confident[static_cast<size_t>(i)]) {
      const LossResult r = adaptive_margin_loss(
          strong_logits.row(i).transpose(), batch.pseudo_labels(i), margins);
      out.value += r.value / n_unlabeled;
      out.grad_strong.row(i) += r.grad_logits.transpose() / n_unlabeled;
    }
  }
  return out;
}

ViewsLoss supcon_views_loss(const Eigen::MatrixXd& view_logits,
                            const std::vector<int>& view_labels,
                            const Hyperparams& hp) {
  const Eigen::Index v = view_logits.rows();
  ViewsLoss out;
  out.grad_logits = Eigen::MatrixXd::Zero(v, view_logits.cols());
  if (v < 2) return out;
  if (static_cast<Eigen::Index>(view_labels.size()) != v) {
    throw std::invalid_argument("supcon_views_loss: label count mismatch");
  }

  const SimilarityViews sim(view_logits, hp.normalize_similarity);
  const Eigen::MatrixXd scores = sim.phi * sim.phi.transpose() / hp.temperature;

  Eigen::MatrixXd grad_phi = Eigen::MatrixXd::Zero(v, view_logits.cols());
  double sum = 0.0;
  long anchors = 0;

  std::vector<double> weight(static_cast<size_t>(v));
  for (Eigen::Index i = 0; i < v; ++i) {
    long positives = 0;
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j != i && view_labels[static_cast<size_t>(j)] ==
                        view_labels[static_cast<size_t>(i)]) {
        ++positives;
      }
    }
    if (positives == 0) continue;  // no positive pair, anchor skipped
    ++anchors;

    double m_all = -std::numeric_limits<double>::infinity();
    double m_pos = m_all;
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j == i) continue;
      m_all = std::max(m_all, scores(i, j));
      if (view_labels[static_cast<size_t>(j)] ==
          view_labels[static_cast<size_t>(i)]) {
        m_pos = std::max(m_pos, scores(i, j));
      }
    }
    double denom = 0.0, numer = 0.0;
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j == i) continue;
      denom += std::exp(scores(i, j) - m_all);
      if (view_labels[static_cast<size_t>(j)] ==
          view_labels[static_cast<size_t>(i)]) {
        numer += std::exp(scores(i, j) - m_pos);
      }
    }
    // -log[(1/|P|) sum_P exp / sum_A exp], both sums in log space
    const double lse_pos = m_pos + std::log(numer);
    const double lse_all = m_all + std::log(denom);
    sum += -lse_pos + std::log(static_cast<double>(positives)) + lse_all;

    for (Eigen::Index j = 0; j < v; ++j) {
      if (j == i) continue;
      double c = std::exp(scores(i, j) - m_all) / denom;
      if (view_labels[static_cast<size_t>(j)] ==
          view_labels[static_cast<size_t>(i)]) {
        c -= std::exp(scores(i, j) - m_pos) / numer;
      }
      weight[static_cast<size_t>(j)] = c / hp.temperature;
    }
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j == i) continue;
      const double c = weight[static_cast<size_t>(j)];
      grad_phi.row(i) += c * sim.phi.row(j);
      grad_phi.row(j) += c * sim.phi.row(i);
    }
  }

  if (anchors == 0) return out;
  out.value = sum / anchors;
  out.grad_logits = sim.backprop(grad_phi / anchors);
  return out;
}

ViewsLoss pair_views_loss(const Eigen::MatrixXd& view_logits,
                          const std::vector<int>& anchor_rows,
                          const std::vector<int>& positive_rows,
                          const Hyperparams& hp) {
  const Eigen::Index v = view_logits.rows();
  ViewsLoss out;
  out.grad_logits = Eigen::MatrixXd::Zero(v, view_logits.cols());
  if (anchor_rows.empty()) return out;
  if (anchor_rows.size() != positive_rows.size()) {
    throw std::invalid_argument("pair_views_loss: anchor/positive mismatch");
  }

  const SimilarityViews sim(view_logits, hp.normalize_similarity);
  const Eigen::MatrixXd scores = sim.phi * sim.phi.transpose() / hp.temperature;

  Eigen::MatrixXd grad_phi = Eigen::MatrixXd::Zero(v, view_logits.cols());
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(anchor_rows.size());

  for (size_t a = 0; a < anchor_rows.size(); ++a) {
    const Eigen::Index i = anchor_rows[a];
    const Eigen::Index p = positive_rows[a];
    if (i < 0 || i >= v || p < 0 || p >= v || p == i) {
      throw std::invalid_argument("pair_views_loss: bad anchor/positive row");
    }
    double m_all = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j != i) m_all = std::max(m_all, scores(i, j));
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j != i) denom += std::exp(scores(i, j) - m_all);
    }
    const double lse_all = m_all + std::log(denom);
    sum += lse_all - scores(i, p);

    for (Eigen::Index j = 0; j < v; ++j) {
      if (j == i) continue;
      double c = std::exp(scores(i, j) - m_all) / denom;
      if (j == p) c -= 1.0;
      c *= inv_n / hp.temperature;
      grad_phi.row(i) += c * sim.phi.row(j);
      grad_phi.row(j) += c * sim.phi.row(i);
    }
  }

  out.value = sum * inv_n;
  out.grad_logits = sim.backprop(grad_phi);
  return out;
}

namespace {

// View stacking convention shared by pc/uc/entropy: the selected samples
// contribute two consecutive rows each, weak first.
Eigen::MatrixXd stack_views(const MultiViewBatch& batch,
                            const Eigen::MatrixXd& weak_logits,
                            const Eigen::MatrixXd& strong_logits,
                            const std::vector<int>& samples) {
  Eigen::MatrixXd views(2 * samples.size(), weak_logits.cols());
  for (size_t t = 0; t < samples.size(); ++t) {
    views.row(2 * t) = weak_logits.row(samples[t]);
    views.row(2 * t + 1) = strong_logits.row(samples[t]);
  }
  return views;
}

void scatter_view_grads(const Eigen::MatrixXd& grad_views,
                        const std::vector<int>& samples, BatchLoss& out) {
  for (size_t t = 0; t < samples.size(); ++t) {
    out.grad_weak.row(samples[t]) += grad_views.row(2 * t);
    out.grad_strong.row(samples[t]) += grad_views.row(2 * t + 1);
  }
}

}  // namespace

BatchLoss pc_loss(const MultiViewBatch& batch,
                  const Eigen::MatrixXd& weak_logits,
                  const Eigen::MatrixXd& strong_logits, const Hyperparams& hp) {
  require_partitioned(batch, "pc_loss");
  BatchLoss out;
  out.grad_weak = Eigen::MatrixXd::Zero(batch.size(), weak_logits.cols());
  out.grad_strong = Eigen::MatrixXd::Zero(batch.size(), strong_logits.cols());

  std::vector<int> samples;
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const bool labeled = batch.is_labeled[static_cast<size_t>(i)];
    if (!labeled && !batch.confident[static_cast<size_t>(i)]) continue;
    samples.push_back(static_cast<int>(i));
    const int y = labeled ? batch.labels(i) : batch.pseudo_labels(i);
    labels.push_back(y);
    labels.push_back(y);
  }
  if (samples.empty()) return out;

  const Eigen::MatrixXd views =
      stack_views(batch, weak_logits, strong_logits, samples);
  const ViewsLoss core = supcon_views_loss(views, labels, hp);
  out.value = core.value;
  scatter_view_grads(core.grad_logits, samples, out);
  return out;
}

BatchLoss uc_loss(const MultiViewBatch& batch,
                  const Eigen::MatrixXd& weak_logits,
                  const Eigen::MatrixXd& strong_logits, const Hyperparams& hp) {
  require_partitioned(batch, "uc_loss");
  BatchLoss out;
  out.grad_weak = Eigen::MatrixXd::Zero(batch.size(), weak_logits.cols());
  out.grad_strong = Eigen::MatrixXd::Zero(batch.size(), strong_logits.cols());

  // Candidates are every view in B_u' plus B_l', i.e. the whole batch.
  std::vector<int> samples(static_cast<size_t>(batch.size()));
  for (size_t i = 0; i < samples.size(); ++i) samples[i] = static_cast<int>(i);

  std::vector<int> anchors;
  std::vector<int> positives;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const bool low_conf = !batch.is_labeled[static_cast<size_t>(i)] &&
                          !batch.confident[static_cast<size_t>(i)];
    if (!low_conf) continue;
    anchors.push_back(static_cast<int>(2 * i));
    positives.push_back(static_cast<int>(2 * i + 1));
    anchors.push_back(static_cast<int>(2 * i + 1));
    positives.push_back(static_cast<int>(2 * i));
  }
  if (anchors.empty()) return out;

  const Eigen::MatrixXd views =
      stack_views(batch, weak_logits, strong_logits, samples);
  const ViewsLoss core = pair_views_loss(views, anchors, positives, hp);
  out.value = core.value;
  scatter_view_grads(core.grad_logits, samples, out);
  return out;
}

ViewsLoss entropy_regularizer(const Eigen::MatrixXd& view_logits) {
  const Eigen::Index v = view_logits.rows();
  const Eigen::Index k = view_logits.cols();
  ViewsLoss out;
  out.grad_logits = Eigen::MatrixXd::Zero(v, k);
  if (v == 0) return out;

  Eigen::MatrixXd probs(v, k);
  for (Eigen::Index r = 0; r < v; ++r) {
    probs.row(r) = softmax(view_logits.row(r).transpose()).transpose();
  }
  const Eigen::VectorXd mean = probs.colwise().mean();
  const Eigen::VectorXd prior = Eigen::VectorXd::Constant(k, 1.0 / k);
  out.value = kl_divergence(mean, prior);

  // dKL/dmean_j = log(K * mean_j) + 1, then through each row's softmax.
  const Eigen::VectorXd g =
      (mean.array() * static_cast<double>(k)).log().matrix() +
      Eigen::VectorXd::Ones(k);
  for (Eigen::Index r = 0; r < v; ++r) {
    const Eigen::VectorXd p = probs.row(r).transpose();
    const double inner = g.dot(p);
    out.grad_logits.row(r) =
        (p.array() * (g.array() - inner)).transpose() / static_cast<double>(v);
  }
  return out;
}

BatchLoss total_loss(const MultiViewBatch& batch,
                     const Eigen::MatrixXd& weak_logits,
                     const Eigen::MatrixXd& strong_logits,
                     const ClassDistribution& dist, const TrainSchedule& sched,
                     const Hyperparams& hp, const AblationFlags& flags,
                     LossTerms* terms) {
  (void)sched;
  require_partitioned(batch, "total_loss");
  const Eigen::Index k = weak_logits.cols();
  if (terms) *terms = LossTerms{};

  const Eigen::VectorXd margins = flags.no_am
                                      ? Eigen::VectorXd::Zero(k)
                                      : adaptive_margins(dist, hp.margin_scale);
  BatchLoss out = am_batch_loss(batch, weak_logits, strong_logits, margins);
  if (terms) terms->am = out.value;

  if (!flags.no_pc) {
    const BatchLoss pc = pc_loss(batch, weak_logits, strong_logits, hp);
    if (terms) terms->pc = pc.value;
    out.value += hp.eta1 * pc.value;
    out.grad_weak += hp.eta1 * pc.grad_weak;
    out.grad_strong += hp.eta1 * pc.grad_strong;
  }
  if (!flags.no_uc) {
    const BatchLoss uc = uc_loss(batch, weak_logits, strong_logits, hp);
    if (terms) terms->uc = uc.value;
    out.value += hp.eta2 * uc.value;
    out.grad_weak += hp.eta2 * uc.grad_weak;
    out.grad_strong += hp.eta2 * uc.grad_strong;
  }
  if (!flags.no_entropy) {
    std::vector<int> unlabeled;
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      if (!batch.is_labeled[static_cast<size_t>(i)]) {
        unlabeled.push_back(static_cast<int>(i));
      }
    }
    const Eigen::MatrixXd views =
        stack_views(batch, weak_logits, strong_logits, unlabeled);
    const ViewsLoss ent = entropy_regularizer(views);
    if (terms) terms->entropy = ent.value;
    out.value += ent.value;
    for (size_t t = 0; t < unlabeled.size(); ++t) {
      out.grad_weak.row(unlabeled[t]) += ent.grad_logits.row(2 * t);
      out.grad_strong.row(unlabeled[t]) += ent.grad_logits.row(2 * t + 1);
    }
  }
  return out;
}

}  // namespace lps
