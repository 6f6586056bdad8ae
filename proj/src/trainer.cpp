#include "lps/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lps/numeric.hpp"
#include "lps/objective.hpp"

namespace fs = std::filesystem;

namespace lps {

namespace {

std::string fmt17(double d) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

Eigen::VectorXi argmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::VectorXi out(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out(r) = static_cast<int>(best);
  }
  return out;
}

ModelGrads add_grads(const ModelGrads& a, const ModelGrads& b) {
  ModelGrads out;
  out.w1 = a.w1 + b.w1;
  out.b1 = a.b1 + b.b1;
  if (a.w2.size() > 0) {
    out.w2 = a.w2 + b.w2;
    out.b2 = a.b2 + b.b2;
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string summary_csv(const MetricsRecord& rec) {
  std::ostringstream out;
  out << "epoch,seen_acc,novel_acc,all_acc,nmi_novel,kl_to_prior,"
         "loss_am,loss_pc,loss_uc,loss_entropy,loss_total\n";
  out << rec.epoch << ',' << fmt17(rec.seen_acc) << ',' << fmt17(rec.novel_acc)
      << ',' << fmt17(rec.all_acc) << ',' << fmt17(rec.nmi_novel) << ','
      << fmt17(rec.kl_to_prior) << ',' << fmt17(rec.loss_am) << ','
      << fmt17(rec.loss_pc) << ',' << fmt17(rec.loss_uc) << ','
      << fmt17(rec.loss_entropy) << ',' << fmt17(rec.loss_total) << '\n';
  return out.str();
}

}  // namespace

MetricsRecord evaluate_model(const ModelParams& params, const Dataset& ds,
                             bool free_matching) {
  MetricsRecord rec;
  const std::vector<int> test_rows = ds.indices_of(Split::Test);
  if (test_rows.empty()) return rec;

  const Eigen::MatrixXd logits = forward(params, rows_of(ds.features, test_rows));
  const Eigen::VectorXi preds = argmax_rows(logits);
  Eigen::VectorXi targets(static_cast<Eigen::Index>(test_rows.size()));
  for (size_t i = 0; i < test_rows.size(); ++i) {
    targets(static_cast<Eigen::Index>(i)) = ds.labels(test_rows[i]);
  }

  rec.seen_acc = seen_accuracy(preds, targets, ds.seen_classes);
  rec.all_acc = overall_accuracy(preds, targets, ds.seen_classes,
                                 ds.novel_classes, free_matching);

  std::vector<int> novel_idx;
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    if (!ds.is_seen(targets(i))) novel_idx.push_back(static_cast<int>(i));
  }
  if (!novel_idx.empty()) {
    Eigen::VectorXi np(static_cast<Eigen::Index>(novel_idx.size()));
    Eigen::VectorXi nt(static_cast<Eigen::Index>(novel_idx.size()));
    for (size_t i = 0; i < novel_idx.size(); ++i) {
      np(static_cast<Eigen::Index>(i)) = preds(novel_idx[i]);
      nt(static_cast<Eigen::Index>(i)) = targets(novel_idx[i]);
    }
    rec.novel_acc = novel_accuracy(np, nt, ds.novel_classes);
    rec.nmi_novel = nmi(np, nt);
  }
  return rec;
}

RunOutputs run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  Dataset ds;
  if (cfg.data_path.empty()) {
    SyntheticConfig synth = cfg.synth;
    synth.seed = cfg.seed_data;
    ds = generate_synthetic(synth);
  } else {
    ds = load_dataset(cfg.data_path);
  }

  ModelConfig arch;
  arch.input_dim = static_cast<int>(ds.dim());
  arch.hidden_dim = cfg.hidden_dim;
  arch.num_classes = ds.num_classes;
  ModelParams params = init_params(arch, cfg.seed_init);

  BatchSampler sampler(ds, cfg.batch_size, cfg.labeled_fraction_in_batch,
                       cfg.aug, cfg.seed_batch);
  const long ipe = sampler.batches_per_epoch();
  const long total_iters = cfg.epochs * ipe;
  TrainSchedule sched{0, std::max(1L, total_iters)};
  OptimState opt = OptimState::create(params, cfg.lr0, cfg.momentum,
                                      cfg.weight_decay, std::max(1L, total_iters));

  RunOutputs out;

  // Initial snapshot: evaluate the untouched model, and take the class
  // distribution estimate over the raw training features.
  {
    std::vector<Eigen::VectorXd> probs_labeled, probs_unlabeled;
    const Eigen::MatrixXd all_logits = forward(params, ds.features);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      if (ds.split[static_cast<size_t>(i)] == Split::Labeled) {
        probs_labeled.push_back(softmax(all_logits.row(i).transpose()));
      } else if (ds.split[static_cast<size_t>(i)] == Split::Unlabeled) {
        probs_unlabeled.push_back(softmax(all_logits.row(i).transpose()));
      }
    }
    const ClassDistribution dist0 = estimate_class_distribution(
        probs_labeled, probs_unlabeled, ds.seen_classes, sched, cfg.hp);
    MetricsRecord rec = evaluate_model(params, ds, cfg.eval_free_matching);
    rec.epoch = 0;
    rec.kl_to_prior = kl_divergence(dist0.pi_hat, dist0.pi_prior);
    out.records.push_back(rec);
  }

  std::vector<ClassDistribution> epoch_history;
  Eigen::VectorXd pi_prev =
      Eigen::VectorXd::Constant(ds.num_classes, 1.0 / ds.num_classes);

  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    LossTerms term_sum;
    double total_sum = 0.0;
    Eigen::VectorXd pi_sum = Eigen::VectorXd::Zero(ds.num_classes);

    for (long it = 0; it < ipe; ++it) {
      MultiViewBatch batch = sampler.next();
      ForwardCache cache_w, cache_s;
      const Eigen::MatrixXd weak_logits =
          forward(params, batch.weak_views, &cache_w);
      const Eigen::MatrixXd strong_logits =
          forward(params, batch.strong_views, &cache_s);

      std::vector<Eigen::VectorXd> probs_labeled, probs_unlabeled;
      for (Eigen::Index i = 0; i < batch.size(); ++i) {
        auto p = softmax(weak_logits.row(i).transpose());
        if (batch.is_labeled[static_cast<size_t>(i)]) {
          probs_labeled.push_back(std::move(p));
        } else {
          probs_unlabeled.push_back(std::move(p));
        }
      }
      ClassDistribution dist = estimate_class_distribution(
          probs_labeled, probs_unlabeled, ds.seen_classes, sched, cfg.hp);
      if (cfg.hp.pi_ema_decay > 0.0) {
        dist.pi_hat = cfg.hp.pi_ema_decay * pi_prev +
                      (1.0 - cfg.hp.pi_ema_decay) * dist.pi_hat;
      }
      pi_prev = dist.pi_hat;
      pi_sum += dist.pi_hat;

      partition_confidence(batch, weak_logits, ds.seen_classes, sched, cfg.hp);

      LossTerms terms;
      const BatchLoss loss = total_loss(batch, weak_logits, strong_logits,
                                        dist, sched, cfg.hp, cfg.ablate, &terms);
      const ModelGrads grads =
          add_grads(backward(params, batch.weak_views, cache_w, loss.grad_weak),
                    backward(params, batch.strong_views, cache_s, loss.grad_strong));
      sgd_step(params, grads, opt);
      ++sched.t;

      term_sum.am += terms.am;
      term_sum.pc += terms.pc;
      term_sum.uc += terms.uc;
      term_sum.entropy += terms.entropy;
      total_sum += loss.value;
    }

    ClassDistribution epoch_dist = ClassDistribution::uniform(ds.num_classes);
    epoch_dist.pi_hat = pi_sum / static_cast<double>(ipe);
    epoch_history.push_back(epoch_dist);

    MetricsRecord rec = evaluate_model(params, ds, cfg.eval_free_matching);
    rec.epoch = epoch;
    rec.loss_am = term_sum.am / static_cast<double>(ipe);
    rec.loss_pc = term_sum.pc / static_cast<double>(ipe);
    rec.loss_uc = term_sum.uc / static_cast<double>(ipe);
    rec.loss_entropy = term_sum.entropy / static_cast<double>(ipe);
    rec.loss_total = total_sum / static_cast<double>(ipe);
    out.records.push_back(rec);
  }

  // kl_to_prior for epochs >= 1 comes from the pace trace over the
  // per-epoch mean estimates.
  const std::vector<double> trace = pace_trace(epoch_history);
  for (size_t e = 0; e < trace.size(); ++e) {
    out.records[e + 1].kl_to_prior = trace[e];
  }

  fs::create_directories(cfg.out_dir);
  out.metrics_path = cfg.out_dir + "/metrics.jsonl";
  out.summary_path = cfg.out_dir + "/summary.csv";
  out.checkpoint_path = cfg.out_dir + "/checkpoint.bin";
  out.config_echo_path = cfg.out_dir + "/config.echo";

  std::ostringstream metrics;
  for (const auto& rec : out.records) metrics << to_jsonl(rec) << '\n';
  write_file(out.metrics_path, metrics.str());
  write_file(out.summary_path, summary_csv(out.final_record()));
  write_file(out.config_echo_path, config_echo(cfg));
  save_checkpoint(params, out.checkpoint_path);
  return out;
}

namespace {

const std::map<std::string, std::string>& sweep_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"C", "hp.margin_scale"},
      {"margin_scale", "hp.margin_scale"},
      {"hp.margin_scale", "hp.margin_scale"},
      {"tau", "hp.temperature"},
      {"temperature", "hp.temperature"},
      {"hp.temperature", "hp.temperature"},
      {"eta1", "hp.eta1"},
      {"hp.eta1", "hp.eta1"},
      {"eta2", "hp.eta2"},
      {"hp.eta2", "hp.eta2"},
      {"lambda_novel_ramp", "hp.lambda_novel_ramp"},
      {"hp.lambda_novel_ramp", "hp.lambda_novel_ramp"},
  };
  return aliases;
}

std::vector<std::pair<std::string, std::vector<double>>> parse_grid(
    const std::string& spec) {
  std::vector<std::pair<std::string, std::vector<double>>> grid;
  std::stringstream entries(spec);
  std::string entry;
  while (std::getline(entries, entry, ';')) {
    if (entry.empty()) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("grid entry missing '=': " + entry);
    }
    const std::string name = entry.substr(0, eq);
    const auto alias = sweep_aliases().find(name);
    if (alias == sweep_aliases().end()) {
      throw std::invalid_argument("unknown sweep parameter: " + name);
    }
    std::vector<double> values;
    std::stringstream vals(entry.substr(eq + 1));
    std::string val;
    while (std::getline(vals, val, ',')) {
      size_t pos = 0;
      const double d = std::stod(val, &pos);
      if (pos != val.size()) {
        throw std::invalid_argument("bad grid value: " + val);
      }
      values.push_back(d);
    }
    if (values.empty()) {
      throw std::invalid_argument("grid entry has no values: " + entry);
    }
    grid.emplace_back(alias->second, std::move(values));
  }
  if (grid.empty()) throw std::invalid_argument("empty sweep grid");
  return grid;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& grid_spec) {
  const auto grid = parse_grid(grid_spec);

  SweepResult result;
  for (const auto& [key, _] : grid) result.params.push_back(key);

  long total_points = 1;
  for (const auto& [_, values] : grid) {
    total_points *= static_cast<long>(values.size());
  }

  for (long point = 0; point < total_points; ++point) {
    SweepPoint sp;
    ExperimentConfig cfg = base;
    // Mixed-radix decode; the last grid parameter varies fastest.
    long rem = point;
    sp.values.resize(grid.size());
    for (size_t d = grid.size(); d-- > 0;) {
      const auto& values = grid[d].second;
      sp.values[d] = values[rem % static_cast<long>(values.size())];
      rem /= static_cast<long>(values.size());
    }
    for (size_t d = 0; d < grid.size(); ++d) {
      apply_config_entry(cfg, grid[d].first, fmt17(sp.values[d]));
    }
    cfg.out_dir = base.out_dir + "/point_" + std::to_string(point);
    try {
      sp.final_record = run_experiment(cfg).final_record();
      sp.ok = true;
    } catch (const std::exception& e) {
      sp.ok = false;
      sp.error = e.what();
    }
    result.points.push_back(std::move(sp));
  }

  fs::create_directories(base.out_dir);
  result.csv_path = base.out_dir + "/sweep.csv";
  std::ostringstream csv;
  csv << "point";
  for (const auto& p : result.params) csv << ',' << p;
  csv << ",seen_acc,novel_acc,all_acc,status\n";
  for (size_t i = 0; i < result.points.size(); ++i) {
    const SweepPoint& sp = result.points[i];
    csv << i;
    for (double v : sp.values) csv << ',' << fmt17(v);
    if (sp.ok) {
      csv << ',' << fmt17(sp.final_record.seen_acc) << ','
          << fmt17(sp.final_record.novel_acc) << ','
          << fmt17(sp.final_record.all_acc) << ",ok\n";
    } else {
      csv << ",,,,failed\n";
    }
  }
  write_file(result.csv_path, csv.str());
  return result;
}

void write_embeddings(const ModelParams& params, const Dataset& ds,
                      std::ostream& out) {
  const Eigen::MatrixXd logits = forward(params, ds.features);
  const Eigen::VectorXi preds = argmax_rows(logits);
  out << "id,label,pred";
  for (int k = 0; k < params.arch.num_classes; ++k) out << ",z" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out << ds.ids[static_cast<size_t>(i)] << ',' << ds.labels(i) << ','
        << preds(i);
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      out << ',' << fmt17(logits(i, k));
    }
    out << '\n';
  }
}

void dump_embeddings(const std::string& checkpoint_path,
                     const std::string& data_path,
                     const std::string& out_path) {
  const ModelParams params = load_checkpoint(checkpoint_path);
  const Dataset ds = load_dataset(data_path);
  if (static_cast<int>(ds.dim()) != params.arch.input_dim) {
    throw std::invalid_argument(
        "dump_embeddings: dataset dim does not match checkpoint input dim");
  }
  const fs::path parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
  write_embeddings(params, ds, out);
  if (!out) throw std::runtime_error("write failed: " + out_path);
}

}  // namespace lps
