#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lps/config.hpp"
#include "lps/data.hpp"
#include "lps/eval.hpp"
#include "lps/model.hpp"

namespace lps {

struct RunOutputs {
  std::vector<MetricsRecord> records;  // index = epoch, starting at 0
  std::string metrics_path;
  std::string summary_path;
  std::string checkpoint_path;
  std::string config_echo_path;

  const MetricsRecord& final_record() const { return records.back(); }
};

/// Full training loop. Per iteration: sample batch -> forward both views ->
/// estimate pi_hat -> margins -> confidence partition -> total loss ->
/// backward -> SGD step. Per epoch: evaluate the test split and append a
/// MetricsRecord. Writes metrics.jsonl, summary.csv, checkpoint.bin and
/// config.echo under cfg.out_dir. Deterministic given the three seeds.
RunOutputs run_experiment(const ExperimentConfig& cfg);

/// Evaluation snapshot of a model on the dataset's test split.
MetricsRecord evaluate_model(const ModelParams& params, const Dataset& ds,
                             bool free_matching);

struct SweepPoint {
  std::vector<double> values;  // aligned with SweepResult::params
  bool ok = false;
  std::string error;
  MetricsRecord final_record;
};

struct SweepResult {
  std::vector<std::string> params;  // config keys varied by the grid
  std::vector<SweepPoint> points;
  std::string csv_path;
};

/// Grid spec: `name=v1,v2,...;name2=...` where name is one of C, tau, eta1,
/// eta2, lambda_novel_ramp (or the corresponding hp.* config key). Runs every
/// grid point with the base config's seeds; failures are recorded and the
/// sweep continues. Writes sweep.csv under base.out_dir.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& grid_spec);

/// CSV rows `id,label,pred,z0..z{K-1}` for every sample in the dataset.
/// Logits are printed with enough digits to round-trip bit-exactly.
void write_embeddings(const ModelParams& params, const Dataset& ds,
                      std::ostream& out);

void dump_embeddings(const std::string& checkpoint_path,
                     const std::string& data_path,
                     const std::string& out_path);

}  // namespace lps
