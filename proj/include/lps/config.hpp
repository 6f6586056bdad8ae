#pragma once

#include <cstdint>
#include <string>

#include "lps/data.hpp"
#include "lps/model.hpp"
#include "lps/objective.hpp"

namespace lps {

/// Everything a run needs, with explicit seeds. Flat key=value text format;
/// see config_keys() for the full key list.
struct ExperimentConfig {
  std::string data_path;       // empty -> synthetic
  SyntheticConfig synth;
  AugmentParams aug;
  Hyperparams hp;
  int hidden_dim = 0;          // 0 -> linear classifier

  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  long epochs = 200;
  int batch_size = 128;
  double labeled_fraction_in_batch = 0.5;

  std::uint64_t seed_data = 1;
  std::uint64_t seed_init = 2;
  std::uint64_t seed_batch = 3;

  AblationFlags ablate;
  bool eval_free_matching = false;
  std::string out_dir = "runs/exp";

  void validate() const;
};

/// Applies one `key=value` assignment; throws std::invalid_argument naming
/// the key when it is unknown or the value does not parse.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

/// Parses a flat key=value file ('#' comments, blank lines allowed).
/// Errors carry "<path>:<line>:".
ExperimentConfig load_config(const std::string& path);

/// Canonical echo of every key in fixed order; re-parses to an equal config.
std::string config_echo(const ExperimentConfig& cfg);

}  // namespace lps
