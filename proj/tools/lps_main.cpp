#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lps/config.hpp"
#include "lps/trainer.hpp"

namespace {

void apply_set_overrides(lps::ExperimentConfig& cfg,
                         const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got: " + s);
    }
    lps::apply_config_entry(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
}

void print_record(const lps::MetricsRecord& rec) {
  std::printf(
      "epoch=%ld seen_acc=%.4f novel_acc=%.4f all_acc=%.4f nmi_novel=%.4f "
      "kl_to_prior=%.6f loss_total=%.6f\n",
      rec.epoch, rec.seen_acc, rec.novel_acc, rec.all_acc, rec.nmi_novel,
      rec.kl_to_prior, rec.loss_total);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning pace synchronization for open-world "
               "semi-supervised learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  long seed = -1;
  bool no_am = false, no_pc = false, no_uc = false, no_entropy = false;

  CLI::App* train = app.add_subcommand("train", "Run one experiment");
  train->add_option("--config", config_path, "Flat key=value config file");
  train->add_option("--seed", seed,
                    "Base seed N: seed.data=N, seed.init=N+1, seed.batch=N+2");
  train->add_option("--out", out_dir, "Output directory (overrides out.dir)");
  train->add_option("--set", sets, "key=value override, repeatable; wins over "
                                   "the config file");
  train->add_flag("--no-am", no_am, "Replace adaptive margins with plain "
                                    "cross-entropy");
  train->add_flag("--no-pc", no_pc, "Drop the pseudo-label contrastive term");
  train->add_flag("--no-uc", no_uc, "Drop the unsupervised contrastive term");
  train->add_flag("--no-entropy", no_entropy, "Drop the entropy regularizer");

  std::string grid_spec;
  CLI::App* sweep = app.add_subcommand("sweep", "Grid of experiments");
  sweep->add_option("--config", config_path, "Flat key=value config file");
  sweep->add_option("--grid", grid_spec,
                    "Grid spec, e.g. C=1,5,10;tau=0.2,0.4")
      ->required();
  sweep->add_option("--out", out_dir, "Output directory (overrides out.dir)");
  sweep->add_option("--set", sets, "key=value override, repeatable");

  std::string checkpoint_path, data_path, dump_out = "embeddings.csv";
  CLI::App* dump = app.add_subcommand("dump", "Dump per-sample logits as CSV");
  dump->add_option("--checkpoint", checkpoint_path, "checkpoint.bin path")
      ->required();
  dump->add_option("--data", data_path, "Dataset CSV path")->required();
  dump->add_option("--out", dump_out, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train || *sweep) {
      lps::ExperimentConfig cfg;
      if (!config_path.empty()) cfg = lps::load_config(config_path);
      apply_set_overrides(cfg, sets);
      if (seed >= 0) {
        cfg.seed_data = static_cast<std::uint64_t>(seed);
        cfg.seed_init = static_cast<std::uint64_t>(seed) + 1;
        cfg.seed_batch = static_cast<std::uint64_t>(seed) + 2;
      }
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      cfg.ablate.no_am |= no_am;
      cfg.ablate.no_pc |= no_pc;
      cfg.ablate.no_uc |= no_uc;
      cfg.ablate.no_entropy |= no_entropy;

      if (*train) {
        const lps::RunOutputs out = lps::run_experiment(cfg);
        print_record(out.final_record());
        std::printf("metrics: %s\n", out.metrics_path.c_str());
        std::printf("checkpoint: %s\n", out.checkpoint_path.c_str());
      } else {
        const lps::SweepResult result = lps::run_sweep(cfg, grid_spec);
        for (size_t i = 0; i < result.points.size(); ++i) {
          const auto& sp = result.points[i];
          std::printf("point %zu:", i);
          for (size_t d = 0; d < result.params.size(); ++d) {
            std::printf(" %s=%g", result.params[d].c_str(), sp.values[d]);
          }
          if (sp.ok) {
            std::printf(" seen=%.4f novel=%.4f all=%.4f\n",
                        sp.final_record.seen_acc, sp.final_record.novel_acc,
                        sp.final_record.all_acc);
          } else {
            std::printf(" FAILED: %s\n", sp.error.c_str());
          }
        }
        std::printf("table: %s\n", result.csv_path.c_str());
      }
    } else if (*dump) {
      lps::dump_embeddings(checkpoint_path, data_path, dump_out);
      std::printf("wrote %s\n", dump_out.c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
