#include "lps/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lps {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

long parse_long(const std::string& v) {
  size_t pos = 0;
  const long d = std::stol(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

std::uint64_t parse_u64(const std::string& v) {
  size_t pos = 0;
  const unsigned long long d = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false");
}

std::string fmt_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

// One table drives parsing and echoing so the two cannot drift apart.
struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
  auto dbl = [](double ExperimentConfig::* f) {
    return KeyHandler{
        [f](ExperimentConfig& c, const std::string& v) { c.*f = parse_double(v); },
        [f](const ExperimentConfig& c) { return fmt_double(c.*f); }};
  };
  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      {"data.path",
       {[](ExperimentConfig& c, const std::string& v) { c.data_path = v; },
        [](const ExperimentConfig& c) { return c.data_path; }}},
      {"synth.num_classes",
       {[](ExperimentConfig& c, const std::string& v) {
          c.synth.num_classes = static_cast<int>(parse_long(v));
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.synth.num_classes);
        }}},
      {"synth.dim",
       {[](ExperimentConfig& c, const std::string& v) {
          c.synth.dim = static_cast<int>(parse_long(v));
        },
        [](const ExperimentConfig& c) { return std::to_string(c.synth.dim); }}},
      {"synth.samples_per_class",
       {[](ExperimentConfig& c, const std::string& v) {
          c.synth.samples_per_class = static_cast<int>(parse_long(v));
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.synth.samples_per_class);
        }}},
      {"synth.seen_fraction",
       {[](ExperimentConfig& c, const std::string& v) {
          c.synth.seen_fraction = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.synth.seen_fraction);
        }}},
      {"synth.labeled_fraction",
       {[](ExperimentConfig& c, const std::string& v) {
          c.synth.labeled_fraction = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.synth.labeled_fraction);
        }}},
      {"synth.cluster_separation",
       {[](ExperimentConfig& c, const std::string& v) {
          c.synth.cluster_separation = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.synth.cluster_separation);
        }}},
      {"aug.sigma_weak",
       {[](ExperimentConfig& c, const std::string& v) {
          c.aug.sigma_weak = parse_double(v);
        },
        [](const ExperimentConfig& c) { return fmt_double(c.aug.sigma_weak); }}},
      {"aug.sigma_strong",
       {[](ExperimentConfig& c, const std::string& v) {
          c.aug.sigma_strong = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.aug.sigma_strong);
        }}},
      {"aug.mask_prob",
       {[](ExperimentConfig& c, const std::string& v) {
          c.aug.mask_prob = parse_double(v);
        },
        [](const ExperimentConfig& c) { return fmt_double(c.aug.mask_prob); }}},
      {"hp.margin_scale",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.margin_scale = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.hp.margin_scale);
        }}},
      {"hp.temperature",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.temperature = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.hp.temperature);
        }}},
      {"hp.eta1",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.eta1 = parse_double(v);
        },
        [](const ExperimentConfig& c) { return fmt_double(c.hp.eta1); }}},
      {"hp.eta2",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.eta2 = parse_double(v);
        },
        [](const ExperimentConfig& c) { return fmt_double(c.hp.eta2); }}},
      {"hp.lambda_seen",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.lambda_seen = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.hp.lambda_seen);
        }}},
      {"hp.lambda_novel_base",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.lambda_novel_base = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.hp.lambda_novel_base);
        }}},
      {"hp.lambda_novel_ramp",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.lambda_novel_ramp = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.hp.lambda_novel_ramp);
        }}},
      {"hp.normalize_similarity",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.normalize_similarity = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return c.hp.normalize_similarity ? "true" : "false";
        }}},
      {"hp.pi_ema_decay",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hp.pi_ema_decay = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.hp.pi_ema_decay);
        }}},
      {"model.hidden_dim",
       {[](ExperimentConfig& c, const std::string& v) {
          c.hidden_dim = static_cast<int>(parse_long(v));
        },
        [](const ExperimentConfig& c) { return std::to_string(c.hidden_dim); }}},
      {"opt.lr0", dbl(&ExperimentConfig::lr0)},
      {"opt.momentum", dbl(&ExperimentConfig::momentum)},
      {"opt.weight_decay", dbl(&ExperimentConfig::weight_decay)},
      {"train.epochs",
       {[](ExperimentConfig& c, const std::string& v) {
          c.epochs = parse_long(v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.epochs); }}},
      {"train.batch_size",
       {[](ExperimentConfig& c, const std::string& v) {
          c.batch_size = static_cast<int>(parse_long(v));
        },
        [](const ExperimentConfig& c) { return std::to_string(c.batch_size); }}},
      {"train.labeled_fraction_in_batch",
       {[](ExperimentConfig& c, const std::string& v) {
          c.labeled_fraction_in_batch = parse_double(v);
        },
        [](const ExperimentConfig& c) {
          return fmt_double(c.labeled_fraction_in_batch);
        }}},
      {"seed.data",
       {[](ExperimentConfig& c, const std::string& v) {
          c.seed_data = parse_u64(v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed_data); }}},
      {"seed.init",
       {[](ExperimentConfig& c, const std::string& v) {
          c.seed_init = parse_u64(v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed_init); }}},
      {"seed.batch",
       {[](ExperimentConfig& c, const std::string& v) {
          c.seed_batch = parse_u64(v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed_batch); }}},
      {"ablate.no_am",
       {[](ExperimentConfig& c, const std::string& v) {
          c.ablate.no_am = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return c.ablate.no_am ? "true" : "false";
        }}},
      {"ablate.no_pc",
       {[](ExperimentConfig& c, const std::string& v) {
          c.ablate.no_pc = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return c.ablate.no_pc ? "true" : "false";
        }}},
      {"ablate.no_uc",
       {[](ExperimentConfig& c, const std::string& v) {
          c.ablate.no_uc = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return c.ablate.no_uc ? "true" : "false";
        }}},
      {"ablate.no_entropy",
       {[](ExperimentConfig& c, const std::string& v) {
          c.ablate.no_entropy = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return c.ablate.no_entropy ? "true" : "false";
        }}},
      {"eval.free_matching",
       {[](ExperimentConfig& c, const std::string& v) {
          c.eval_free_matching = parse_bool(v);
        },
        [](const ExperimentConfig& c) {
          return c.eval_free_matching ? "true" : "false";
        }}},
      {"out.dir",
       {[](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
        [](const ExperimentConfig& c) { return c.out_dir; }}},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  hp.validate();
  if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("train.batch_size must be >= 2");
  if (labeled_fraction_in_batch < 0 || labeled_fraction_in_batch >= 1) {
    throw std::invalid_argument(
        "train.labeled_fraction_in_batch must be in [0,1)");
  }
  if (hidden_dim < 0) throw std::invalid_argument("model.hidden_dim must be >= 0");
  if (!(lr0 > 0)) throw std::invalid_argument("opt.lr0 must be > 0");
  if (momentum < 0 || momentum >= 1) {
    throw std::invalid_argument("opt.momentum must be in [0,1)");
  }
  if (weight_decay < 0) throw std::invalid_argument("opt.weight_decay must be >= 0");
  if (out_dir.empty()) throw std::invalid_argument("out.dir must be non-empty");
  if (data_path.empty()) {
    if (synth.num_classes < 2) {
      throw std::invalid_argument("synth.num_classes must be >= 2");
    }
    if (synth.dim < 1) throw std::invalid_argument("synth.dim must be >= 1");
    if (!(synth.seen_fraction > 0 && synth.seen_fraction < 1)) {
      throw std::invalid_argument("synth.seen_fraction must be in (0,1)");
    }
    if (!(synth.labeled_fraction > 0 && synth.labeled_fraction <= 1)) {
      throw std::invalid_argument("synth.labeled_fraction must be in (0,1]");
    }
    if (!(synth.cluster_separation > 0)) {
      throw std::invalid_argument("synth.cluster_separation must be > 0");
    }
  }
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
  for (const auto& [name, handler] : key_table()) {
    if (name == key) {
      try {
        handler.set(cfg, value);
      } catch (const std::exception& e) {
        throw std::invalid_argument("bad value for " + key + ": " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key: " + key);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  ExperimentConfig cfg;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    }
    try {
      apply_config_entry(cfg, trim(line.substr(0, eq)),
                         trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return cfg;
}

std::string config_echo(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const auto& [name, handler] : key_table()) {
    out << name << "=" << handler.get(cfg) << "\n";
  }
  return out.str();
}

}  // namespace lps
