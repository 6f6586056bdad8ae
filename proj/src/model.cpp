#include "lps/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace lps {

void ModelConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (hidden_dim < 0) throw std::invalid_argument("hidden_dim must be >= 0");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
}

ModelParams init_params(const ModelConfig& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto fill = [&](Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
    }
  };

  ModelParams p;
  p.arch = arch;
  if (arch.hidden_dim == 0) {
    fill(p.w1, arch.input_dim, arch.num_classes);
    p.b1 = Eigen::VectorXd::Zero(arch.num_classes);
  } else {
    fill(p.w1, arch.input_dim, arch.hidden_dim);
    p.b1 = Eigen::VectorXd::Zero(arch.hidden_dim);
    fill(p.w2, arch.hidden_dim, arch.num_classes);
    p.b2 = Eigen::VectorXd::Zero(arch.num_classes);
  }
  return p;
}

Eigen::MatrixXd forward(const ModelParams& params, const Eigen::MatrixXd& x,
                        ForwardCache* cache) {
  if (x.cols() != params.arch.input_dim) {
    throw std::invalid_argument("forward: input dim mismatch");
  }
  if (params.linear()) {
    if (cache) cache->hidden.resize(0, 0);
    return (x * params.w1).rowwise() + params.b1.transpose();
  }
  Eigen::MatrixXd hidden =
      ((x * params.w1).rowwise() + params.b1.transpose()).array().tanh();
  Eigen::MatrixXd logits =
      (hidden * params.w2).rowwise() + params.b2.transpose();
  if (cache) cache->hidden = std::move(hidden);
  return logits;
}

ModelGrads backward(const ModelParams& params, const Eigen::MatrixXd& x,
                    const ForwardCache& cache,
                    const Eigen::MatrixXd& grad_logits) {
  if (x.cols() != params.arch.input_dim || grad_logits.rows() != x.rows() ||
      grad_logits.cols() != params.arch.num_classes) {
    throw std::invalid_argument("backward: shape mismatch");
  }
  ModelGrads g;
  if (params.linear()) {
    g.w1 = x.transpose() * grad_logits;
    g.b1 = grad_logits.colwise().sum().transpose();
    return g;
  }
  if (cache.hidden.rows() != x.rows() ||
      cache.hidden.cols() != params.arch.hidden_dim) {
    throw std::invalid_argument("backward: stale forward cache");
  }
  g.w2 = cache.hidden.transpose() * grad_logits;
  g.b2 = grad_logits.colwise().sum().transpose();
  const Eigen::MatrixXd grad_hidden = grad_logits * params.w2.transpose();
  const Eigen::MatrixXd grad_pre =
      grad_hidden.array() * (1.0 - cache.hidden.array().square());
  g.w1 = x.transpose() * grad_pre;
  g.b1 = grad_pre.colwise().sum().transpose();
  return g;
}

double cosine_lr(long t, long total, double lr0) {
  if (total < 1 || t < 0 || t > total) {
    throw std::invalid_argument("cosine_lr: need 0 <= t <= total, total >= 1");
  }
  if (t == total) return 0.0;  // cos(pi) only approximates -1
  const double phase =
      std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr0 * 0.5 * (1.0 + std::cos(phase));
}

OptimState OptimState::create(const ModelParams& params, double lr0,
                              double momentum, double weight_decay,
                              long total) {
  OptimState opt;
  opt.lr0 = lr0;
  opt.momentum = momentum;
  opt.weight_decay = weight_decay;
  opt.total = total < 1 ? 1 : total;
  opt.velocity.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
  opt.velocity.b1 = Eigen::VectorXd::Zero(params.b1.size());
  opt.velocity.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
  opt.velocity.b2 = Eigen::VectorXd::Zero(params.b2.size());
  return opt;
}

namespace {

template <typename Array>
void step_one(Array& theta, Array& v, const Array& g, double mu, double wd,
              double lr) {
  v = mu * v + g + wd * theta;
  theta -= lr * v;
}

}  // namespace

void sgd_step(ModelParams& params, const ModelGrads& grads, OptimState& opt) {
  const double lr = cosine_lr(opt.t, opt.total, opt.lr0);
  step_one(params.w1, opt.velocity.w1, grads.w1, opt.momentum,
           opt.weight_decay, lr);
  step_one(params.b1, opt.velocity.b1, grads.b1, opt.momentum,
           opt.weight_decay, lr);
  if (!params.linear()) {
    step_one(params.w2, opt.velocity.w2, grads.w2, opt.momentum,
             opt.weight_decay, lr);
    step_one(params.b2, opt.velocity.b2, grads.b2, opt.momentum,
             opt.weight_decay, lr);
  }
  ++opt.t;
}

namespace {

constexpr char kMagic[8] = {'L', 'P', 'S', 'C', 'K', 'P', 'T', '1'};

void write_i64(std::ofstream& out, std::int64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::int64_t read_i64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<std::int64_t>(v);
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double d = m(r, c);
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      unsigned char buf[8];
      for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<unsigned char>(bits >> (8 * i));
      }
      out.write(reinterpret_cast<const char*>(buf), 8);
    }
  }
}

void read_matrix(std::ifstream& in, Eigen::MatrixXd& m, Eigen::Index rows,
                 Eigen::Index cols) {
  m.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      unsigned char buf[8];
      in.read(reinterpret_cast<char*>(buf), 8);
      if (!in) throw std::runtime_error("checkpoint truncated");
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
      }
      double d;
      std::memcpy(&d, &bits, 8);
      m(r, c) = d;
    }
  }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 8);
  write_i64(out, params.arch.input_dim);
  write_i64(out, params.arch.hidden_dim);
  write_i64(out, params.arch.num_classes);
  write_matrix(out, params.w1);
  write_matrix(out, params.b1);
  if (!params.linear()) {
    write_matrix(out, params.w2);
    write_matrix(out, params.b2);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  ModelParams p;
  p.arch.input_dim = static_cast<int>(read_i64(in));
  p.arch.hidden_dim = static_cast<int>(read_i64(in));
  p.arch.num_classes = static_cast<int>(read_i64(in));
  p.arch.validate();

  Eigen::MatrixXd tmp;
  if (p.arch.hidden_dim == 0) {
    read_matrix(in, p.w1, p.arch.input_dim, p.arch.num_classes);
    read_matrix(in, tmp, p.arch.num_classes, 1);
    p.b1 = tmp.col(0);
  } else {
    read_matrix(in, p.w1, p.arch.input_dim, p.arch.hidden_dim);
    read_matrix(in, tmp, p.arch.hidden_dim, 1);
    p.b1 = tmp.col(0);
    read_matrix(in, p.w2, p.arch.hidden_dim, p.arch.num_classes);
    read_matrix(in, tmp, p.arch.num_classes, 1);
    p.b2 = tmp.col(0);
  }
  return p;
}

}  // namespace lps
