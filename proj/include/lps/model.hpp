#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace lps {

/// Architecture descriptor: linear D->K when hidden_dim == 0, otherwise
/// D->H tanh ->K.
struct ModelConfig {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;

  void validate() const;
};

struct ModelParams {
  ModelConfig arch;
  Eigen::MatrixXd w1;  // D x H (or D x K when linear)
  Eigen::VectorXd b1;  // H (or K)
  Eigen::MatrixXd w2;  // H x K (empty when linear)
  Eigen::VectorXd b2;  // K (empty when linear)

  bool linear() const { return arch.hidden_dim == 0; }
};

struct ModelGrads {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

/// Weights ~ N(0, 1/fan_in), biases zero.
ModelParams init_params(const ModelConfig& arch, std::uint64_t seed);

/// Hidden activations cached by forward for the backward pass. Empty for the
/// linear architecture.
struct ForwardCache {
  Eigen::MatrixXd hidden;  // B x H, post-tanh
};

/// Logits for a batch of rows; x is B x D. The cache pointer may be null when
/// no backward pass will follow.
Eigen::MatrixXd forward(const ModelParams& params, const Eigen::MatrixXd& x,
                        ForwardCache* cache = nullptr);

/// Exact gradients of sum(logits .* grad_logits) with respect to parameters.
ModelGrads backward(const ModelParams& params, const Eigen::MatrixXd& x,
                    const ForwardCache& cache,
                    const Eigen::MatrixXd& grad_logits);

/// lr0 * 0.5 * (1 + cos(pi * t / T)).
double cosine_lr(long t, long total, double lr0);

struct OptimState {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  long t = 0;
  long total = 1;
  ModelGrads velocity;  // zero-initialized to parameter shapes

  static OptimState create(const ModelParams& params, double lr0,
                           double momentum, double weight_decay, long total);
};

/// v <- mu*v + g + wd*theta; theta <- theta - lr(t)*v. Advances opt.t.
void sgd_step(ModelParams& params, const ModelGrads& grads, OptimState& opt);

/// Binary checkpoint: magic "LPSCKPT1", three little-endian int64 dims, then
/// the parameter arrays as row-major little-endian doubles.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace lps
