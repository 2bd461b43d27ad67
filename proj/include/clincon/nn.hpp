#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "clincon/rng.hpp"

namespace clincon {

/// y = x W^T + b. Parameters are float32; arithmetic runs in float64.
struct DenseLayer {
  Eigen::MatrixXf weight;  // out x in
  Eigen::VectorXf bias;    // out

  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

/// Stack of dense layers with ReLU between them (and after the last one
/// when relu_last is set).
struct Mlp {
  std::vector<DenseLayer> layers;
  bool relu_last = false;

  std::size_t in() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t out() const { return layers.empty() ? 0 : layers.back().out(); }
  std::size_t parameter_count() const;
  bool operator==(const Mlp&) const = default;
};

/// sizes = {in, h1, ..., out}. Weights and biases ~ U(-1/sqrt(in), 1/sqrt(in)).
Mlp make_mlp(const std::vector<std::size_t>& sizes, bool relu_last, Rng& rng);

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;   // input to each layer
  std::vector<Eigen::MatrixXd> outputs;  // post-activation output of each layer
};

struct MlpGrad {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

/// Rows of x are samples.
Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache = nullptr);

/// Accumulates parameter gradients into `grad` (resized on first use) and
/// returns the gradient w.r.t. the network input.
Eigen::MatrixXd backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& grad_out, MlpGrad& grad);

/// SGD with momentum and L2 weight decay on weights (not biases):
///   v <- momentum * v + g + weight_decay * theta;  theta <- theta - lr * v
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(Mlp& net, const MlpGrad& grad);

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::vector<Eigen::MatrixXd> vw_;
  std::vector<Eigen::VectorXd> vb_;
};

/// Little-endian float32 bytes of every parameter, layer by layer (weights
/// row-major, then bias).
void append_parameter_bytes(const Mlp& net, std::vector<unsigned char>& out);

/// Reads parameters in the order written by append_parameter_bytes into a
/// network whose shapes are already set. Returns bytes consumed.
std::size_t read_parameter_bytes(Mlp& net, const unsigned char* data, std::size_t size);

}  // namespace clincon
