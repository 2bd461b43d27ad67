#include "clincon/nn.hpp"

#include <bit>
#include <cmath>

#include "clincon/errors.hpp"

namespace clincon {

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Mlp make_mlp(const std::vector<std::size_t>& sizes, bool relu_last, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  Mlp net;
  net.relu_last = relu_last;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    if (in == 0 || out == 0) throw ConfigError("MLP layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Eigen::MatrixXf(out, in), Eigen::VectorXf(out)};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = static_cast<float>(rng.uniform(-bound, bound));
    }
    for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = static_cast<float>(rng.uniform(-bound, bound));
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache) {
  if (static_cast<std::size_t>(x.cols()) != net.in()) {
    throw DataError("input dimension " + std::to_string(x.cols()) + " does not match network input " +
                    std::to_string(net.in()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd y = h * layer.weight.cast<double>().transpose();
    y.rowwise() += layer.bias.cast<double>().transpose();
    if (l + 1 < net.layers.size() || net.relu_last) y = y.cwiseMax(0.0);
    if (cache) cache->outputs.push_back(y);
    h = std::move(y);
  }
  return h;
}

Eigen::MatrixXd backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& grad_out, MlpGrad& grad) {
  const std::size_t L = net.layers.size();
  if (grad.weight.size() != L) {
    grad.weight.assign(L, {});
    grad.bias.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
      grad.weight[l] = Eigen::MatrixXd::Zero(net.layers[l].weight.rows(), net.layers[l].weight.cols());
      grad.bias[l] = Eigen::VectorXd::Zero(net.layers[l].bias.size());
    }
  }
  Eigen::MatrixXd g = grad_out;
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L || net.relu_last) {
      g = (cache.outputs[l].array() > 0.0).select(g, 0.0);
    }
    grad.weight[l] += g.transpose() * cache.inputs[l];
    grad.bias[l] += g.colwise().sum().transpose();
    g = g * net.layers[l].weight.cast<double>();
  }
  return g;
}

void SgdMomentum::step(Mlp& net, const MlpGrad& grad) {
  const std::size_t L = net.layers.size();
  if (vw_.size() != L) {
    vw_.assign(L, {});
    vb_.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
      vw_[l] = Eigen::MatrixXd::Zero(net.layers[l].weight.rows(), net.layers[l].weight.cols());
      vb_[l] = Eigen::VectorXd::Zero(net.layers[l].bias.size());
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    auto& layer = net.layers[l];
    const Eigen::MatrixXd w = layer.weight.cast<double>();
    vw_[l] = momentum_ * vw_[l] + grad.weight[l] + weight_decay_ * w;
    layer.weight = (w - lr_ * vw_[l]).cast<float>();
    vb_[l] = momentum_ * vb_[l] + grad.bias[l];
    layer.bias = (layer.bias.cast<double>() - lr_ * vb_[l]).cast<float>();
  }
}

namespace {

void put_float(float f, std::vector<unsigned char>& out) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(u >> (8 * b)));
}

float get_float(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int b = 3; b >= 0; --b) u = (u << 8) | p[b];
  return std::bit_cast<float>(u);
}

}  // namespace

void append_parameter_bytes(const Mlp& net, std::vector<unsigned char>& out) {
  for (const auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) put_float(layer.weight(r, c), out);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put_float(layer.bias(r), out);
  }
}

std::size_t read_parameter_bytes(Mlp& net, const unsigned char* data, std::size_t size) {
  const std::size_t needed = 4 * net.parameter_count();
  if (size < needed) throw DataError("parameter blob is truncated");
  const unsigned char* p = data;
  for (auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c, p += 4) layer.weight(r, c) = get_float(p);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r, p += 4) layer.bias(r) = get_float(p);
  }
  return needed;
}

}  // namespace clincon
