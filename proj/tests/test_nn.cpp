#include <doctest.h>

#include "clincon/nn.hpp"
#include "oracles.hpp"

using namespace clincon;

TEST_CASE("mlp shapes and relu placement") {
  Rng rng(1);
  const Mlp net = make_mlp({3, 5, 2}, false, rng);
  CHECK(net.in() == 3);
  CHECK(net.out() == 2);
  CHECK(net.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const Eigen::MatrixXd y = forward(net, x);
  CHECK(y.rows() == 4);
  CHECK(y.cols() == 2);

  Rng rng2(1);
  const Mlp relu = make_mlp({3, 5, 2}, true, rng2);
  CHECK(forward(relu, x).minCoeff() >= 0.0);
}

TEST_CASE("backward matches finite differences") {
  Rng rng(3);
  Mlp net = make_mlp({4, 6, 3}, false, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(5, 3);
  MlpCache cache;
  forward(net, x, &cache);
  MlpGrad grad;
  const Eigen::MatrixXd gx = backward(net, cache, w, grad);
  auto f = [&](const Eigen::MatrixXd& in) { return (forward(net, in).array() * w.array()).sum(); };
  CHECK((gx - oracle::numeric_gradient(f, x, 1e-6)).cwiseAbs().maxCoeff() < 1e-6);

  // first-layer weight gradient, perturbing the float parameters in double
  const Eigen::MatrixXd w0 = net.layers[0].weight.cast<double>();
  auto fw = [&](const Eigen::MatrixXd& weight) {
    Eigen::MatrixXd h = x * weight.transpose();
    h.rowwise() += net.layers[0].bias.cast<double>().transpose();
    h = h.cwiseMax(0.0);
    Eigen::MatrixXd y = h * net.layers[1].weight.cast<double>().transpose();
    y.rowwise() += net.layers[1].bias.cast<double>().transpose();
    return (y.array() * w.array()).sum();
  };
  CHECK((grad.weight[0] - oracle::numeric_gradient(fw, w0, 1e-6)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("momentum sgd matches a scalar reimplementation") {
  // One layer 1 -> 1: weight w and bias b. Loss gradient is supplied directly.
  Mlp net;
  net.layers.push_back({Eigen::MatrixXf::Constant(1, 1, 0.5f), Eigen::VectorXf::Constant(1, -0.25f)});
  SgdMomentum opt(0.1, 0.9, 0.01);
  double w = 0.5, b = -0.25, vw = 0, vb = 0;
  const double gw[] = {1.0, -0.5, 0.25, 2.0};
  const double gb[] = {0.3, 0.1, -0.2, 0.0};
  for (int step = 0; step < 4; ++step) {
    MlpGrad g;
    g.weight = {Eigen::MatrixXd::Constant(1, 1, gw[step])};
    g.bias = {Eigen::VectorXd::Constant(1, gb[step])};
    opt.step(net, g);
    vw = 0.9 * vw + gw[step] + 0.01 * w;
    w -= 0.1 * vw;
    vb = 0.9 * vb + gb[step];
    b -= 0.1 * vb;
    CHECK(net.layers[0].weight(0, 0) == doctest::Approx(w).epsilon(1e-6));
    CHECK(net.layers[0].bias(0) == doctest::Approx(b).epsilon(1e-6));
  }
}

TEST_CASE("parameter bytes round trip") {
  Rng rng(5);
  const Mlp net = make_mlp({3, 4, 2}, true, rng);
  std::vector<unsigned char> bytes;
  append_parameter_bytes(net, bytes);
  CHECK(bytes.size() == net.parameter_count() * 4);
  Rng other(6);
  Mlp back = make_mlp({3, 4, 2}, true, other);
  CHECK(!(back == net));
  CHECK(read_parameter_bytes(back, bytes.data(), bytes.size()) == bytes.size());
  CHECK(back == net);
}
