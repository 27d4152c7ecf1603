#include "selfcheck.hpp"

#include "tla/convnet.hpp"
#include "tla/numerics.hpp"
#include "tla/part_attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace tla::tools {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

CheckLine gradient_check(std::uint64_t seed) {
  NetworkSpec spec;
  spec.input = {1, 6, 6};
  spec.classes = 3;
  spec.layers = {ConvLayer{3, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2}, FcLayer{5}, ReluLayer{}, FcLayer{3}, SoftmaxLayer{}};
  spec.part_layer = 0;
  const Network net = init_network(spec, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Sample> batch;
  for (int i = 0; i < 3; ++i) {
    Matrix d(1, 36);
    for (double& v : d.reshaped()) v = u(rng);
    batch.push_back({Image(6, 6, 1, d), i % 3});
  }
  const auto analytic = loss_and_gradients(net, batch);
  Vector flat_grad(net.parameter_count());
  Eigen::Index at = 0;
  for (const LayerParams& g : analytic.gradients) {
    flat_grad.segment(at, g.weight.size()) = g.weight.reshaped();
    at += g.weight.size();
    flat_grad.segment(at, g.bias.size()) = g.bias;
    at += g.bias.size();
  }
  const Vector x0 = net.flat_parameters();
  Network probe = net;
  const Vector numeric = finite_diff_grad(
      [&](const Vector& x) {
        probe.set_flat_parameters(x);
        return loss(probe, batch);
      },
      x0, 1e-5);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double denom = std::max({std::abs(flat_grad[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(flat_grad[i] - numeric[i]) / denom);
  }
  return {"gradient", worst < 1e-4, fmt("max relative error %.3g", worst)};
}

CheckLine eigen_check(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  double residual = 0.0, recon = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int size = 2 + t % 31;
    Matrix a(size, size);
    for (double& v : a.reshaped()) v = n(rng);
    const Matrix m = (a + a.transpose()) / 2.0;
    const auto eig = sym_eigen(m);
    for (int i = 0; i < size; ++i)
      residual = std::max(residual, (m * eig.vectors.col(i) - eig.values[i] * eig.vectors.col(i)).cwiseAbs().maxCoeff());
    recon = std::max(recon, (eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose() - m).cwiseAbs().maxCoeff());
  }
  return {"eigen", residual < 1e-8 && recon < 1e-7, fmt("residual %.3g reconstruction %.3g", residual, recon)};
}

CheckLine planted_check(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int recovered = 0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    const int blocks = 2 + t % 2;
    const int size = 9 + t % 4;
    std::vector<int> truth(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) truth[static_cast<std::size_t>(i)] = i % blocks;
    Matrix s = Matrix::Identity(size, size);
    std::uniform_real_distribution<double> in(0.8, 1.0), out(0.0, 0.2);
    for (int i = 0; i < size; ++i)
      for (int j = i + 1; j < size; ++j) s(i, j) = s(j, i) = truth[i] == truth[j] ? in(rng) : out(rng);
    const std::vector<int> got = spectral_cluster(s, blocks, seed + static_cast<std::uint64_t>(t));
    bool same = true;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        same = same && ((truth[i] == truth[j]) == (got[static_cast<std::size_t>(i)] == got[static_cast<std::size_t>(j)]));
    recovered += same;
  }
  return {"planted-partition", recovered == trials, fmt("%.0f of %.0f recovered", recovered, trials)};
}

}  // namespace

std::vector<CheckLine> run_selfcheck(std::uint64_t seed) {
  return {gradient_check(seed), eigen_check(seed), planted_check(seed)};
}

}  // namespace tla::tools
