#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "coopmarl/errors.hpp"
#include "coopmarl/neural.hpp"
#include "oracles.hpp"

using namespace coopmarl;
using namespace coopmarl::nn;

namespace {

MlpParams single_weight_net(std::vector<int> sizes, double w) {
  MlpParams p = mlp_init(sizes, 0);
  for (auto& m : p.weights) m.setConstant(w);
  for (auto& b : p.biases) b.setZero();
  return p;
}

}  // namespace

TEST(mlp_init, deterministic_zero_bias_glorot_bounded) {
  const auto a = mlp_init({4, 64, 1}, 7);
  const auto b = mlp_init({4, 64, 1}, 7);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == mlp_init({4, 64, 1}, 8));
  for (const auto& bias : a.biases) EXPECT_EQ(bias.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(a.weights[0].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 68.0));
  EXPECT_LE(a.weights[1].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 65.0));
  EXPECT_EQ(a.num_parameters(), 4u * 64 + 64 + 64 + 1);
}

TEST(mlp_forward, zero_net_outputs_zero) {
  const auto p = single_weight_net({3, 5, 2}, 0.0);
  Vector x(3);
  x << 1.0, -2.0, 3.0;
  EXPECT_EQ(mlp_forward(p, x).output, Vector::Zero(2));
}

TEST(mlp_forward, relu_identity_chain) {
  const auto p = single_weight_net({1, 1, 1}, 1.0);
  EXPECT_EQ(mlp_forward(p, Vector(Vector::Constant(1, 2.0))).output(0), 2.0);
  EXPECT_EQ(mlp_forward(p, Vector(Vector::Constant(1, -2.0))).output(0), 0.0);
}

TEST(mlp_forward, repeated_calls_agree_and_batch_matches_columns) {
  const auto p = mlp_init({5, 8, 8, 3}, 1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Matrix x(5, 7);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = n(rng);
  const Matrix a = mlp_forward(p, x);
  EXPECT_EQ(a, mlp_forward(p, x));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Vector col = x.col(j);
    EXPECT_TRUE(mlp_forward(p, col).output.isApprox(a.col(j), 1e-14));
  }
}

TEST(mlp_forward, shape_mismatch_is_rejected) {
  const auto p = mlp_init({3, 4, 2}, 0);
  EXPECT_THROW(mlp_forward(p, Vector(Vector::Zero(4))), ContractViolation);
}

TEST(mlp_backward, linear_layer) {
  MlpParams p = mlp_init({3, 2}, 0);
  p.weights[0] << 1.0, 2.0, 3.0, -1.0, 0.5, 4.0;
  p.biases[0] << 0.1, -0.2;
  Vector x(3);
  x << 0.3, -0.7, 2.0;
  const auto fwd = mlp_forward(p, x);
  Matrix g(2, 1);
  g << 1.0, 0.0;
  const auto grads = mlp_backward(p, fwd.cache, g);
  EXPECT_EQ(Vector(grads.params.weights[0].row(0).transpose()), x);
  EXPECT_EQ(grads.params.weights[0].row(1).squaredNorm(), 0.0);
  EXPECT_EQ(grads.params.biases[0](0), 1.0);
  EXPECT_EQ(Vector(grads.input.col(0)), Vector(p.weights[0].row(0).transpose()));
}

TEST(mlp_backward, zero_upstream_gives_zero_gradients) {
  const auto p = mlp_init({4, 6, 3}, 2);
  const auto fwd = mlp_forward(p, Vector(Vector::Ones(4)));
  const auto grads = mlp_backward(p, fwd.cache, Matrix::Zero(3, 1));
  EXPECT_EQ(grads.params.squared_norm(), 0.0);
  EXPECT_EQ(grads.input.squaredNorm(), 0.0);
}

TEST(mlp_backward, mismatched_cache_is_rejected) {
  const auto p = mlp_init({4, 6, 3}, 2);
  const auto q = mlp_init({4, 5, 3}, 2);
  const auto fwd = mlp_forward(q, Vector(Vector::Ones(4)));
  EXPECT_THROW(mlp_backward(p, fwd.cache, Matrix::Ones(3, 1)), ContractViolation);
}

// Gradients of sum(output .* u) checked against central differences on
// 20 random nets with layer sizes <= 8.
TEST(mlp_backward, matches_central_differences) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> width(1, 8);
  std::uniform_int_distribution<int> batch(1, 4);
  std::normal_distribution<double> normal;
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<int> sizes{width(rng), width(rng), width(rng), width(rng)};
    auto p = mlp_init(sizes, rng());
    oracle::randomize_biases(p, rng);
    const int S = batch(rng);
    Matrix x(sizes.front(), S);
    Matrix u(sizes.back(), S);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
    for (Eigen::Index k = 0; k < u.size(); ++k) u.data()[k] = normal(rng);
    auto objective = [&](const MlpParams& q) { return mlp_forward(q, x).cwiseProduct(u).sum(); };

    ForwardCache cache;
    mlp_forward(p, x, &cache);
    const auto analytic = mlp_backward(p, cache, u);
    const auto numeric = oracle::central_differences(p, objective);
    EXPECT_LE(oracle::max_relative_error(oracle::flatten(analytic.params), numeric), 1e-4) << "instance " << instance;

    // Input gradient, one coordinate at a time.
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      Matrix up = x, down = x;
      up.data()[k] += 1e-5;
      down.data()[k] -= 1e-5;
      const double fd = (mlp_forward(p, up).cwiseProduct(u).sum() - mlp_forward(p, down).cwiseProduct(u).sum()) / 2e-5;
      const double a = analytic.input.data()[k];
      EXPECT_LE(std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}), 1e-4);
    }
  }
}

TEST(adam_step, zero_gradient_keeps_params_and_decays_moments) {
  auto p = mlp_init({3, 4, 2}, 3);
  const auto before = p;
  auto state = AdamState::for_params(p);
  for (auto& m : state.first_moment.weights) m.setConstant(1.0);
  for (auto& v : state.second_moment.weights) v.setConstant(1.0);
  // The update direction with zero gradient is m_hat / sqrt(v_hat), which
  // is nonzero here; check lr = 0 leaves parameters put, and moments decay.
  adam_step(p, ParamGradients::zeros_like(p), state, 0.0);
  EXPECT_TRUE(p == before);
  EXPECT_EQ(state.first_moment.weights[0](0, 0), 0.9);
  EXPECT_EQ(state.second_moment.weights[0](0, 0), 0.999);
  EXPECT_EQ(state.timestep, 1);

  auto fresh = AdamState::for_params(p);
  adam_step(p, ParamGradients::zeros_like(p), fresh, 0.1);
  EXPECT_TRUE(p == before);
}

TEST(adam_step, first_step_is_lr_times_sign) {
  auto p = mlp_init({2, 3}, 4);
  const auto before = p;
  auto state = AdamState::for_params(p);
  auto g = ParamGradients::zeros_like(p);
  g.weights[0] << 0.5, -2.0, 1e-3, -7.0, 0.0, 3.0;
  g.biases[0] << 1.0, -1.0, 0.25;
  const double lr = 0.01;
  adam_step(p, g, state, lr);
  for (Eigen::Index k = 0; k < g.weights[0].size(); ++k) {
    const double gk = g.weights[0].data()[k];
    const double expected = -lr * gk / (std::abs(gk) + AdamState::kEpsilon);
    EXPECT_NEAR(p.weights[0].data()[k] - before.weights[0].data()[k], expected, 1e-15);
  }
  for (Eigen::Index k = 0; k < 3; ++k) {
    const double gk = g.biases[0](k);
    EXPECT_NEAR(p.biases[0](k), -lr * gk / (std::abs(gk) + AdamState::kEpsilon), 1e-15);
  }
}

TEST(soft_update, endpoints_and_scalar_case) {
  const auto online = mlp_init({3, 4, 2}, 5);
  auto target = mlp_init({3, 4, 2}, 6);
  const auto target0 = target;
  soft_update(target, online, 0.0);
  EXPECT_TRUE(target == target0);
  soft_update(target, online, 1.0);
  EXPECT_TRUE(target == online);

  auto zero = single_weight_net({1, 1}, 0.0);
  auto one = single_weight_net({1, 1}, 1.0);
  soft_update(zero, one, 0.01);
  EXPECT_EQ(zero.weights[0](0, 0), 0.01);
}

TEST(soft_update, geometric_contraction) {
  const auto online = mlp_init({3, 4, 2}, 5);
  auto target = mlp_init({3, 4, 2}, 6);
  const auto gap0 = target.flatten();
  const auto on = online.flatten();
  const double tau = 0.1;
  for (int n = 1; n <= 30; ++n) {
    soft_update(target, online, tau);
    const auto t = target.flatten();
    for (std::size_t k = 0; k < t.size(); ++k)
      EXPECT_NEAR(std::abs(t[k] - on[k]), std::pow(1.0 - tau, n) * std::abs(gap0[k] - on[k]), 1e-13);
  }
}

TEST(soft_update, shape_mismatch_is_rejected) {
  auto a = mlp_init({3, 4, 2}, 0);
  const auto b = mlp_init({3, 5, 2}, 0);
  EXPECT_THROW(soft_update(a, b, 0.5), ContractViolation);
}

TEST(gumbel_softmax, relaxed_is_distribution_and_hard_matches) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  for (int t = 0; t < 1000; ++t) {
    Vector logits(4);
    for (auto& v : logits) v = 3.0 * n(rng);
    const auto s = gumbel_softmax_sample(logits, 0.7, rng);
    EXPECT_NEAR(s.relaxed.sum(), 1.0, 1e-12);
    EXPECT_GT(s.relaxed.minCoeff(), 0.0);
    EXPECT_LT(s.relaxed.maxCoeff(), 1.0);
    EXPECT_EQ(s.hard.sum(), 1.0);
    EXPECT_EQ(s.hard(argmax(s.relaxed)), 1.0);
  }
}

TEST(gumbel_softmax, same_rng_state_same_sample) {
  std::mt19937_64 a(3), b(3);
  Vector logits = Vector::LinSpaced(4, -1.0, 1.0);
  const auto x = gumbel_softmax_sample(logits, 1.0, a);
  const auto y = gumbel_softmax_sample(logits, 1.0, b);
  EXPECT_EQ(x.relaxed, y.relaxed);
  EXPECT_EQ(x.hard, y.hard);
}

TEST(gumbel_softmax, dominant_logit_wins_almost_always) {
  std::mt19937_64 rng(11);
  Vector logits(4);
  logits << 1000.0, 0.0, 0.0, 0.0;
  int hits = 0;
  for (int t = 0; t < 10000; ++t) hits += gumbel_softmax_sample(logits, 1.0, rng).hard(0) == 1.0;
  EXPECT_GE(hits / 10000.0, 0.999);
}

// Gumbel-max identity: argmax(logits + g) is distributed as softmax(logits).
TEST(gumbel_softmax, hard_frequencies_follow_softmax) {
  std::mt19937_64 rng(12);
  Vector logits(4);
  logits << 1.0, 0.0, -0.5, 0.5;
  const Vector p = logits.array().exp() / logits.array().exp().sum();
  std::vector<int> counts(4, 0);
  const int draws = 200000;
  for (int t = 0; t < draws; ++t) counts[argmax(gumbel_softmax_sample(logits, 1.0, rng).hard)] += 1;
  for (int k = 0; k < 4; ++k) {
    const double se = std::sqrt(p(k) * (1 - p(k)) / draws);
    EXPECT_NEAR(counts[k] / static_cast<double>(draws), p(k), 5 * se);
  }
}

TEST(hard_argmax, noise_free_indicator) {
  Vector logits(4);
  logits << 3.0, 1.0, 0.0, -1.0;
  EXPECT_EQ(hard_argmax(logits), (Vector(4) << 1, 0, 0, 0).finished());
  logits << 0.0, 2.0, 2.0, 1.0;
  EXPECT_EQ(argmax(logits), 1);
}

TEST(softmax_backward, matches_central_differences) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n;
  Matrix z(4, 3), noise(4, 3), u(4, 3);
  for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = n(rng), noise.data()[k] = n(rng), u.data()[k] = n(rng);
  const double T = 0.8;
  const Matrix p = relaxed_softmax(z, noise, T);
  const Matrix g = softmax_backward(p, u, T);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Matrix up = z, down = z;
    up.data()[k] += 1e-6;
    down.data()[k] -= 1e-6;
    const double fd = (relaxed_softmax(up, noise, T).cwiseProduct(u).sum() -
                       relaxed_softmax(down, noise, T).cwiseProduct(u).sum()) / 2e-6;
    EXPECT_NEAR(g.data()[k], fd, 1e-8);
  }
}
