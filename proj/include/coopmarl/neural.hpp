#pragma once

// Dense feed-forward networks with hand-written reverse-mode gradients.
//
// Batched calls take one sample per column: an input of shape (in x S)
// yields an output of shape (out x S). Hidden layers use ReLU, the output
// layer is affine.

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

namespace coopmarl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;  // weights[l] is (layer_sizes[l+1] x layer_sizes[l])
  std::vector<Vector> biases;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_parameters() const;

  // Flat view in layer order: W0 (column-major), b0, W1, b1, ...
  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& flat);

  bool operator==(const MlpParams& other) const;
};

// Per-layer intermediates from a forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;          // inputs[l] feeds layer l
  std::vector<Matrix> pre_activations; // W x + b for every layer
};

// Same layout as MlpParams; also used for Adam moments.
struct ParamGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static ParamGradients zeros_like(const MlpParams& params);
  double squared_norm() const;
};

struct GradientBundle {
  ParamGradients params;
  Matrix input;  // d(output . grad_output)/d(input), one column per sample
};

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  ParamGradients first_moment;
  ParamGradients second_moment;
  std::int64_t timestep = 0;

  static AdamState for_params(const MlpParams& params);
};

// Glorot-uniform weights, zero biases. Throws ContractViolation on fewer than
// two layers or a non-positive size.
MlpParams mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed);

Matrix mlp_forward(const MlpParams& params, const Matrix& input, ForwardCache* cache = nullptr);

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};
ForwardResult mlp_forward(const MlpParams& params, const Vector& input);

// Gradients of sum_over_samples(output . grad_output). Parameter gradients are
// summed across the batch. The input gradient is skipped when
// want_input_grad is false.
GradientBundle mlp_backward(const MlpParams& params, const ForwardCache& cache,
                            const Matrix& grad_output, bool want_input_grad = true);

void adam_step(MlpParams& params, const ParamGradients& grads, AdamState& state, double lr);

// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(MlpParams& target, const MlpParams& online, double tau);

struct GumbelSample {
  Vector hard;     // one-hot at argmax(relaxed)
  Vector relaxed;  // softmax((logits + gumbel) / temperature)
};

// Standard Gumbel noise, one draw per entry.
Vector sample_gumbel(Eigen::Index size, std::mt19937_64& rng);

GumbelSample gumbel_softmax_sample(const Vector& logits, double temperature, std::mt19937_64& rng);

// Noise-free evaluation mode: one-hot at argmax(logits). Ties go to the lowest index.
Vector hard_argmax(const Vector& logits);

Eigen::Index argmax(const Vector& values);

// Column-wise softmax of (logits + noise) / temperature.
Matrix relaxed_softmax(const Matrix& logits, const Matrix& noise, double temperature);

// Pulls a gradient on softmax((z + noise)/temperature) back onto z, column-wise.
Matrix softmax_backward(const Matrix& probabilities, const Matrix& grad_probabilities,
                        double temperature);

}  // namespace coopmarl::nn
