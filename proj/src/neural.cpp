#include "coopmarl/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coopmarl/errors.hpp"

namespace coopmarl::nn {

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_parameters());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].data(), weights[l].data() + weights[l].size());
    flat.insert(flat.end(), biases[l].data(), biases[l].data() + biases[l].size());
  }
  return flat;
}

void MlpParams::assign_flat(const std::vector<double>& flat) {
  require(flat.size() == num_parameters(), "assign_flat: parameter count mismatch");
  auto it = flat.begin();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::copy_n(it, weights[l].size(), weights[l].data());
    it += weights[l].size();
    std::copy_n(it, biases[l].size(), biases[l].data());
    it += biases[l].size();
  }
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layer_sizes != other.layer_sizes) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

ParamGradients ParamGradients::zeros_like(const MlpParams& params) {
  ParamGradients g;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(params.weights[l].rows(), params.weights[l].cols()));
    g.biases.push_back(Vector::Zero(params.biases[l].size()));
  }
  return g;
}

double ParamGradients::squared_norm() const {
  double total = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    total += weights[l].squaredNorm() + biases[l].squaredNorm();
  return total;
}

AdamState AdamState::for_params(const MlpParams& params) {
  return {ParamGradients::zeros_like(params), ParamGradients::zeros_like(params), 0};
}

MlpParams mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  require(layer_sizes.size() >= 2, "mlp_init: need at least input and output layers");
  for (int s : layer_sizes) require(s >= 1, "mlp_init: layer sizes must be >= 1");

  std::mt19937_64 rng(seed);
  MlpParams params;
  params.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
    params.weights.push_back(std::move(w));
    params.biases.push_back(Vector::Zero(fan_out));
  }
  return params;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& input, ForwardCache* cache) {
  require(input.rows() == params.input_size(),
          "mlp_forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
              std::to_string(params.input_size()));
  if (cache) {
    cache->inputs.clear();
    cache->pre_activations.clear();
  }
  Matrix activation = input;
  const std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    Matrix z = params.weights[l] * activation;
    z.colwise() += params.biases[l];
    if (cache) {
      cache->inputs.push_back(std::move(activation));
      cache->pre_activations.push_back(z);
    }
    activation = l < last ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return activation;
}

ForwardResult mlp_forward(const MlpParams& params, const Vector& input) {
  ForwardResult result;
  Matrix out = mlp_forward(params, Matrix(input), &result.cache);
  result.output = out.col(0);
  return result;
}

GradientBundle mlp_backward(const MlpParams& params, const ForwardCache& cache,
                            const Matrix& grad_output, bool want_input_grad) {
  const std::size_t layers = params.num_layers();
  require(cache.inputs.size() == layers && cache.pre_activations.size() == layers,
          "mlp_backward: cache does not match network depth");
  require(grad_output.rows() == params.output_size() &&
              grad_output.cols() == cache.pre_activations.back().cols(),
          "mlp_backward: grad_output shape does not match cached forward pass");

  GradientBundle out;
  out.params.weights.resize(layers);
  out.params.biases.resize(layers);
  Matrix delta = grad_output;
  for (std::size_t l = layers; l-- > 0;) {
    require(cache.inputs[l].rows() == params.weights[l].cols(),
            "mlp_backward: cache does not match network shape");
    if (l + 1 < layers) {
      delta = delta.cwiseProduct((cache.pre_activations[l].array() > 0.0).cast<double>().matrix());
    }
    out.params.weights[l] = delta * cache.inputs[l].transpose();
    out.params.biases[l] = delta.rowwise().sum();
    if (l > 0 || want_input_grad) delta = params.weights[l].transpose() * delta;
  }
  if (want_input_grad) out.input = std::move(delta);
  return out;
}

void adam_step(MlpParams& params, const ParamGradients& grads, AdamState& state, double lr) {
  require(grads.weights.size() == params.num_layers() &&
              state.first_moment.weights.size() == params.num_layers(),
          "adam_step: shape mismatch");
  state.timestep += 1;
  const double t = static_cast<double>(state.timestep);
  const double correction1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double correction2 = 1.0 - std::pow(AdamState::kBeta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    require(param.rows() == grad.rows() && param.cols() == grad.cols(),
            "adam_step: gradient shape mismatch");
    m = AdamState::kBeta1 * m + (1.0 - AdamState::kBeta1) * grad;
    v = AdamState::kBeta2 * v + (1.0 - AdamState::kBeta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + AdamState::kEpsilon);
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update(params.weights[l], grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
  require(target.layer_sizes == online.layer_sizes, "soft_update: shape mismatch");
  require(tau >= 0.0 && tau <= 1.0, "soft_update: tau must lie in [0, 1]");
  for (std::size_t l = 0; l < target.num_layers(); ++l) {
    target.weights[l] = tau * online.weights[l] + (1.0 - tau) * target.weights[l];
    target.biases[l] = tau * online.biases[l] + (1.0 - tau) * target.biases[l];
  }
}

Vector sample_gumbel(Eigen::Index size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  Vector noise(size);
  for (Eigen::Index k = 0; k < size; ++k) {
    const double u = std::clamp(unit(rng), lo, hi);
    noise[k] = -std::log(-std::log(u));
  }
  return noise;
}

Eigen::Index argmax(const Vector& values) {
  require(values.size() > 0, "argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  return best;
}

Vector hard_argmax(const Vector& logits) {
  Vector hard = Vector::Zero(logits.size());
  hard[argmax(logits)] = 1.0;
  return hard;
}

Matrix relaxed_softmax(const Matrix& logits, const Matrix& noise, double temperature) {
  require(temperature > 0.0, "softmax temperature must be > 0");
  require(logits.rows() == noise.rows() && logits.cols() == noise.cols(),
          "relaxed_softmax: noise shape mismatch");
  Matrix scaled = (logits + noise) / temperature;
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    auto col = scaled.col(c);
    col.array() = (col.array() - col.maxCoeff()).exp();
    col /= col.sum();
  }
  return scaled;
}

Matrix softmax_backward(const Matrix& probabilities, const Matrix& grad_probabilities,
                        double temperature) {
  const Eigen::RowVectorXd inner = probabilities.cwiseProduct(grad_probabilities).colwise().sum();
  Matrix centered = grad_probabilities.rowwise() - inner;
  return probabilities.cwiseProduct(centered) / temperature;
}

GumbelSample gumbel_softmax_sample(const Vector& logits, double temperature, std::mt19937_64& rng) {
  require(temperature > 0.0, "gumbel_softmax_sample: temperature must be > 0");
  require(logits.allFinite(), "gumbel_softmax_sample: logits must be finite");
  const Vector noise = sample_gumbel(logits.size(), rng);
  GumbelSample sample;
  sample.relaxed = relaxed_softmax(logits, noise, temperature).col(0);
  sample.hard = hard_argmax(sample.relaxed);
  return sample;
}

}  // namespace coopmarl::nn
