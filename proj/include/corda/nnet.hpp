// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "corda/adapter.hpp"
#include "corda/covariance.hpp"
#include "corda/matrix.hpp"

namespace corda {

enum class Nonlinearity { identity, relu, tanh };

const char* to_string(Nonlinearity n);
Nonlinearity nonlinearity_from_string(const std::string& s);

struct NetworkSpec {
  std::vector<int> layer_dims;  // at least two entries, all >= 1
  Nonlinearity nonlinearity = Nonlinearity::tanh;
  std::uint64_t seed = 0;       // weight init stream
};

// One linear layer, either a plain dense weight or a decomposed adapter pair.
// The bias is always dense and always trainable; decomposition never touches
// it.
struct Layer {
  bool is_adapter = false;
  Matrix weight;            // valid when !is_adapter
  DecomposedLayer adapter;  // valid when is_adapter
  std::vector<double> bias; // d_out
};

struct ForwardTrace {
  std::vector<Matrix> inputs;   // batch entering each layer (inputs[0] == x)
  std::vector<Matrix> preacts;  // weight * input + bias per layer
  Matrix output;                // final preactivation (no nonlinearity on top)
};

// Fully connected net: nonlinearity between layers, linear output layer.
// Batches are column-major: one sample per column.
class Network {
 public:
  Network() = default;

  // Weights N(0, 1 / fan_in) from the NetworkSpec seed, biases zero.
  static Network random_init(const NetworkSpec& spec);

  int layer_count() const { return static_cast<int>(layers_.size()); }
  const Layer& layer(int i) const { return layers_.at(i); }
  Layer& layer(int i) { return layers_.at(i); }
  std::string layer_id(int i) const;
  int find_layer(const std::string& id) const;  // throws on unknown id

  int input_dim() const { return layer_dims_.front(); }
  int output_dim() const { return layer_dims_.back(); }
  const std::vector<int>& layer_dims() const { return layer_dims_; }
  Nonlinearity nonlinearity() const { return nonlinearity_; }
  std::uint64_t init_seed() const { return init_seed_; }

  bool has_adapters() const;

  // The dense weight of a plain layer; throws if the layer is decomposed.
  const Matrix& plain_weight(int i) const;

  // Replace a plain layer weight (shape-checked), e.g. after truncation.
  void set_plain(int i, Matrix w);

  // Swap a plain layer for a decomposed one; the bias is kept.
  void set_adapter(int i, DecomposedLayer adapter);

  Matrix forward(const Matrix& x) const;
  ForwardTrace forward_trace(const Matrix& x) const;

  // Internal constructor for deserialization.
  static Network from_parts(std::vector<int> dims, Nonlinearity nonlinearity,
                            std::uint64_t seed, std::vector<Layer> layers);

 private:
  std::vector<int> layer_dims_;
  Nonlinearity nonlinearity_ = Nonlinearity::tanh;
  std::uint64_t init_seed_ = 0;
  std::vector<Layer> layers_;
};

// Every adapter layer merged back to a plain dense weight.
Network merge_all(const Network& net);

// ---- tasks ----------------------------------------------------------------

enum class InputKind { gaussian, gaussian_shifted };

const char* to_string(InputKind k);
InputKind input_kind_from_string(const std::string& s);

struct InputDistribution {
  InputKind kind = InputKind::gaussian;
  double mean = 0.0;    // used by gaussian_shifted
  double stddev = 1.0;
};

struct TaskSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::uint64_t teacher_seed = 0;
  InputDistribution input_distribution;
  double noise_std = 0.0;  // additive output noise
};

// Teacher-student regression task: targets come from a fixed random teacher
// net evaluated on freshly sampled inputs.
struct Task {
  TaskSpec spec;
  Network teacher;
};

Task make_task(const TaskSpec& spec);

struct SampleBatch {
  Matrix inputs;   // d_in x n
  Matrix targets;  // d_out x n
};

// Draws n fresh columns. Generation is column-sequential from streams derived
// off `seed`, so the first k columns of an n-column batch equal the k-column
// batch at the same seed.
SampleBatch sample_batch(const Task& task, int n, std::uint64_t seed);

// ---- loss, gradients, training --------------------------------------------

// Mean squared error over every entry of the prediction.
double mse_loss(const Matrix& prediction, const Matrix& target);

struct ParamRef {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

// The parameters an optimizer may touch, in a fixed documented order: layers
// ascending; per layer the dense weight (plain nets) or the b then a factors
// (adapter layers), then the bias. When any layer carries an adapter, every
// plain layer weight and every w_residual is frozen and absent from the list;
// biases stay trainable in both regimes.
std::vector<ParamRef> trainable_parameters(Network& net);

struct Gradients {
  std::vector<std::string> names;            // parallel to trainable_parameters
  std::vector<std::vector<double>> values;
};

// Mean-squared-error gradients for one batch, covering exactly the trainable
// parameter list. Frozen tensors get no entry at all.
Gradients backward(const Network& net, const Matrix& x, const Matrix& target);

enum class OptimizerKind { sgd, adam };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  int steps = 1000;          // 0 is allowed and trains nothing
  int batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;    // data stream
};

struct TrainReport {
  std::vector<double> loss_curve;  // pre-update batch loss per step
};

// Minibatch training on freshly sampled task data. Deterministic for a fixed
// (net, task, config) triple. Throws DivergenceError on non-finite loss.
TrainReport train(Network& net, const Task& task, const TrainConfig& cfg);

// MSE on one fresh batch of n samples.
double evaluate(const Network& net, const Task& task, int n, std::uint64_t seed);

// ---- activation capture ---------------------------------------------------

struct LayerActivationStats {
  CovarianceStat covariance;
  std::vector<double> mean_abs;  // per input channel, mean of |x| over columns
};

// Runs n_samples task inputs through the net and accumulates, per layer, the
// input covariance and mean absolute activation. Capture never perturbs the
// net. Keys are layer ids.
std::map<std::string, LayerActivationStats> capture_context(const Network& net,
                                                            const Task& task, int n_samples,
                                                            std::uint64_t seed);

// The batch seen by one layer during a forward pass.
Matrix capture_layer_input(const Network& net, const Matrix& x, const std::string& layer_id);

}  // namespace corda
