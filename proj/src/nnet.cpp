// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/nnet.hpp"

#include <cmath>
#include <random>

#include "corda/rng.hpp"

namespace corda {

namespace {

enum class ParamKind { weight, b, a, bias };

struct ParamSlot {
  int layer;
  ParamKind kind;
  std::string name;
};

// Single source of truth for what trains and in which order. When any adapter
// is present the net is in adapter fine-tuning mode: dense weights and
// w_residual freeze, only adapter factors and biases move.
std::vector<ParamSlot> enumerate_slots(const Network& net) {
  const bool adapters = net.has_adapters();
  std::vector<ParamSlot> slots;
  for (int i = 0; i < net.layer_count(); ++i) {
    const std::string id = net.layer_id(i);
    if (adapters) {
      if (net.layer(i).is_adapter) {
        slots.push_back({i, ParamKind::b, id + ".b"});
        slots.push_back({i, ParamKind::a, id + ".a"});
      }
    } else {
      slots.push_back({i, ParamKind::weight, id + ".weight"});
    }
    slots.push_back({i, ParamKind::bias, id + ".bias"});
  }
  return slots;
}

Matrix layer_apply(const Layer& layer, const Matrix& x) {
  return layer.is_adapter ? adapter_apply(layer.adapter, x) : multiply(layer.weight, x);
}

void add_bias(Matrix& z, const std::vector<double>& bias) {
  for (int i = 0; i < z.rows(); ++i) {
    const double b = bias[i];
    for (int j = 0; j < z.cols(); ++j) z(i, j) += b;
  }
}

std::vector<double> row_sums(const Matrix& m) {
  std::vector<double> out(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out[i] += m(i, j);
  }
  return out;
}

}  // namespace

const char* to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::identity: return "identity";
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::tanh: return "tanh";
  }
  return "unknown";
}

Nonlinearity nonlinearity_from_string(const std::string& s) {
  if (s == "identity") return Nonlinearity::identity;
  if (s == "relu") return Nonlinearity::relu;
  if (s == "tanh") return Nonlinearity::tanh;
  throw InvalidArgumentError("unknown nonlinearity '" + s + "'");
}

const char* to_string(InputKind k) {
  switch (k) {
    case InputKind::gaussian: return "gaussian";
    case InputKind::gaussian_shifted: return "gaussian_shifted";
  }
  return "unknown";
}

InputKind input_kind_from_string(const std::string& s) {
  if (s == "gaussian") return InputKind::gaussian;
  if (s == "gaussian_shifted") return InputKind::gaussian_shifted;
  throw InvalidArgumentError("unknown input distribution '" + s + "'");
}

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidArgumentError("unknown optimizer '" + s + "'");
}

Network Network::random_init(const NetworkSpec& spec) {
  if (spec.layer_dims.size() < 2) {
    throw DimensionError("Network: need at least input and output dims");
  }
  for (int d : spec.layer_dims) {
    if (d < 1) throw DimensionError("Network: layer dims must be >= 1");
  }
  Network net;
  net.layer_dims_ = spec.layer_dims;
  net.nonlinearity_ = spec.nonlinearity;
  net.init_seed_ = spec.seed;
  std::mt19937_64 engine = make_engine(spec.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
    const int d_in = spec.layer_dims[l];
    const int d_out = spec.layer_dims[l + 1];
    Layer layer;
    layer.weight = Matrix(d_out, d_in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (int i = 0; i < d_out; ++i) {
      for (int j = 0; j < d_in; ++j) layer.weight(i, j) = dist(engine) * scale;
    }
    layer.bias.assign(d_out, 0.0);
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

Network Network::from_parts(std::vector<int> dims, Nonlinearity nonlinearity,
                            std::uint64_t seed, std::vector<Layer> layers) {
  if (dims.size() < 2 || layers.size() + 1 != dims.size()) {
    throw DimensionError("Network::from_parts: inconsistent layer list");
  }
  Network net;
  net.layer_dims_ = std::move(dims);
  net.nonlinearity_ = nonlinearity;
  net.init_seed_ = seed;
  net.layers_ = std::move(layers);
  return net;
}

std::string Network::layer_id(int i) const {
  if (i < 0 || i >= layer_count()) {
    throw InvalidArgumentError("layer_id: index " + std::to_string(i) + " out of range");
  }
  return "layer" + std::to_string(i);
}

int Network::find_layer(const std::string& id) const {
  for (int i = 0; i < layer_count(); ++i) {
    if (layer_id(i) == id) return i;
  }
  throw InvalidArgumentError("find_layer: unknown layer id '" + id + "'");
}

bool Network::has_adapters() const {
  for (const Layer& l : layers_) {
    if (l.is_adapter) return true;
  }
  return false;
}

const Matrix& Network::plain_weight(int i) const {
  const Layer& l = layer(i);
  if (l.is_adapter) {
    throw InvalidArgumentError("plain_weight: " + layer_id(i) + " is decomposed");
  }
  return l.weight;
}

void Network::set_plain(int i, Matrix w) {
  Layer& l = layer(i);
  if (w.rows() != layer_dims_[i + 1] || w.cols() != layer_dims_[i]) {
    throw DimensionError("set_plain: weight shape does not match " + layer_id(i));
  }
  l.is_adapter = false;
  l.weight = std::move(w);
  l.adapter = DecomposedLayer{};
}

void Network::set_adapter(int i, DecomposedLayer adapter) {
  Layer& l = layer(i);
  const int d_out = layer_dims_[i + 1];
  const int d_in = layer_dims_[i];
  if (adapter.w_residual.rows() != d_out || adapter.w_residual.cols() != d_in ||
      adapter.b.rows() != d_out || adapter.b.cols() != adapter.r ||
      adapter.a.rows() != adapter.r || adapter.a.cols() != d_in) {
    throw DimensionError("set_adapter: factor shapes do not match " + layer_id(i));
  }
  if (adapter.layer_id.empty()) adapter.layer_id = layer_id(i);
  l.is_adapter = true;
  l.weight = Matrix{};
  l.adapter = std::move(adapter);
}

Matrix Network::forward(const Matrix& x) const { return forward_trace(x).output; }

ForwardTrace Network::forward_trace(const Matrix& x) const {
  if (x.rows() != input_dim()) {
    throw DimensionError("forward: input has " + std::to_string(x.rows()) +
                         " rows, net expects " + std::to_string(input_dim()));
  }
  if (!x.all_finite()) throw InvalidArgumentError("forward: input has non-finite entries");
  ForwardTrace trace;
  Matrix h = x;
  for (int i = 0; i < layer_count(); ++i) {
    trace.inputs.push_back(h);
    Matrix z = layer_apply(layers_[i], h);
    add_bias(z, layers_[i].bias);
    trace.preacts.push_back(z);
    if (i + 1 < layer_count()) {
      switch (nonlinearity_) {
        case Nonlinearity::identity:
          h = z;
          break;
        case Nonlinearity::relu:
          h = z;
          for (double& v : h.storage()) v = v > 0.0 ? v : 0.0;
          break;
        case Nonlinearity::tanh:
          h = z;
          for (double& v : h.storage()) v = std::tanh(v);
          break;
      }
    }
  }
  trace.output = trace.preacts.back();
  return trace;
}

Network merge_all(const Network& net) {
  Network out = net;
  for (int i = 0; i < out.layer_count(); ++i) {
    Layer& l = out.layer(i);
    if (!l.is_adapter) continue;
    Matrix merged = merge(l.adapter);
    l.is_adapter = false;
    l.weight = std::move(merged);
    l.adapter = DecomposedLayer{};
  }
  return out;
}

Task make_task(const TaskSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) {
    throw DimensionError("make_task: dims must be >= 1");
  }
  if (spec.input_distribution.stddev <= 0.0 || spec.noise_std < 0.0) {
    throw InvalidArgumentError("make_task: stddev must be > 0 and noise_std >= 0");
  }
  NetworkSpec teacher_spec;
  teacher_spec.layer_dims = {spec.input_dim, 2 * spec.input_dim, spec.output_dim};
  teacher_spec.nonlinearity = Nonlinearity::tanh;
  teacher_spec.seed = spec.teacher_seed;
  Task task;
  task.spec = spec;
  task.teacher = Network::random_init(teacher_spec);
  return task;
}

SampleBatch sample_batch(const Task& task, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgumentError("sample_batch: need at least one sample");
  const TaskSpec& spec = task.spec;
  std::mt19937_64 input_engine = make_engine(mix_seed(seed, "inputs"));
  std::normal_distribution<double> unit(0.0, 1.0);
  const double mean = spec.input_distribution.kind == InputKind::gaussian_shifted
                          ? spec.input_distribution.mean
                          : 0.0;
  const double stddev = spec.input_distribution.stddev;
  Matrix inputs(spec.input_dim, n);
  // Column-sequential draws: the first k columns are a prefix of any longer
  // batch at the same seed.
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < spec.input_dim; ++i) inputs(i, j) = mean + stddev * unit(input_engine);
  }
  SampleBatch batch;
  batch.targets = task.teacher.forward(inputs);
  if (spec.noise_std > 0.0) {
    std::mt19937_64 noise_engine = make_engine(mix_seed(seed, "noise"));
    // Fresh distribution object: a shared one would leak its cached spare
    // deviate from the input stream into the noise stream.
    std::normal_distribution<double> noise_unit(0.0, 1.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < spec.output_dim; ++i) {
        batch.targets(i, j) += spec.noise_std * noise_unit(noise_engine);
      }
    }
  }
  batch.inputs = std::move(inputs);
  return batch;
}

double mse_loss(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw DimensionError("mse_loss: shape mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction.storage()[i] - target.storage()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(prediction.size());
}

std::vector<ParamRef> trainable_parameters(Network& net) {
  std::vector<ParamRef> refs;
  for (const ParamSlot& slot : enumerate_slots(net)) {
    Layer& l = net.layer(slot.layer);
    ParamRef ref;
    ref.name = slot.name;
    switch (slot.kind) {
      case ParamKind::weight:
        ref.data = l.weight.data();
        ref.size = l.weight.size();
        break;
      case ParamKind::b:
        ref.data = l.adapter.b.data();
        ref.size = l.adapter.b.size();
        break;
      case ParamKind::a:
        ref.data = l.adapter.a.data();
        ref.size = l.adapter.a.size();
        break;
      case ParamKind::bias:
        ref.data = l.bias.data();
        ref.size = l.bias.size();
        break;
    }
    refs.push_back(std::move(ref));
  }
  return refs;
}

namespace {

Gradients backward_impl(const Network& net, const Matrix& x, const Matrix& target,
                        double* loss_out) {
  const ForwardTrace trace = net.forward_trace(x);
  if (target.rows() != net.output_dim() || target.cols() != x.cols()) {
    throw DimensionError("backward: target shape mismatch");
  }
  if (loss_out != nullptr) *loss_out = mse_loss(trace.output, target);

  const int layer_count = net.layer_count();
  std::vector<Matrix> d_weight(layer_count), d_b(layer_count), d_a(layer_count);
  std::vector<std::vector<double>> d_bias(layer_count);
  const bool adapters = net.has_adapters();

  const double scale = 2.0 / static_cast<double>(target.size());
  Matrix dz = trace.output - target;
  for (double& v : dz.storage()) v *= scale;

  for (int i = layer_count - 1; i >= 0; --i) {
    const Layer& l = net.layer(i);
    const Matrix& input = trace.inputs[i];
    d_bias[i] = row_sums(dz);
    Matrix bt_dz;  // reused between the a-gradient and the input gradient
    if (l.is_adapter) {
      const Matrix ax = multiply(l.adapter.a, input);
      d_b[i] = multiply(dz, transpose(ax));
      bt_dz = multiply(transpose(l.adapter.b), dz);
      d_a[i] = multiply(bt_dz, transpose(input));
    } else if (!adapters) {
      d_weight[i] = multiply(dz, transpose(input));
    }
    if (i == 0) break;
    Matrix dx = l.is_adapter
                    ? multiply(transpose(l.adapter.w_residual), dz) +
                          multiply(transpose(l.adapter.a), bt_dz)
                    : multiply(transpose(l.weight), dz);
    switch (net.nonlinearity()) {
      case Nonlinearity::identity:
        break;
      case Nonlinearity::relu: {
        const Matrix& z = trace.preacts[i - 1];
        for (std::size_t k = 0; k < dx.size(); ++k) {
          if (z.storage()[k] <= 0.0) dx.storage()[k] = 0.0;
        }
        break;
      }
      case Nonlinearity::tanh: {
        // inputs[i] holds tanh(z_{i-1}); its square gives the derivative.
        const Matrix& h = trace.inputs[i];
        for (std::size_t k = 0; k < dx.size(); ++k) {
          dx.storage()[k] *= 1.0 - h.storage()[k] * h.storage()[k];
        }
        break;
      }
    }
    dz = std::move(dx);
  }

  Gradients grads;
  for (const ParamSlot& slot : enumerate_slots(net)) {
    grads.names.push_back(slot.name);
    switch (slot.kind) {
      case ParamKind::weight:
        grads.values.push_back(std::move(d_weight[slot.layer].storage()));
        break;
      case ParamKind::b:
        grads.values.push_back(std::move(d_b[slot.layer].storage()));
        break;
      case ParamKind::a:
        grads.values.push_back(std::move(d_a[slot.layer].storage()));
        break;
      case ParamKind::bias:
        grads.values.push_back(std::move(d_bias[slot.layer]));
        break;
    }
  }
  return grads;
}

}  // namespace

Gradients backward(const Network& net, const Matrix& x, const Matrix& target) {
  return backward_impl(net, x, target, nullptr);
}

TrainReport train(Network& net, const Task& task, const TrainConfig& cfg) {
  if (cfg.steps < 0 || cfg.batch_size < 1) {
    throw InvalidArgumentError("train: steps must be >= 0 and batch_size >= 1");
  }
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw InvalidArgumentError("train: learning_rate must be positive and finite");
  }
  if (task.spec.input_dim != net.input_dim() || task.spec.output_dim != net.output_dim()) {
    throw DimensionError("train: task dims do not match net");
  }

  std::vector<ParamRef> params = trainable_parameters(net);
  std::vector<std::vector<double>> adam_m, adam_v;
  if (cfg.optimizer == OptimizerKind::adam) {
    for (const ParamRef& p : params) {
      adam_m.emplace_back(p.size, 0.0);
      adam_v.emplace_back(p.size, 0.0);
    }
  }

  TrainReport report;
  report.loss_curve.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    const SampleBatch batch =
        sample_batch(task, cfg.batch_size, mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    double loss = 0.0;
    Gradients grads = backward_impl(net, batch.inputs, batch.targets, &loss);
    if (!std::isfinite(loss)) {
      throw DivergenceError("train: loss diverged at step " + std::to_string(step));
    }
    report.loss_curve.push_back(loss);

    if (cfg.optimizer == OptimizerKind::sgd) {
      for (std::size_t p = 0; p < params.size(); ++p) {
        double* dst = params[p].data;
        const std::vector<double>& g = grads.values[p];
        for (std::size_t k = 0; k < params[p].size; ++k) dst[k] -= cfg.learning_rate * g[k];
      }
    } else {
      const double t = static_cast<double>(step + 1);
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
      for (std::size_t p = 0; p < params.size(); ++p) {
        double* dst = params[p].data;
        const std::vector<double>& g = grads.values[p];
        std::vector<double>& m = adam_m[p];
        std::vector<double>& v = adam_v[p];
        for (std::size_t k = 0; k < params[p].size; ++k) {
          m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
          v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
          const double m_hat = m[k] / bc1;
          const double v_hat = v[k] / bc2;
          dst[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
        }
      }
    }
  }
  return report;
}

double evaluate(const Network& net, const Task& task, int n, std::uint64_t seed) {
  const SampleBatch batch = sample_batch(task, n, seed);
  return mse_loss(net.forward(batch.inputs), batch.targets);
}

std::map<std::string, LayerActivationStats> capture_context(const Network& net,
                                                            const Task& task, int n_samples,
                                                            std::uint64_t seed) {
  if (n_samples < 1) {
    throw InvalidArgumentError("capture_context: need at least one sample");
  }
  const SampleBatch batch = sample_batch(task, n_samples, seed);
  const ForwardTrace trace = net.forward_trace(batch.inputs);
  std::map<std::string, LayerActivationStats> stats;
  for (int i = 0; i < net.layer_count(); ++i) {
    const Matrix& x = trace.inputs[i];
    LayerActivationStats entry;
    entry.covariance = make_stat(x.rows());
    accumulate(entry.covariance, x);
    entry.mean_abs.assign(x.rows(), 0.0);
    for (int r = 0; r < x.rows(); ++r) {
      double sum = 0.0;
      for (int c = 0; c < x.cols(); ++c) sum += std::abs(x(r, c));
      entry.mean_abs[r] = sum / static_cast<double>(x.cols());
    }
    stats.emplace(net.layer_id(i), std::move(entry));
  }
  return stats;
}

Matrix capture_layer_input(const Network& net, const Matrix& x, const std::string& layer_id) {
  const int index = net.find_layer(layer_id);
  return net.forward_trace(x).inputs[index];
}

}  // namespace corda
