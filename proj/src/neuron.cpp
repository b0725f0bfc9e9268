#include "spikechain/neuron.hpp"

#include <algorithm>
#include <cmath>

#include "spikechain/error.hpp"

namespace spikechain {

void NeuronConfig::validate() const {
  if (spiking()) {
    if (!(leak > 0.0 && leak <= 1.0)) throw Error(ErrorCode::kInvalidConfig, "leak must be in (0, 1]");
    if (!(threshold > 0.0)) throw Error(ErrorCode::kInvalidConfig, "threshold must be > 0");
    if (!(surrogate_alpha > 0.0)) throw Error(ErrorCode::kInvalidConfig, "alpha must be > 0");
  }
}

const char* to_string(NeuronModel model) {
  switch (model) {
    case NeuronModel::kLif: return "lif";
    case NeuronModel::kIf: return "if";
    case NeuronModel::kRelu: return "relu";
  }
  return "lif";
}

const char* to_string(ResetMode mode) {
  return mode == ResetMode::kSubtract ? "subtract" : "zero";
}

NeuronModel neuron_model_from_string(const std::string& name) {
  if (name == "lif" || name == "LIF") return NeuronModel::kLif;
  if (name == "if" || name == "IF") return NeuronModel::kIf;
  if (name == "relu" || name == "ReLU") return NeuronModel::kRelu;
  throw Error(ErrorCode::kInvalidConfig, "unknown neuron model '" + name + "'");
}

ResetMode reset_mode_from_string(const std::string& name) {
  if (name == "subtract" || name == "sub") return ResetMode::kSubtract;
  if (name == "zero") return ResetMode::kZero;
  throw Error(ErrorCode::kInvalidConfig, "unknown reset mode '" + name + "'");
}

namespace {

double centre(const NeuronConfig& cfg) { return cfg.surrogate_centered ? cfg.threshold : 0.0; }

}  // namespace

double surrogate_derivative(double u, const NeuronConfig& cfg) {
  return cfg.surrogate_alpha * std::max(0.0, 1.0 - std::abs(u - centre(cfg)));
}

double spike_value(double u, const NeuronConfig& cfg) {
  if (cfg.spike_function == SpikeFunction::kHeaviside) return u >= cfg.threshold ? 1.0 : 0.0;
  // Integral of the triangle from -inf to u.
  const double z = u - centre(cfg);
  double area;
  if (z <= -1.0) {
    area = 0.0;
  } else if (z <= 0.0) {
    area = 0.5 * (z + 1.0) * (z + 1.0);
  } else if (z <= 1.0) {
    area = 1.0 - 0.5 * (1.0 - z) * (1.0 - z);
  } else {
    area = 1.0;
  }
  return cfg.surrogate_alpha * area;
}

void neuron_step(std::span<double> u, std::span<const double> current, std::span<double> spikes,
                 const NeuronConfig& cfg, std::span<double> pre_reset) {
  if (!cfg.spiking()) {
    for (std::size_t i = 0; i < u.size(); ++i) spikes[i] = std::max(0.0, current[i]);
    return;
  }
  const double leak = cfg.effective_leak();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v = current[i] + leak * u[i];
    const double o = spike_value(v, cfg);
    if (!pre_reset.empty()) pre_reset[i] = v;
    spikes[i] = o;
    if (cfg.reset == ResetMode::kSubtract) {
      u[i] = v - cfg.threshold * o;
    } else {
      u[i] = v * (1.0 - o);
    }
  }
}

std::vector<double> neuron_step(LayerState& state, std::span<const double> current,
                                const NeuronConfig& cfg) {
  neuron_step(state.u, current, state.o, cfg);
  return state.o;
}

}  // namespace spikechain
