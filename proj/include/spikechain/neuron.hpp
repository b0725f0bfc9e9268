#pragma once

#include <span>
#include <string>
#include <vector>

namespace spikechain {

enum class NeuronModel { kLif, kIf, kRelu };
enum class ResetMode { kSubtract, kZero };

/// Forward nonlinearity of spiking neurons. kSoft replaces the step with the
/// antiderivative of the triangle surrogate so that finite differences see the
/// same function that backprop differentiates.
enum class SpikeFunction { kHeaviside, kSoft };

struct NeuronConfig {
  NeuronModel model = NeuronModel::kLif;
  double leak = 0.874;
  double threshold = 1.0;
  ResetMode reset = ResetMode::kSubtract;
  double surrogate_alpha = 0.3;
  /// true: triangle centred on the threshold. false: centred on u = 0.
  bool surrogate_centered = true;
  SpikeFunction spike_function = SpikeFunction::kHeaviside;

  bool spiking() const { return model != NeuronModel::kRelu; }
  /// Leak in effect (IF forces 1).
  double effective_leak() const { return model == NeuronModel::kIf ? 1.0 : leak; }

  /// Throws kInvalidConfig on out-of-range values.
  void validate() const;
};

const char* to_string(NeuronModel model);
const char* to_string(ResetMode mode);
NeuronModel neuron_model_from_string(const std::string& name);
ResetMode reset_mode_from_string(const std::string& name);

/// Triangle surrogate for d(spike)/du, evaluated at pre-reset potential `u`.
double surrogate_derivative(double u, const NeuronConfig& cfg);

/// Forward spike value at pre-reset potential `u` (0/1 or the soft variant).
double spike_value(double u, const NeuronConfig& cfg);

/// Membrane potentials and outputs of one layer for one batch element.
struct LayerState {
  std::vector<double> u;
  std::vector<double> o;

  explicit LayerState(std::size_t neurons = 0) : u(neurons, 0.0), o(neurons, 0.0) {}
};

/// One step of u' = I + leak*u, o = spike(u'), then reset where o fires.
/// Writes the pre-reset potentials to `pre_reset` when it is non-empty.
void neuron_step(std::span<double> u, std::span<const double> current, std::span<double> spikes,
                 const NeuronConfig& cfg, std::span<double> pre_reset = {});

/// Convenience overload over LayerState; returns the spikes.
std::vector<double> neuron_step(LayerState& state, std::span<const double> current,
                                const NeuronConfig& cfg);

}  // namespace spikechain
