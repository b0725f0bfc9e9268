#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spikechain/error.hpp"
#include "spikechain/neuron.hpp"

namespace spikechain {
namespace {

NeuronConfig make(NeuronModel model, ResetMode reset, double leak = 0.874) {
  NeuronConfig cfg;
  cfg.model = model;
  cfg.reset = reset;
  cfg.leak = leak;
  return cfg;
}

struct SpikeCount {
  int spikes = 0;
  int spikes_after = 0;
  double final_u = 0.0;
};

// Feeds `inputs`, then `silence` zero steps, to a single neuron.
SpikeCount simulate(const NeuronConfig& cfg, const std::vector<double>& inputs, int silence) {
  LayerState state(1);
  SpikeCount r;
  const std::size_t total = inputs.size() + silence;
  for (std::size_t t = 0; t < total; ++t) {
    const double in = t < inputs.size() ? inputs[t] : 0.0;
    const auto o = neuron_step(state, std::span<const double>(&in, 1), cfg);
    if (o[0] > 0.5) {
      ++r.spikes;
      if (t >= inputs.size()) ++r.spikes_after;
    }
  }
  r.final_u = state.u[0];
  return r;
}

TEST(Neuron, ChargeConservation) {
  const NeuronConfig cfg = make(NeuronModel::kLif, ResetMode::kSubtract, 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> current(0.0, 2.0);
  std::uniform_int_distribution<int> length(1, 60);
  for (int trace = 0; trace < 1000; ++trace) {
    std::vector<double> in(length(rng));
    double total = 0.0;
    for (double& x : in) total += (x = current(rng));
    const SpikeCount r = simulate(cfg, in, 0);
    EXPECT_NEAR(r.final_u + cfg.threshold * r.spikes, total, 1e-12 * std::max(1.0, total));
  }
}

TEST(Neuron, LeakDecay) {
  const NeuronConfig cfg = make(NeuronModel::kLif, ResetMode::kSubtract, 0.874);
  LayerState state(1);
  state.u[0] = 0.9;
  const double zero = 0.0;
  for (int t = 1; t <= 50; ++t) {
    neuron_step(state, std::span<const double>(&zero, 1), cfg);
    EXPECT_DOUBLE_EQ(state.u[0], std::pow(0.874, t) * 0.9) << t;
  }
}

TEST(Neuron, IfIgnoresLeak) {
  const NeuronConfig cfg = make(NeuronModel::kIf, ResetMode::kSubtract, 0.5);
  LayerState state(1);
  state.u[0] = 0.7;
  const double zero = 0.0;
  for (int t = 0; t < 10; ++t) neuron_step(state, std::span<const double>(&zero, 1), cfg);
  EXPECT_EQ(state.u[0], 0.7);
}

TEST(Neuron, ZeroResetIdempotence) {
  const NeuronConfig cfg = make(NeuronModel::kLif, ResetMode::kZero);
  std::vector<double> u = {0.5, 0.2, 0.0, 0.9}, out(4);
  const std::vector<double> in = {0.6, 3.0, 0.1, 0.05};
  neuron_step(u, in, out, cfg);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (out[i] > 0.5) EXPECT_EQ(u[i], 0.0);
  }
  EXPECT_EQ(out[1], 1.0);
  EXPECT_EQ(out[2], 0.0);
}

// Closed form for IF/subtract: a charge Q arriving in one step fires floor(Q)
// times in total; the first spike is in the burst step, the rest follow.
TEST(Neuron, StagnationProperty) {
  const std::vector<double> burst = {3.5};
  const SpikeCount sub = simulate(make(NeuronModel::kIf, ResetMode::kSubtract), burst, 10);
  EXPECT_EQ(sub.spikes, 3);
  EXPECT_EQ(sub.spikes_after, 2);
  const SpikeCount zero = simulate(make(NeuronModel::kIf, ResetMode::kZero), burst, 10);
  EXPECT_EQ(zero.spikes, 1);
  EXPECT_EQ(zero.spikes_after, 0);
}

TEST(Neuron, StagnationAcrossCharges) {
  for (double q = 2.0; q <= 6.0; q += 0.25) {
    const std::vector<double> burst = {q};
    const SpikeCount sub = simulate(make(NeuronModel::kIf, ResetMode::kSubtract), burst, 20);
    EXPECT_EQ(sub.spikes, static_cast<int>(std::floor(q + 1e-12))) << q;
    const SpikeCount zero = simulate(make(NeuronModel::kIf, ResetMode::kZero), burst, 20);
    const SpikeCount leaky = simulate(make(NeuronModel::kLif, ResetMode::kSubtract), burst, 20);
    const SpikeCount strong = simulate(make(NeuronModel::kLif, ResetMode::kSubtract, 0.5), burst, 20);
    EXPECT_LT(zero.spikes_after, sub.spikes_after) << q;
    // A mild leak can tie with IF on a short tail; a strong one never does.
    EXPECT_LE(leaky.spikes_after, sub.spikes_after) << q;
    EXPECT_LT(strong.spikes_after, sub.spikes_after) << q;
  }
}

TEST(Neuron, ReluPassesPositivePart) {
  const NeuronConfig cfg = make(NeuronModel::kRelu, ResetMode::kZero);
  std::vector<double> u(3), out(3);
  const std::vector<double> in = {-1.0, 0.0, 2.5};
  neuron_step(u, in, out, cfg);
  EXPECT_EQ(out, (std::vector<double>{0.0, 0.0, 2.5}));
}

TEST(Neuron, SurrogateTriangle) {
  NeuronConfig cfg;
  EXPECT_DOUBLE_EQ(surrogate_derivative(1.0, cfg), 0.3);
  EXPECT_DOUBLE_EQ(surrogate_derivative(1.5, cfg), 0.15);
  EXPECT_DOUBLE_EQ(surrogate_derivative(2.5, cfg), 0.0);
  cfg.surrogate_centered = false;
  EXPECT_DOUBLE_EQ(surrogate_derivative(0.0, cfg), 0.3);
  EXPECT_DOUBLE_EQ(surrogate_derivative(1.0, cfg), 0.0);
}

TEST(Neuron, SoftSpikeDerivativeMatchesSurrogate) {
  NeuronConfig cfg;
  cfg.spike_function = SpikeFunction::kSoft;
  for (double u = -0.5; u <= 2.5; u += 0.0625) {
    const double h = 1e-6;
    const double fd = (spike_value(u + h, cfg) - spike_value(u - h, cfg)) / (2 * h);
    EXPECT_NEAR(fd, surrogate_derivative(u, cfg), 1e-6) << u;
  }
}

TEST(Neuron, InvalidConfig) {
  NeuronConfig cfg;
  cfg.threshold = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = NeuronConfig{};
  cfg.leak = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace spikechain
