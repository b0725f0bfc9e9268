#include "spikechain/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace spikechain {

NetworkConfig gradcheck_network(int steps, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.input = {2, 4, 4};
  cfg.layers = {{LayerKind::kDense, 32, 64}, {LayerKind::kDense, 64, 32}};
  cfg.classes = 5;
  cfg.neuron.model = NeuronModel::kLif;
  cfg.neuron.spike_function = SpikeFunction::kSoft;
  cfg.steps = steps;
  cfg.seed = seed;
  return cfg;
}

GradcheckReport gradient_check(Network& net, const GradcheckOptions& options) {
  const NetworkConfig& cfg = net.config();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FrameSequence> frames;
  std::vector<int> labels;
  for (int b = 0; b < options.batch; ++b) {
    FrameSequence f(cfg.steps, cfg.input.channels, cfg.input.height, cfg.input.width);
    for (float& v : f.values()) v = unit(rng) < 0.3 ? static_cast<float>(1 + rng() % 3) : 0.0f;
    frames.push_back(std::move(f));
    labels.push_back(static_cast<int>(rng() % cfg.classes));
  }
  std::vector<const FrameSequence*> batch;
  for (const auto& f : frames) batch.push_back(&f);

  auto loss = [&] {
    const auto scores = net.forward(batch, ForwardMode::kTrainFrozen);
    return cross_entropy(scores, labels, cfg.classes, {});
  };
  Trace trace;
  const auto scores = net.forward(batch, ForwardMode::kTrainFrozen, &trace);
  std::vector<double> grad(scores.size());
  cross_entropy(scores, labels, cfg.classes, grad);
  net.zero_grad();
  net.backward(trace, grad);

  std::vector<ParamView> params;
  std::size_t total = 0;
  for (auto& p : net.parameters()) {
    if (!p.trainable()) continue;
    params.push_back(p);
    total += p.value->size();
  }
  GradcheckReport report;
  for (int k = 0; k < options.probes; ++k) {
    // Uniform over all trainable entries.
    std::size_t flat = rng() % total;
    std::size_t which = 0;
    while (flat >= params[which].value->size()) flat -= params[which++].value->size();
    ParamView& p = params[which];
    double& w = (*p.value)[flat];
    const double saved = w;
    w = saved + options.epsilon;
    const double up = loss();
    w = saved - options.epsilon;
    const double down = loss();
    w = saved;
    GradcheckProbe probe;
    probe.name = p.name;
    probe.index = flat;
    probe.analytic = (*p.grad)[flat];
    probe.numeric = (up - down) / (2.0 * options.epsilon);
    const double scale = std::max({std::abs(probe.analytic), std::abs(probe.numeric), options.floor});
    probe.rel_error = std::abs(probe.analytic - probe.numeric) / scale;
    report.max_rel_error = std::max(report.max_rel_error, probe.rel_error);
    report.probes.push_back(probe);
  }
  return report;
}

}  // namespace spikechain
