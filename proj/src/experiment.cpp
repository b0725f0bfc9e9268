#include "spikechain/experiment.hpp"

#include <fmt/format.h>

#include "spikechain/error.hpp"

namespace spikechain {

ExperimentSetup predictable_windows_setup(std::uint64_t seed) {
  ExperimentSetup s;
  s.task.gestures = 3;
  s.task.length = 3;
  s.task.repetition = true;
  s.task.alpha1 = 0.5;
  s.task.alpha2 = 0.7;
  s.task.total_frames = 24;
  s.task.seed = seed;
  s.corpus.gestures = 3;
  s.corpus.users.clear();
  for (int u = 1; u <= 20; ++u) s.corpus.users.push_back(fmt::format("u{:02}", u));
  s.corpus.lightings = {"led", "natural"};
  s.corpus.duration_ms = 300.0;
  s.corpus.width = 16;
  s.corpus.height = 16;
  s.corpus.seed = seed * 1000003ull;
  s.generate.test_users = {"u17", "u18", "u19", "u20"};
  s.generate.multiplier = 3;
  return s;
}

ExperimentSetup unpredictable_windows_setup(std::uint64_t seed) {
  ExperimentSetup s = predictable_windows_setup(seed);
  s.task.alpha1 = 0.2;
  s.task.alpha2 = 1.0;
  return s;
}

Dataset build_experiment_dataset(const ExperimentSetup& setup) {
  const auto corpus = synth_corpus(setup.corpus);
  return generate_dataset(setup.task, corpus, setup.generate);
}

NetworkConfig preset_network(const std::string& variant, int classes, int steps,
                             const InputShape& input, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.input = input;
  cfg.classes = classes;
  cfg.steps = steps;
  cfg.seed = seed;
  const int h2 = ((input.height - 1) / 2) / 2 + 1;
  const int w2 = ((input.width - 1) / 2) / 2 + 1;
  cfg.layers = {
      {LayerKind::kConv2d, input.channels, 8, 2, false},
      {LayerKind::kConv2d, 8, 16, 2, false},
      {LayerKind::kDense, 16 * h2 * w2, 64, 1, false},
  };
  cfg.lr = 0.005;
  cfg.momentum = 0.9;
  cfg.batch = 32;
  cfg.epochs = 40;
  cfg.cosine_lr = true;

  const bool ann = variant.starts_with("ann-");
  const bool snn = variant.starts_with("snn-");
  if (!ann && !snn) throw Error(ErrorCode::kInvalidConfig, "unknown variant '" + variant + "'");
  const std::string rest = variant.substr(4);
  if (ann) {
    cfg.neuron.model = NeuronModel::kRelu;
  } else {
    cfg.neuron.model = NeuronModel::kIf;
    cfg.neuron.reset = ResetMode::kZero;
  }
  if (rest == "bn") {
    cfg.norm = NormKind::kBn;
  } else if (rest == "bntt") {
    cfg.norm = NormKind::kBntt;
  } else if (rest == "tw") {
    cfg.norm = NormKind::kBn;
    cfg.temporal_weight = TemporalWeightKind::kTw;
  } else if (rest == "twc") {
    cfg.norm = NormKind::kBn;
    cfg.temporal_weight = TemporalWeightKind::kTwc;
  } else if (rest == "none") {
    cfg.norm = NormKind::kNone;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown variant '" + variant + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace spikechain
