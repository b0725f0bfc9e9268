#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikechain/chain.hpp"
#include "spikechain/network.hpp"
#include "spikechain/synth.hpp"
#include "spikechain/train.hpp"

namespace spikechain {

/// Desk-scale chain task: synthetic corpus plus chaining parameters.
struct ExperimentSetup {
  ChainTaskSpec task;
  CorpusConfig corpus;
  GenerateOptions generate;
};

/// Predictable windows: N = 3, L = 3, F_total = 24, alpha = (0.5, 0.7).
ExperimentSetup predictable_windows_setup(std::uint64_t seed = 1);
/// Same as the predictable setup with alpha = (0.2, 1.0).
ExperimentSetup unpredictable_windows_setup(std::uint64_t seed = 1);

Dataset build_experiment_dataset(const ExperimentSetup& setup);

/// Named network variants: ann-bn, ann-bntt, ann-tw, ann-twc, snn-bn,
/// snn-bntt. `neuron` overrides the spiking model for snn-* variants.
NetworkConfig preset_network(const std::string& variant, int classes, int steps,
                             const InputShape& input, std::uint64_t seed);

}  // namespace spikechain
