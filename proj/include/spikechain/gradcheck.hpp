#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikechain/network.hpp"

namespace spikechain {

struct GradcheckOptions {
  double epsilon = 1e-3;
  int probes = 50;
  int batch = 4;
  std::uint64_t seed = 1;
  /// Gradients smaller than this in both estimates count as agreeing.
  double floor = 1e-8;
};

struct GradcheckProbe {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckProbe> probes;
  double max_rel_error = 0.0;
};

/// dense(64) -> dense(32) -> voting output over T steps, soft spikes.
NetworkConfig gradcheck_network(int steps = 8, std::uint64_t seed = 1);

/// Central differences on random trainable entries against BPTT gradients of
/// the cross-entropy loss on a random sparse batch. Uses batch statistics
/// without touching running statistics. Parameters are restored afterwards.
GradcheckReport gradient_check(Network& net, const GradcheckOptions& options = {});

}  // namespace spikechain
