#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikechain/network.hpp"
#include "spikechain/train.hpp"

namespace spikechain {

struct CenterOfMass {
  double m = 0.0;
  bool uniform = false;  // all weights equal; m set to (T+1)/2 by convention
};

/// Mass-weighted mean of t = 1..T with mass x_t - min(x). `normalized = false`
/// gives the unnormalized (1/T) sum form instead.
CenterOfMass center_of_mass(std::span<const double> x, bool normalized = true);

struct AttentionProfile {
  std::string family;  // "tw", "beta" or "gamma"
  int layer = 0;
  int channel = -1;    // -1: one weight shared by the whole layer
  std::vector<double> values;  // length T
  CenterOfMass center;
};

struct AttentionOptions {
  bool include_gamma = false;
  bool normalized = true;
};

/// TW/TWC weights or, for BNTT, the beta family (and optionally gamma).
/// Throws kNoTemporalParameters when the network has neither.
std::vector<AttentionProfile> export_attention(const Network& net, const AttentionOptions& options = {});

/// Writes attention_<family>.csv (layer,channel,t,value) and
/// center_of_mass_<family>.csv (layer,channel,m,uniform_flag) into `dir`.
std::vector<std::filesystem::path> write_attention_csv(std::span<const AttentionProfile> profiles,
                                                       const std::filesystem::path& dir);

/// Time-averages every BNTT family not named in `keep`, then evaluates a copy.
Metrics ablate_and_eval(const Network& net, NormComponents keep, const LabeledSet& data,
                        std::span<const ChainClass> classes = {}, bool repetition = false);

/// Copy of `net` with all BNTT families outside `keep` averaged over time.
Network ablate(const Network& net, NormComponents keep);

}  // namespace spikechain
