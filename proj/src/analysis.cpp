#include "spikechain/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "spikechain/error.hpp"

namespace spikechain {

CenterOfMass center_of_mass(std::span<const double> x, bool normalized) {
  if (x.empty()) throw Error(ErrorCode::kInvalidArgument, "empty profile");
  const double T = static_cast<double>(x.size());
  const double lo = *std::min_element(x.begin(), x.end());
  double mass = 0.0, moment = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = x[i] - lo;
    mass += w;
    moment += w * static_cast<double>(i + 1);
  }
  CenterOfMass out;
  if (mass == 0.0) {
    out.uniform = true;
    out.m = (T + 1.0) / 2.0;
    return out;
  }
  out.m = normalized ? moment / mass : moment / T;
  return out;
}

std::vector<AttentionProfile> export_attention(const Network& net, const AttentionOptions& options) {
  std::vector<AttentionProfile> out;
  for (int l = 0; l < net.hidden_layers(); ++l) {
    const TwParams& tw = net.temporal_weights(l);
    if (tw.kind != TemporalWeightKind::kNone) {
      for (int k = 0; k < tw.channels; ++k) {
        AttentionProfile p;
        p.family = "tw";
        p.layer = l;
        p.channel = tw.kind == TemporalWeightKind::kTw ? -1 : k;
        for (int t = 0; t < tw.slices; ++t) p.values.push_back(tw.weight(t, k));
        p.center = center_of_mass(p.values, options.normalized);
        out.push_back(std::move(p));
      }
    }
    const NormParams& norm = net.norm(l);
    if (norm.kind == NormKind::kBntt) {
      auto emit = [&](const char* family, const std::vector<double>& values) {
        for (int k = 0; k < norm.channels; ++k) {
          AttentionProfile p;
          p.family = family;
          p.layer = l;
          p.channel = k;
          for (int t = 0; t < norm.slices; ++t) {
            p.values.push_back(values[static_cast<std::size_t>(t) * norm.channels + k]);
          }
          p.center = center_of_mass(p.values, options.normalized);
          out.push_back(std::move(p));
        }
      };
      emit("beta", norm.beta);
      if (options.include_gamma) emit("gamma", norm.gamma);
    }
  }
  if (out.empty()) throw Error(ErrorCode::kNoTemporalParameters, "no temporal parameters");
  return out;
}

std::vector<std::filesystem::path> write_attention_csv(std::span<const AttentionProfile> profiles,
                                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::pair<std::ofstream, std::ofstream>> files;
  std::vector<std::filesystem::path> written;
  for (const AttentionProfile& p : profiles) {
    auto it = files.find(p.family);
    if (it == files.end()) {
      const auto values_path = dir / ("attention_" + p.family + ".csv");
      const auto com_path = dir / ("center_of_mass_" + p.family + ".csv");
      it = files.emplace(p.family, std::pair{std::ofstream(values_path), std::ofstream(com_path)}).first;
      if (!it->second.first || !it->second.second) {
        throw Error(ErrorCode::kIoFailure, "cannot write attention tables in " + dir.string());
      }
      it->second.first << "layer,channel,t,value\n";
      it->second.second << "layer,channel,m,uniform_flag\n";
      written.push_back(values_path);
      written.push_back(com_path);
    }
    const std::string channel = p.channel < 0 ? "all" : std::to_string(p.channel);
    for (std::size_t t = 0; t < p.values.size(); ++t) {
      it->second.first << fmt::format("{},{},{},{:.17g}\n", p.layer, channel, t + 1, p.values[t]);
    }
    it->second.second << fmt::format("{},{},{:.17g},{}\n", p.layer, channel, p.center.m,
                                     p.center.uniform ? 1 : 0);
  }
  return written;
}

Network ablate(const Network& net, NormComponents keep) {
  if (net.config().norm != NormKind::kBntt) {
    throw Error(ErrorCode::kNotBnttCheckpoint, "ablation needs a BNTT network");
  }
  Network copy = net;
  for (int l = 0; l < copy.hidden_layers(); ++l) {
    copy.norm(l) = bntt_time_average(copy.norm(l), keep.complement());
  }
  return copy;
}

Metrics ablate_and_eval(const Network& net, NormComponents keep, const LabeledSet& data,
                        std::span<const ChainClass> classes, bool repetition) {
  Network copy = ablate(net, keep);
  return evaluate(copy, data, classes, repetition);
}

}  // namespace spikechain
