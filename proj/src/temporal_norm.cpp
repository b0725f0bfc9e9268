#include "spikechain/temporal_norm.hpp"

#include <cmath>
#include <sstream>

#include "spikechain/error.hpp"

namespace spikechain {

const char* to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kNone: return "none";
    case NormKind::kBn: return "bn";
    case NormKind::kBntt: return "bntt";
  }
  return "none";
}

const char* to_string(TemporalWeightKind kind) {
  switch (kind) {
    case TemporalWeightKind::kNone: return "none";
    case TemporalWeightKind::kTw: return "tw";
    case TemporalWeightKind::kTwc: return "twc";
  }
  return "none";
}

NormKind norm_kind_from_string(const std::string& name) {
  if (name == "none") return NormKind::kNone;
  if (name == "bn") return NormKind::kBn;
  if (name == "bntt") return NormKind::kBntt;
  throw Error(ErrorCode::kInvalidConfig, "unknown norm '" + name + "'");
}

TemporalWeightKind temporal_weight_from_string(const std::string& name) {
  if (name == "none") return TemporalWeightKind::kNone;
  if (name == "tw") return TemporalWeightKind::kTw;
  if (name == "twc") return TemporalWeightKind::kTwc;
  throw Error(ErrorCode::kInvalidConfig, "unknown temporal weight '" + name + "'");
}

NormParams::NormParams(NormKind kind, int slices, int channels)
    : kind(kind),
      slices(slices),
      channels(channels),
      running_mean(static_cast<std::size_t>(slices) * channels, 0.0),
      running_var(static_cast<std::size_t>(slices) * channels, 1.0),
      gamma(static_cast<std::size_t>(slices) * channels, 1.0),
      beta(static_cast<std::size_t>(slices) * channels, 0.0) {}

int NormParams::slice_for(int t) const {
  if (kind != NormKind::kBntt) return 0;
  if (t < 0 || t >= slices) {
    throw Error(ErrorCode::kTimeIndexBeyondHorizon, "time index beyond configured horizon");
  }
  return t;
}

void bntt_forward(NormParams& params, std::span<const double> x, std::span<double> out, int batch,
                  int spatial, int t, NormMode mode, NormCache* cache) {
  const int slice = params.slice_for(t);
  const int channels = params.channels;
  const std::size_t base = static_cast<std::size_t>(slice) * channels;
  const bool batch_stats = mode != NormMode::kInfer;
  const double m = static_cast<double>(batch) * spatial;
  if (cache) {
    cache->slice = slice;
    cache->batch_stats = batch_stats;
    cache->xhat.resize(x.size());
    cache->centered.resize(x.size());
    cache->scale.resize(channels);
    cache->dscale.resize(channels);
  }
  auto at = [&](int b, int k, int s) {
    return (static_cast<std::size_t>(b) * channels + k) * spatial + s;
  };
  for (int k = 0; k < channels; ++k) {
    double mean, var;
    if (batch_stats) {
      double sum = 0.0;
      for (int b = 0; b < batch; ++b)
        for (int s = 0; s < spatial; ++s) sum += x[at(b, k, s)];
      mean = sum / m;
      double sq = 0.0;
      for (int b = 0; b < batch; ++b)
        for (int s = 0; s < spatial; ++s) {
          const double c = x[at(b, k, s)] - mean;
          sq += c * c;
        }
      var = sq / m;
      if (mode == NormMode::kTrain) {
        const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
        params.running_mean[base + k] =
            (1.0 - params.momentum) * params.running_mean[base + k] + params.momentum * mean;
        params.running_var[base + k] =
            (1.0 - params.momentum) * params.running_var[base + k] + params.momentum * unbiased;
      }
    } else {
      mean = params.running_mean[base + k];
      var = params.running_var[base + k];
    }
    const double scale = params.sqrt_denominator ? std::sqrt(var + params.epsilon) : var + params.epsilon;
    const double gamma = params.gamma[base + k];
    const double beta = params.beta[base + k];
    if (cache) {
      cache->scale[k] = scale;
      cache->dscale[k] = params.sqrt_denominator ? 0.5 / scale : 1.0;
    }
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < spatial; ++s) {
        const std::size_t i = at(b, k, s);
        const double c = x[i] - mean;
        const double xhat = c / scale;
        out[i] = gamma * xhat + beta;
        if (cache) {
          cache->xhat[i] = xhat;
          cache->centered[i] = c;
        }
      }
    }
  }
}

void bntt_backward(const NormParams& params, const NormCache& cache, std::span<const double> grad_out,
                   std::span<double> grad_in, std::span<double> grad_gamma,
                   std::span<double> grad_beta, int batch, int spatial) {
  const int channels = params.channels;
  const std::size_t base = static_cast<std::size_t>(cache.slice) * channels;
  const double m = static_cast<double>(batch) * spatial;
  auto at = [&](int b, int k, int s) {
    return (static_cast<std::size_t>(b) * channels + k) * spatial + s;
  };
  for (int k = 0; k < channels; ++k) {
    const double gamma = params.gamma[base + k];
    const double scale = cache.scale[k];
    double sum_g = 0.0, sum_gc = 0.0, g_gamma = 0.0, g_beta = 0.0;
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < spatial; ++s) {
        const std::size_t i = at(b, k, s);
        g_gamma += grad_out[i] * cache.xhat[i];
        g_beta += grad_out[i];
        const double gx = grad_out[i] * gamma;
        sum_g += gx;
        sum_gc += gx * cache.centered[i];
      }
    }
    grad_gamma[base + k] += g_gamma;
    grad_beta[base + k] += g_beta;
    const double coupling =
        cache.batch_stats ? (2.0 / m) * cache.dscale[k] / (scale * scale) * sum_gc : 0.0;
    const double mean_g = cache.batch_stats ? sum_g / m : 0.0;
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < spatial; ++s) {
        const std::size_t i = at(b, k, s);
        const double gx = grad_out[i] * gamma;
        grad_in[i] = (gx - mean_g) / scale - cache.centered[i] * coupling;
      }
    }
  }
}

TwParams::TwParams(TemporalWeightKind kind, int slices, int channels)
    : kind(kind),
      slices(slices),
      channels(kind == TemporalWeightKind::kTwc ? channels : 1),
      weights(static_cast<std::size_t>(slices) * this->channels, 1.0) {}

double TwParams::weight(int t, int channel) const {
  if (t < 0 || t >= slices) {
    throw Error(ErrorCode::kTimeIndexBeyondHorizon, "time index beyond configured horizon");
  }
  return weights[static_cast<std::size_t>(t) * channels + (channels == 1 ? 0 : channel)];
}

void tw_apply(const TwParams& params, std::span<const double> y, std::span<double> out, int batch,
              int channels, int spatial, int t) {
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < channels; ++k) {
      const double w = params.weight(t, k);
      const std::size_t off = (static_cast<std::size_t>(b) * channels + k) * spatial;
      for (int s = 0; s < spatial; ++s) out[off + s] = y[off + s] * w;
    }
  }
}

void tw_backward(const TwParams& params, std::span<const double> y, std::span<const double> grad_out,
                 std::span<double> grad_in, std::span<double> grad_weights, int batch, int channels,
                 int spatial, int t) {
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < channels; ++k) {
      const double w = params.weight(t, k);
      const std::size_t off = (static_cast<std::size_t>(b) * channels + k) * spatial;
      double gw = 0.0;
      for (int s = 0; s < spatial; ++s) {
        gw += grad_out[off + s] * y[off + s];
        grad_in[off + s] = grad_out[off + s] * w;
      }
      grad_weights[static_cast<std::size_t>(t) * params.channels + (params.channels == 1 ? 0 : k)] += gw;
    }
  }
}

NormComponents NormComponents::parse(const std::string& list) {
  NormComponents c;
  if (list.empty() || list == "none") return c;
  if (list == "all") return all();
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "mean") c.mean = true;
    else if (item == "var" || item == "variance") c.variance = true;
    else if (item == "gamma") c.gamma = true;
    else if (item == "beta") c.beta = true;
    else throw Error(ErrorCode::kInvalidArgument, "unknown component '" + item + "'");
  }
  return c;
}

std::string NormComponents::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(mean, "mean");
  add(variance, "var");
  add(gamma, "gamma");
  add(beta, "beta");
  return out.empty() ? "none" : out;
}

NormParams bntt_time_average(const NormParams& params, NormComponents components) {
  NormParams out = params;
  auto average = [&](std::vector<double>& family) {
    for (int k = 0; k < params.channels; ++k) {
      double sum = 0.0;
      for (int t = 0; t < params.slices; ++t) sum += family[static_cast<std::size_t>(t) * params.channels + k];
      const double mean = sum / params.slices;
      for (int t = 0; t < params.slices; ++t) family[static_cast<std::size_t>(t) * params.channels + k] = mean;
    }
  };
  if (components.mean) average(out.running_mean);
  if (components.variance) average(out.running_var);
  if (components.gamma) average(out.gamma);
  if (components.beta) average(out.beta);
  return out;
}

}  // namespace spikechain
