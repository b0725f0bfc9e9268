#pragma once

#include <span>
#include <string>
#include <vector>

namespace spikechain {

enum class NormKind { kNone, kBn, kBntt };
enum class TemporalWeightKind { kNone, kTw, kTwc };

const char* to_string(NormKind kind);
const char* to_string(TemporalWeightKind kind);
NormKind norm_kind_from_string(const std::string& name);
TemporalWeightKind temporal_weight_from_string(const std::string& name);

/// Batch-norm parameters with `slices` time slices: 1 for plain BN, T for
/// BNTT. Every family is stored slice-major: index = slice * channels + k.
struct NormParams {
  NormKind kind = NormKind::kBn;
  int slices = 1;
  int channels = 0;
  double epsilon = 1e-5;
  double momentum = 0.1;
  /// false divides by (var + eps) instead of sqrt(var + eps).
  bool sqrt_denominator = true;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  std::vector<double> gamma;
  std::vector<double> beta;

  NormParams() = default;
  NormParams(NormKind kind, int slices, int channels);

  /// Slice used at step t. Throws kTimeIndexBeyondHorizon for BNTT when t >= T.
  int slice_for(int t) const;
};

enum class NormMode {
  kTrain,        // batch statistics, running statistics updated
  kTrainFrozen,  // batch statistics, running statistics untouched
  kInfer,        // running statistics
};

/// Values kept from a forward step for the matching backward step.
struct NormCache {
  int slice = 0;
  bool batch_stats = false;
  std::vector<double> xhat;       // per element
  std::vector<double> centered;   // per element, x - mean
  std::vector<double> scale;      // per channel denominator
  std::vector<double> dscale;     // per channel d(scale)/d(var)
};

/// Normalizes activations laid out [batch][channel][spatial] at step t.
void bntt_forward(NormParams& params, std::span<const double> x, std::span<double> out, int batch,
                  int spatial, int t, NormMode mode, NormCache* cache = nullptr);

/// Accumulates gamma/beta gradients (same layout as the params) and writes the
/// input gradient.
void bntt_backward(const NormParams& params, const NormCache& cache, std::span<const double> grad_out,
                   std::span<double> grad_in, std::span<double> grad_gamma,
                   std::span<double> grad_beta, int batch, int spatial);

struct TwParams {
  TemporalWeightKind kind = TemporalWeightKind::kNone;
  int slices = 0;
  int channels = 0;  // 1 for TW
  std::vector<double> weights;

  TwParams() = default;
  TwParams(TemporalWeightKind kind, int slices, int channels);

  double weight(int t, int channel) const;
};

/// Multiplies activations at step t by w_t (TW) or w_{t,c} (TWC).
void tw_apply(const TwParams& params, std::span<const double> y, std::span<double> out, int batch,
              int channels, int spatial, int t);

void tw_backward(const TwParams& params, std::span<const double> y, std::span<const double> grad_out,
                 std::span<double> grad_in, std::span<double> grad_weights, int batch, int channels,
                 int spatial, int t);

struct NormComponents {
  bool mean = false;
  bool variance = false;
  bool gamma = false;
  bool beta = false;

  static NormComponents all() { return {true, true, true, true}; }
  static NormComponents none() { return {}; }
  /// Comma-separated subset of mean,var,gamma,beta ("all"/"none" accepted).
  static NormComponents parse(const std::string& list);
  NormComponents complement() const { return {!mean, !variance, !gamma, !beta}; }
  std::string to_string() const;
};

/// Replaces each named family, at every t, by its mean over t.
NormParams bntt_time_average(const NormParams& params, NormComponents components);

}  // namespace spikechain
