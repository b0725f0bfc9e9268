#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spikechain/events.hpp"
#include "spikechain/neuron.hpp"
#include "spikechain/temporal_norm.hpp"

namespace spikechain {

enum class LayerKind { kDense, kConv2d };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int in = 0;   // fan-in (dense) or input channels (conv)
  int out = 0;  // fan-out (dense) or output channels (conv)
  int stride = 1;
  bool recurrent = false;
};

struct InputShape {
  int channels = 2;
  int height = 16;
  int width = 16;
};

struct NetworkConfig {
  InputShape input;
  std::vector<LayerSpec> layers;  // hidden layers; the voting output layer is implicit
  int classes = 2;
  NeuronConfig neuron;
  NormKind norm = NormKind::kNone;
  bool norm_sqrt = true;  // sqrt(var + eps) denominator; false uses var + eps
  TemporalWeightKind temporal_weight = TemporalWeightKind::kNone;
  int steps = 60;  // T
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 10;
  bool cosine_lr = false;  // anneal lr to zero over the run
  int batch = 16;
  std::uint64_t seed = 1;

  /// Throws kInvalidConfig if layer shapes do not chain.
  void validate() const;

  std::string to_json() const;
  static NetworkConfig from_json(const std::string& text);
};

/// Non-owning view of one named tensor inside a network.
struct ParamView {
  std::string name;
  std::vector<int> shape;
  std::vector<double>* value = nullptr;
  std::vector<double>* grad = nullptr;  // null for buffers (running stats)
  bool trainable() const { return grad != nullptr; }
};

enum class ForwardMode {
  kTrain,        // batch statistics, running statistics updated
  kTrainFrozen,  // batch statistics, nothing mutated
  kInfer,        // running statistics
};

/// Activations recorded during a forward pass for BPTT. Every buffer is laid
/// out [t][b][unit] and holds all T steps.
struct Trace {
  struct LayerSteps {
    std::vector<double> input;
    std::vector<double> normed;     // TW input
    std::vector<double> current;    // neuron input
    std::vector<double> pre_reset;  // spiking only
    std::vector<double> output;
    std::vector<NormCache> norm;    // one pooled cache, or one per step
  };
  int batch = 0;
  int steps = 0;
  std::vector<LayerSteps> layers;
  std::vector<double> top;  // features fed to the voting layer
  bool valid = false;
};

class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  NetworkConfig& mutable_config() { return config_; }

  /// Runs all frames and returns accumulated scores laid out [batch][classes].
  /// Every frame sequence must match the input geometry and share one length.
  std::vector<double> forward(std::span<const FrameSequence* const> batch, ForwardMode mode,
                              Trace* trace = nullptr);

  /// BPTT over the recorded trace; accumulates into parameter gradients.
  void backward(const Trace& trace, std::span<const double> grad_scores);

  void zero_grad();
  std::vector<ParamView> parameters();
  std::vector<ParamView> parameters() const;

  /// Norm / temporal-weight parameters of hidden layer l.
  NormParams& norm(int layer) { return layers_.at(layer).norm; }
  const NormParams& norm(int layer) const { return layers_.at(layer).norm; }
  TwParams& temporal_weights(int layer) { return layers_.at(layer).tw; }
  const TwParams& temporal_weights(int layer) const { return layers_.at(layer).tw; }
  int hidden_layers() const { return static_cast<int>(layers_.size()); }
  /// Channels of hidden layer l (conv channels or dense units).
  int layer_channels(int layer) const { return layers_.at(layer).out_c; }

 private:
  struct Layer {
    LayerSpec spec;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    std::size_t in_size = 0, out_size = 0;
    std::vector<double> weight, bias, recurrent;
    std::vector<double> g_weight, g_bias, g_recurrent;
    NormParams norm;
    std::vector<double> g_gamma, g_beta;
    TwParams tw;
    std::vector<double> g_tw;
  };

  void affine_forward(const Layer& layer, std::span<const double> x, std::span<double> out, int batch) const;
  void affine_backward(Layer& layer, std::span<const double> x, std::span<const double> g_out,
                       std::span<double> g_in, int batch);

  NetworkConfig config_;
  std::vector<Layer> layers_;
  std::size_t top_size_ = 0;
  std::vector<double> out_weight_, out_bias_, g_out_weight_, g_out_bias_;
};

/// Mean cross-entropy of softmax(scores) against labels; writes dLoss/dScores.
double cross_entropy(std::span<const double> scores, std::span<const int> labels, int classes,
                     std::span<double> grad_scores);

/// SGD with momentum: v <- momentum * v + g; p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(std::span<const ParamView> params);
  void set_lr(double lr) { lr_ = lr; }
  const std::map<std::string, std::vector<double>>& velocity() const { return velocity_; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

/// Single-tensor update used by SgdMomentum; exposed for direct testing.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum = 0.9);

/// Binary container: magic "SCK1", u32 json length, config JSON, u32 tensor
/// count, then per tensor u32 name length, name, u32 rank, u32 dims, f64 data.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace spikechain
