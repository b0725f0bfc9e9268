#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikechain/chain.hpp"
#include "spikechain/network.hpp"

namespace spikechain {

struct TrainConfig {
  int epochs = 10;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 16;
  std::uint64_t seed = 1;
  /// Keep the weights with the best validation accuracy.
  bool early_stopping = true;
  /// Cosine-anneal the learning rate to zero over the run instead of keeping it fixed.
  bool cosine_lr = false;

  static TrainConfig from_network(const NetworkConfig& cfg);
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double best_val_loss = 0.0;  // running minimum
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

struct LabeledSet {
  std::vector<const FrameSequence*> samples;
  std::vector<int> labels;
};

LabeledSet labeled_split(const Dataset& data, Split split);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Cross-entropy BPTT training with SGD momentum. Only the train and
/// validation sets are touched.
TrainResult train(Network& net, const LabeledSet& train_set, const LabeledSet& validation,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Reads the train and validation splits of `data`; checks class count.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Inference-mode scores, [sample][class].
std::vector<double> predict_scores(Network& net, std::span<const FrameSequence* const> samples,
                                   int batch = 64);

/// Argmax with ties going to the lowest class id.
int argmax_class(std::span<const double> scores);

enum class RErrorRule {
  kPredictedPrevious,  // pred[i] == pred[i-1]
  kTruePrevious,       // pred[i] == truth[i-1]
};

/// Fraction of wrong chain predictions in which some miss-classified position
/// repeats its predecessor. nullopt when no prediction is wrong.
std::optional<double> r_error(std::span<const int> predictions, std::span<const int> truths,
                              std::span<const ChainClass> classes,
                              RErrorRule rule = RErrorRule::kPredictedPrevious);

struct Metrics {
  double accuracy = 0.0;
  double loss = 0.0;
  std::optional<double> r_error;
  std::optional<double> r_error_alt;
  std::optional<double> p_d;
  std::vector<std::vector<int>> confusion;  // [truth][prediction]
  std::vector<int> predictions;

  std::string to_json() const;
};

/// `classes` enables R-error when the enumeration allows repetition.
Metrics evaluate(Network& net, const LabeledSet& set, std::span<const ChainClass> classes = {},
                 bool repetition = false);

/// Reduced fraction used for exact baseline comparisons.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  Rational& operator+=(const Rational& other);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

/// Accuracy of a perfect gesture detector that is blind to order:
/// (1/C) sum over classes of 1 / (distinct orderings of the class multiset).
Rational no_order_baseline_exact(int gestures, int length);
double no_order_baseline(int gestures, int length);

}  // namespace spikechain
