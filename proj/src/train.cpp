#include "spikechain/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "spikechain/error.hpp"

namespace spikechain {

TrainConfig TrainConfig::from_network(const NetworkConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.epochs;
  t.lr = cfg.lr;
  t.momentum = cfg.momentum;
  t.batch = cfg.batch;
  t.seed = cfg.seed;
  t.cosine_lr = cfg.cosine_lr;
  return t;
}

LabeledSet labeled_split(const Dataset& data, Split split) {
  return {data.split(split), data.labels(split)};
}

int argmax_class(std::span<const double> scores) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(scores.size()); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

std::vector<double> predict_scores(Network& net, std::span<const FrameSequence* const> samples,
                                   int batch) {
  std::vector<double> out;
  out.reserve(samples.size() * net.config().classes);
  for (std::size_t i = 0; i < samples.size(); i += batch) {
    const auto n = std::min<std::size_t>(batch, samples.size() - i);
    const auto scores = net.forward(samples.subspan(i, n), ForwardMode::kInfer);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

namespace {

struct Snapshot {
  std::vector<std::vector<double>> values;

  static Snapshot take(Network& net) {
    Snapshot s;
    for (const ParamView& p : net.parameters()) s.values.push_back(*p.value);
    return s;
  }
  void restore(Network& net) const {
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = values[i];
  }
};

void check_labels(const Network& net, const LabeledSet& set) {
  if (set.samples.size() != set.labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "samples and labels differ in length");
  }
  for (int y : set.labels) {
    if (y < 0 || y >= net.config().classes) {
      throw Error(ErrorCode::kClassCountMismatch, "class-count mismatch: label outside network output");
    }
  }
}

}  // namespace

TrainResult train(Network& net, const LabeledSet& train_set, const LabeledSet& validation,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  check_labels(net, train_set);
  check_labels(net, validation);
  if (train_set.samples.empty()) throw Error(ErrorCode::kEmptySampleSet, "empty training set");
  if (cfg.early_stopping && validation.samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "early stopping needs a validation split");
  }
  const int classes = net.config().classes;
  SgdMomentum optimizer(cfg.lr, cfg.momentum);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  Snapshot best;
  double best_acc = -1.0, best_loss = INFINITY, running_min = INFINITY;
  Trace trace;
  std::vector<const FrameSequence*> batch;
  std::vector<int> labels;
  std::vector<double> grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_lr) {
      optimizer.set_lr(0.5 * cfg.lr * (1.0 + std::cos(M_PI * epoch / cfg.epochs)));
    }
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch) {
      const auto n = std::min<std::size_t>(cfg.batch, order.size() - i);
      batch.clear();
      labels.clear();
      for (std::size_t j = 0; j < n; ++j) {
        batch.push_back(train_set.samples[order[i + j]]);
        labels.push_back(train_set.labels[order[i + j]]);
      }
      const auto scores = net.forward(batch, ForwardMode::kTrain, &trace);
      grad.assign(scores.size(), 0.0);
      loss_sum += cross_entropy(scores, labels, classes, grad) * static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (argmax_class(std::span(scores).subspan(j * classes, classes)) == labels[j]) ++correct;
      }
      net.zero_grad();
      net.backward(trace, grad);
      optimizer.step(net.parameters());
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!validation.samples.empty()) {
      const Metrics m = evaluate(net, validation);
      entry.val_loss = m.loss;
      entry.val_accuracy = m.accuracy;
      running_min = std::min(running_min, m.loss);
      entry.best_val_loss = running_min;
      const bool better = m.accuracy > best_acc || (m.accuracy == best_acc && m.loss < best_loss);
      if (cfg.early_stopping && better) {
        best_acc = m.accuracy;
        best_loss = m.loss;
        best = Snapshot::take(net);
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (cfg.early_stopping && result.best_epoch >= 0) best.restore(net);
  return result;
}

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (static_cast<std::size_t>(net.config().classes) != data.manifest.classes.size()) {
    throw Error(ErrorCode::kClassCountMismatch, "class-count mismatch between network and manifest");
  }
  return train(net, labeled_split(data, Split::kTrain), labeled_split(data, Split::kValidation), cfg,
               on_epoch);
}

std::optional<double> r_error(std::span<const int> predictions, std::span<const int> truths,
                              std::span<const ChainClass> classes, RErrorRule rule) {
  if (predictions.size() != truths.size()) {
    throw Error(ErrorCode::kInvalidArgument, "predictions and truths differ in length");
  }
  std::size_t wrong = 0, repeated = 0;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    if (predictions[s] == truths[s]) continue;
    ++wrong;
    const auto& pred = classes[predictions[s]].labels;
    const auto& truth = classes[truths[s]].labels;
    for (std::size_t i = 1; i < pred.size(); ++i) {
      const int previous = rule == RErrorRule::kPredictedPrevious ? pred[i - 1] : truth[i - 1];
      if (pred[i] != truth[i] && pred[i] == previous) {
        ++repeated;
        break;
      }
    }
  }
  if (wrong == 0) return std::nullopt;
  return static_cast<double>(repeated) / static_cast<double>(wrong);
}

Metrics evaluate(Network& net, const LabeledSet& set, std::span<const ChainClass> classes,
                 bool repetition) {
  if (set.samples.empty()) throw Error(ErrorCode::kEmptySampleSet, "empty sample set");
  check_labels(net, set);
  const int c = net.config().classes;
  const auto scores = predict_scores(net, set.samples);
  Metrics m;
  m.confusion.assign(c, std::vector<int>(c, 0));
  std::size_t correct = 0;
  m.loss = cross_entropy(scores, set.labels, c, {});
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const int p = argmax_class(std::span(scores).subspan(i * c, c));
    m.predictions.push_back(p);
    ++m.confusion[set.labels[i]][p];
    if (p == set.labels[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(set.samples.size());
  if (!classes.empty()) {
    if (static_cast<int>(classes.size()) != c) {
      throw Error(ErrorCode::kClassCountMismatch, "class-count mismatch with enumeration");
    }
    if (repetition) {
      m.r_error = r_error(m.predictions, set.labels, classes, RErrorRule::kPredictedPrevious);
      m.r_error_alt = r_error(m.predictions, set.labels, classes, RErrorRule::kTruePrevious);
    }
  }
  return m;
}

std::string Metrics::to_json() const {
  nlohmann::json j;
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j["accuracy"] = accuracy;
  j["r_error"] = opt(r_error);
  j["r_error_alt"] = opt(r_error_alt);
  j["p_d"] = opt(p_d);
  j["confusion"] = confusion;
  return j.dump(2) + "\n";
}

Rational& Rational::operator+=(const Rational& other) {
  const std::uint64_t g = std::gcd(den, other.den);
  const std::uint64_t lcm = den / g * other.den;
  num = num * (lcm / den) + other.num * (lcm / other.den);
  den = lcm;
  const std::uint64_t r = std::gcd(num, den);
  if (r > 1) {
    num /= r;
    den /= r;
  }
  return *this;
}

Rational no_order_baseline_exact(int gestures, int length) {
  if (gestures < 1 || length < 1) throw Error(ErrorCode::kInvalidArgument, "N and L must be >= 1");
  // Walk every gesture-count vector (a multiset). Each has M = L! / prod(k_i!)
  // orderings, i.e. M classes, each classified correctly with probability 1/M.
  std::vector<int> counts(gestures, 0);
  Rational total;
  const std::uint64_t classes = count_classes(gestures, length, true);
  auto visit = [&](auto&& self, int index, int left) -> void {
    if (index == gestures - 1) {
      counts[index] = left;
      std::uint64_t orderings = 1;
      int placed = 0;
      for (int k : counts) {
        for (int j = 1; j <= k; ++j) {
          ++placed;
          orderings = orderings * placed / j;
        }
      }
      // orderings classes share this multiset, each contributing 1/orderings.
      total += Rational{orderings, orderings * classes};
      return;
    }
    for (int k = 0; k <= left; ++k) {
      counts[index] = k;
      self(self, index + 1, left - k);
    }
  };
  visit(visit, 0, length);
  return total;
}

double no_order_baseline(int gestures, int length) {
  return no_order_baseline_exact(gestures, length).value();
}

}  // namespace spikechain
