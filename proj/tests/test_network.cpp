#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "spikechain/error.hpp"
#include "spikechain/gradcheck.hpp"
#include "spikechain/network.hpp"

namespace spikechain {
namespace {

std::vector<FrameSequence> random_frames(int count, int steps, const InputShape& in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FrameSequence> out;
  for (int i = 0; i < count; ++i) {
    FrameSequence f(steps, in.channels, in.height, in.width);
    for (float& v : f.values()) v = unit(rng) < 0.3 ? static_cast<float>(1 + rng() % 3) : 0.0f;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<const FrameSequence*> pointers(const std::vector<FrameSequence>& frames) {
  std::vector<const FrameSequence*> p;
  for (const auto& f : frames) p.push_back(&f);
  return p;
}

// Worst relative gap between BPTT and central differences over every
// trainable entry (or `probes` random ones).
double worst_gap(Network& net, double eps, int probes, std::uint64_t seed) {
  const auto& cfg = net.config();
  const auto frames = random_frames(3, cfg.steps, cfg.input, seed);
  const auto batch = pointers(frames);
  std::vector<int> labels = {0, 1 % cfg.classes, 2 % cfg.classes};
  auto loss = [&] {
    return cross_entropy(net.forward(batch, ForwardMode::kTrainFrozen), labels, cfg.classes, {});
  };
  Trace trace;
  const auto scores = net.forward(batch, ForwardMode::kTrainFrozen, &trace);
  std::vector<double> g(scores.size());
  cross_entropy(scores, labels, cfg.classes, g);
  net.zero_grad();
  net.backward(trace, g);
  std::mt19937_64 rng(seed + 1);
  double worst = 0.0;
  for (auto& p : net.parameters()) {
    if (!p.trainable()) continue;
    for (int k = 0; k < probes; ++k) {
      const std::size_t i = rng() % p.value->size();
      const double saved = (*p.value)[i];
      (*p.value)[i] = saved + eps;
      const double up = loss();
      (*p.value)[i] = saved - eps;
      const double down = loss();
      (*p.value)[i] = saved;
      const double fd = (up - down) / (2 * eps), bp = (*p.grad)[i];
      const double gap = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-6});
      EXPECT_LT(gap, 1e-4) << p.name << "[" << i << "] bp " << bp << " fd " << fd;
      worst = std::max(worst, gap);
    }
  }
  return worst;
}

// Moves norm, temporal-weight and bias entries off their initial values so that
// no ReLU sits exactly on its kink and no per-step parameter is trivially 1.
void perturb_temporal(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (auto& p : net.parameters()) {
    if (!p.trainable()) continue;
    if (p.name.find("gamma") != std::string::npos || p.name.find("beta") != std::string::npos ||
        p.name.rfind("tw.", 0) == 0 || p.name.find("bias") != std::string::npos) {
      for (double& v : *p.value) v += d(rng);
    }
  }
}

TEST(Gradcheck, DenseSoftSpikesAtCoarseStep) {
  Network net(gradcheck_network(8, 1));
  GradcheckOptions o;
  o.epsilon = 1e-3;
  o.probes = 50;
  const auto report = gradient_check(net, o);
  EXPECT_EQ(report.probes.size(), 50u);
  EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(Gradcheck, IndependentLoopAgreesForBothResets) {
  for (ResetMode reset : {ResetMode::kSubtract, ResetMode::kZero}) {
    NetworkConfig cfg = gradcheck_network(6, 2);
    cfg.neuron.reset = reset;
    Network net(cfg);
    worst_gap(net, 1e-5, 6, 3);
  }
}

struct Variant {
  NormKind norm;
  TemporalWeightKind tw;
  NeuronModel model;
  bool conv;
  bool recurrent;
};

class VariantGradients : public ::testing::TestWithParam<Variant> {};

TEST_P(VariantGradients, MatchFiniteDifferences) {
  const Variant v = GetParam();
  NetworkConfig cfg;
  cfg.input = {2, 6, 6};
  if (v.conv) {
    cfg.layers = {{LayerKind::kConv2d, 2, 3, 2}, {LayerKind::kDense, 3 * 3 * 3, 8, 1, v.recurrent}};
  } else {
    cfg.layers = {{LayerKind::kDense, 72, 12, 1, v.recurrent}, {LayerKind::kDense, 12, 8}};
  }
  cfg.classes = 3;
  cfg.steps = 5;
  cfg.norm = v.norm;
  cfg.temporal_weight = v.tw;
  cfg.neuron.model = v.model;
  cfg.neuron.spike_function = SpikeFunction::kSoft;
  cfg.seed = 7;
  Network net(cfg);
  perturb_temporal(net, 11);
  worst_gap(net, 1e-5, 5, 13);
}

INSTANTIATE_TEST_SUITE_P(
    Network, VariantGradients,
    ::testing::Values(Variant{NormKind::kBn, TemporalWeightKind::kNone, NeuronModel::kLif, true, false},
                      Variant{NormKind::kBntt, TemporalWeightKind::kNone, NeuronModel::kLif, true, false},
                      Variant{NormKind::kNone, TemporalWeightKind::kTw, NeuronModel::kRelu, true, false},
                      Variant{NormKind::kNone, TemporalWeightKind::kTwc, NeuronModel::kIf, false, false},
                      Variant{NormKind::kBntt, TemporalWeightKind::kNone, NeuronModel::kRelu, false, false},
                      Variant{NormKind::kNone, TemporalWeightKind::kNone, NeuronModel::kLif, false, true},
                      Variant{NormKind::kBn, TemporalWeightKind::kNone, NeuronModel::kIf, true, true}));

// No hidden layers: the voting layer adds W x_t + b at every step.
TEST(Network, VotingLayerSumsOverTime) {
  NetworkConfig cfg;
  cfg.input = {1, 1, 2};
  cfg.layers = {};
  cfg.classes = 2;
  cfg.neuron.model = NeuronModel::kRelu;
  cfg.steps = 3;
  Network net(cfg);
  for (auto& p : net.parameters()) {
    if (p.name == "output.weight") *p.value = {1.0, 0.0, 0.0, 2.0};
    if (p.name == "output.bias") *p.value = {0.5, -0.5};
  }
  FrameSequence f(3, 1, 1, 2);
  f.at(0, 0, 0, 0) = 1;
  f.at(1, 0, 0, 1) = 2;
  f.at(2, 0, 0, 0) = 3;
  const std::vector<const FrameSequence*> batch = {&f};
  const auto s = net.forward(batch, ForwardMode::kInfer);
  EXPECT_DOUBLE_EQ(s[0], 4.0 + 3 * 0.5);
  EXPECT_DOUBLE_EQ(s[1], 4.0 - 3 * 0.5);
}

TEST(Network, ReluScoresIgnoreFrameOrder) {
  NetworkConfig cfg;
  cfg.input = {2, 8, 8};
  cfg.layers = {{LayerKind::kConv2d, 2, 4, 2}, {LayerKind::kDense, 4 * 4 * 4, 16}};
  cfg.classes = 5;
  cfg.norm = NormKind::kBn;
  cfg.neuron.model = NeuronModel::kRelu;
  cfg.steps = 10;
  Network net(cfg);
  auto frames = random_frames(4, 10, cfg.input, 3);
  // Populate running statistics first.
  net.forward(pointers(frames), ForwardMode::kTrain);
  const auto base = net.forward(pointers(frames), ForwardMode::kInfer);
  std::mt19937_64 rng(5);
  for (auto& f : frames) {
    std::vector<int> order(f.frames());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    FrameSequence g = f;
    for (std::size_t t = 0; t < order.size(); ++t)
      std::copy_n(f.frame(order[t]), f.frame_size(), g.frame(t));
    f = g;
  }
  const auto permuted = net.forward(pointers(frames), ForwardMode::kInfer);
  for (std::size_t i = 0; i < base.size(); ++i)
    EXPECT_NEAR(permuted[i], base[i], 1e-9 * std::max(1.0, std::abs(base[i])));
}

TEST(Network, SpikingScoresDependOnFrameOrder) {
  NetworkConfig cfg;
  cfg.input = {2, 4, 4};
  cfg.layers = {{LayerKind::kDense, 32, 16}};
  cfg.classes = 3;
  cfg.neuron.model = NeuronModel::kIf;
  cfg.neuron.reset = ResetMode::kZero;
  cfg.steps = 8;
  Network net(cfg);
  auto frames = random_frames(1, 8, cfg.input, 9);
  const auto base = net.forward(pointers(frames), ForwardMode::kInfer);
  FrameSequence r = frames[0];
  for (std::uint32_t t = 0; t < 8; ++t) std::copy_n(frames[0].frame(7 - t), r.frame_size(), r.frame(t));
  const std::vector<const FrameSequence*> batch = {&r};
  const auto reversed = net.forward(batch, ForwardMode::kInfer);
  double diff = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) diff += std::abs(base[i] - reversed[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Network, GeometryMismatch) {
  Network net(gradcheck_network(8));
  FrameSequence wrong(8, 2, 5, 5);
  const std::vector<const FrameSequence*> batch = {&wrong};
  EXPECT_THROW(net.forward(batch, ForwardMode::kInfer), Error);
}

TEST(Network, BnttRejectsLongerSequences) {
  NetworkConfig cfg = gradcheck_network(4);
  cfg.norm = NormKind::kBntt;
  Network net(cfg);
  const auto frames = random_frames(1, 6, cfg.input, 1);
  try {
    net.forward(pointers(frames), ForwardMode::kInfer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeIndexBeyondHorizon);
  }
}

TEST(Network, InvalidLayerChain) {
  NetworkConfig cfg = gradcheck_network(4);
  cfg.layers[1].in = 63;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Network, ConfigJsonRoundTrip) {
  NetworkConfig cfg = gradcheck_network(7, 3);
  cfg.norm = NormKind::kBntt;
  cfg.temporal_weight = TemporalWeightKind::kTwc;
  cfg.neuron.reset = ResetMode::kZero;
  cfg.layers[0].recurrent = true;
  const NetworkConfig back = NetworkConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(Network, CheckpointRoundTrip) {
  NetworkConfig cfg;
  cfg.input = {2, 8, 8};
  cfg.layers = {{LayerKind::kConv2d, 2, 4, 2}, {LayerKind::kDense, 64, 10}};
  cfg.classes = 4;
  cfg.norm = NormKind::kBntt;
  cfg.steps = 6;
  Network net(cfg);
  perturb_temporal(net, 4);
  const auto frames = random_frames(3, 6, cfg.input, 2);
  net.forward(pointers(frames), ForwardMode::kTrain);
  const auto path = std::filesystem::temp_directory_path() / "spikechain_ckpt_test.sck";
  save_checkpoint(net, path);
  Network back = load_checkpoint(path);
  EXPECT_EQ(back.config().to_json(), net.config().to_json());
  EXPECT_EQ(back.forward(pointers(frames), ForwardMode::kInfer),
            net.forward(pointers(frames), ForwardMode::kInfer));
  std::filesystem::remove(path);
}

TEST(Network, CheckpointBadMagic) {
  const auto path = std::filesystem::temp_directory_path() / "spikechain_bad.sck";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE and more";
  }
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadMagic);
  }
  std::filesystem::remove(path);
}

TEST(CrossEntropy, MatchesDirectFormula) {
  const std::vector<double> s = {1.0, 2.0, 0.5, -1.0, 0.0, 3.0};
  const std::vector<int> y = {1, 2};
  std::vector<double> g(6);
  const double l = cross_entropy(s, y, 3, g);
  const double l0 = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(0.5)));
  const double l1 = -std::log(std::exp(3.0) / (std::exp(-1.0) + std::exp(0.0) + std::exp(3.0)));
  EXPECT_NEAR(l, (l0 + l1) / 2, 1e-12);
  double sum = 0.0;
  for (double v : g) sum += v;
  EXPECT_NEAR(sum, 0.0, 1e-12);
}

TEST(Sgd, MomentumUpdate) {
  std::vector<double> p = {1.0, -1.0}, v = {0.0, 0.0};
  const std::vector<double> g = {0.5, 1.0};
  sgd_momentum_step(p, g, v, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.05);
  sgd_momentum_step(p, g, v, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 0.9 * 0.5 + 0.5);
  EXPECT_DOUBLE_EQ(p[0], 0.95 - 0.1 * 0.95);
}

}  // namespace
}  // namespace spikechain
