#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "spikechain/analysis.hpp"
#include "spikechain/error.hpp"

namespace spikechain {
namespace {

TEST(CenterOfMass, UniformProfile) {
  const std::vector<double> x(60, 0.7);
  const auto c = center_of_mass(x);
  EXPECT_TRUE(c.uniform);
  EXPECT_DOUBLE_EQ(c.m, 30.5);
}

TEST(CenterOfMass, PointMass) {
  for (int t0 = 1; t0 <= 12; ++t0) {
    std::vector<double> x(12, -0.25);
    x[t0 - 1] = 2.0;
    const auto c = center_of_mass(x);
    EXPECT_FALSE(c.uniform);
    EXPECT_DOUBLE_EQ(c.m, t0);
  }
}

TEST(CenterOfMass, EndpointsSplit) {
  std::vector<double> x(9, 0.0);
  x.front() = x.back() = 1.0;
  EXPECT_DOUBLE_EQ(center_of_mass(x).m, 5.0);
}

TEST(CenterOfMass, TranslationCovariance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30, 0.0);
    for (int t = 0; t < 10; ++t) x[t] = u(rng);
    const double base = center_of_mass(x).m;
    for (int shift = 1; shift <= 20; ++shift) {
      std::vector<double> y(30, 0.0);
      for (int t = 0; t < 10; ++t) y[t + shift] = x[t];
      // min(x) may be non-zero when all ten draws are positive; pin it to 0.
      if (*std::min_element(x.begin(), x.begin() + 10) > 0.0) continue;
      EXPECT_NEAR(center_of_mass(y).m, base + shift, 1e-12);
    }
  }
  std::vector<double> p(30, 0.0), q(30, 0.0);
  p[4] = 1.0;
  q[11] = 1.0;
  EXPECT_DOUBLE_EQ(center_of_mass(q).m - center_of_mass(p).m, 7.0);
}

TEST(CenterOfMass, ScaleInvariance) {
  const std::vector<double> x = {0.2, 0.9, 0.4, 0.1, 0.6};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * (v - 0.1) + 5.0);
  EXPECT_NEAR(center_of_mass(x).m, center_of_mass(y).m, 1e-12);
}

TEST(CenterOfMass, UnnormalizedForm) {
  const std::vector<double> x = {1.0, 2.0, 4.0};
  // (1/3) * (0*1 + 1*2 + 3*3)
  EXPECT_DOUBLE_EQ(center_of_mass(x, false).m, 11.0 / 3.0);
  const auto flat = center_of_mass(std::vector<double>(5, 1.0), false);
  EXPECT_TRUE(flat.uniform);
  EXPECT_DOUBLE_EQ(flat.m, 3.0);
}

NetworkConfig small(NormKind norm, TemporalWeightKind tw) {
  NetworkConfig cfg;
  cfg.input = {2, 4, 4};
  cfg.layers = {{LayerKind::kConv2d, 2, 3, 2}, {LayerKind::kDense, 12, 5}};
  cfg.classes = 4;
  cfg.steps = 7;
  cfg.norm = norm;
  cfg.temporal_weight = tw;
  return cfg;
}

std::size_t rows(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n - 1;  // header
}

TEST(Attention, FreshTwNetIsUniform) {
  Network net(small(NormKind::kBn, TemporalWeightKind::kTwc));
  const auto profiles = export_attention(net);
  ASSERT_EQ(profiles.size(), 3u + 5u);
  for (const auto& p : profiles) {
    EXPECT_EQ(p.family, "tw");
    EXPECT_EQ(p.values.size(), 7u);
    EXPECT_TRUE(p.center.uniform);
    EXPECT_DOUBLE_EQ(p.center.m, 4.0);
  }
  const auto dir = std::filesystem::temp_directory_path() / "spikechain_attention_twc";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto files = write_attention_csv(profiles, dir);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(rows(dir / "attention_tw.csv"), (3u + 5u) * 7u);
  EXPECT_EQ(rows(dir / "center_of_mass_tw.csv"), 3u + 5u);
  std::filesystem::remove_all(dir);
}

TEST(Attention, SharedWeightUsesAllChannel) {
  Network net(small(NormKind::kBn, TemporalWeightKind::kTw));
  const auto profiles = export_attention(net);
  ASSERT_EQ(profiles.size(), 2u);
  for (const auto& p : profiles) EXPECT_EQ(p.channel, -1);
  const auto dir = std::filesystem::temp_directory_path() / "spikechain_attention_tw";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_attention_csv(profiles, dir);
  std::ifstream in(dir / "attention_tw.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "layer,channel,t,value");
  EXPECT_EQ(first.substr(0, 6), "0,all,");
  std::filesystem::remove_all(dir);
}

TEST(Attention, BnttExportsBetaAndOptionalGamma) {
  Network net(small(NormKind::kBntt, TemporalWeightKind::kNone));
  net.norm(1).beta[2 * 5 + 3] = 1.0;
  const auto beta = export_attention(net);
  ASSERT_EQ(beta.size(), 8u);
  for (const auto& p : beta) EXPECT_EQ(p.family, "beta");
  EXPECT_DOUBLE_EQ(beta[3 + 3].center.m, 3.0);
  AttentionOptions o;
  o.include_gamma = true;
  EXPECT_EQ(export_attention(net, o).size(), 16u);
}

TEST(Attention, NoTemporalParameters) {
  Network net(small(NormKind::kBn, TemporalWeightKind::kNone));
  try {
    export_attention(net);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoTemporalParameters);
  }
}

struct Data {
  std::vector<FrameSequence> frames;
  LabeledSet set;
};

Data random_data(const NetworkConfig& cfg, int n) {
  Data d;
  std::mt19937_64 rng(4);
  for (int i = 0; i < n; ++i) {
    FrameSequence f(cfg.steps, 2, 4, 4);
    for (float& v : f.values()) v = static_cast<float>(rng() % 4 == 0);
    d.frames.push_back(f);
  }
  for (int i = 0; i < n; ++i) {
    d.set.samples.push_back(&d.frames[i]);
    d.set.labels.push_back(i % cfg.classes);
  }
  return d;
}

TEST(Ablation, KeepingEverythingMatchesEvaluate) {
  const NetworkConfig cfg = small(NormKind::kBntt, TemporalWeightKind::kNone);
  Network net(cfg);
  const Data d = random_data(cfg, 12);
  net.forward(d.set.samples, ForwardMode::kTrain);
  const Metrics plain = evaluate(net, d.set);
  const Metrics kept = ablate_and_eval(net, NormComponents::all(), d.set);
  EXPECT_EQ(kept.predictions, plain.predictions);
  EXPECT_EQ(kept.loss, plain.loss);
}

TEST(Ablation, DoesNotMutateSource) {
  const NetworkConfig cfg = small(NormKind::kBntt, TemporalWeightKind::kNone);
  Network net(cfg);
  std::mt19937_64 rng(1);
  for (double& b : net.norm(0).beta) b = static_cast<double>(rng() % 100) / 100.0;
  const auto before = net.norm(0).beta;
  const Network averaged = ablate(net, NormComponents::none());
  EXPECT_EQ(net.norm(0).beta, before);
  const auto& a = averaged.norm(0);
  for (int t = 1; t < cfg.steps; ++t)
    for (int k = 0; k < a.channels; ++k) EXPECT_EQ(a.beta[t * a.channels + k], a.beta[k]);
}

TEST(Ablation, RejectsPlainBn) {
  Network net(small(NormKind::kBn, TemporalWeightKind::kNone));
  try {
    ablate(net, NormComponents::all());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotBnttCheckpoint);
  }
}

}  // namespace
}  // namespace spikechain
