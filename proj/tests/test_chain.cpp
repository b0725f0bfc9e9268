#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "spikechain/chain.hpp"
#include "spikechain/error.hpp"
#include "spikechain/synth.hpp"

namespace spikechain {
namespace {

// Every sequence over {0..N-1} of length L, filtered, in lexicographic order.
std::vector<std::vector<int>> brute_sequences(int n, int l, bool repetition) {
  std::vector<std::vector<int>> out;
  std::vector<int> seq(l, 0);
  while (true) {
    bool ok = true;
    for (int i = 1; i < l && !repetition; ++i) ok = ok && seq[i] != seq[i - 1];
    if (ok) out.push_back(seq);
    int pos = l - 1;
    while (pos >= 0 && ++seq[pos] == n) seq[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

TEST(ChainClasses, PaperCounts) {
  EXPECT_EQ(count_classes(3, 4, true), 81u);
  EXPECT_EQ(count_classes(3, 6, false), 96u);
}

TEST(ChainClasses, EnumerationMatchesBruteForce) {
  for (int n = 1; n <= 5; ++n) {
    for (int l = 1; l <= 6; ++l) {
      for (bool rep : {true, false}) {
        if (n == 1 && l > 1 && !rep) {
          EXPECT_THROW(count_classes(n, l, rep), Error);
          continue;
        }
        const auto classes = enumerate_classes(n, l, rep);
        const auto oracle = brute_sequences(n, l, rep);
        ASSERT_EQ(classes.size(), count_classes(n, l, rep)) << n << " " << l << " " << rep;
        ASSERT_EQ(classes.size(), oracle.size());
        for (std::size_t i = 0; i < classes.size(); ++i) {
          EXPECT_EQ(classes[i].id, static_cast<int>(i));
          EXPECT_EQ(classes[i].labels, oracle[i]);
        }
      }
    }
  }
}

TEST(ChainClasses, IdRoundTrip) {
  const auto classes = enumerate_classes(4, 4, false);
  for (const auto& c : classes) EXPECT_EQ(class_id_of(classes, c.labels), c.id);
  const std::vector<int> repeated = {0, 0, 1, 2};
  EXPECT_EQ(class_id_of(classes, repeated), -1);
}

TEST(ChainClasses, NoValidChainsError) {
  try {
    count_classes(1, 3, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoValidChains);
  }
}

TEST(Durations, InitialFramesAndBounds) {
  ChainTaskSpec spec;
  spec.total_frames = 60;
  EXPECT_DOUBLE_EQ(compute_initial_frames(60, 4, 0.5, 0.7), 25.0);
  const auto b = duration_bounds(spec);
  EXPECT_EQ(b.initial, 25);
  EXPECT_EQ(b.lo, 13);
  EXPECT_EQ(b.hi, 17);
}

TEST(Durations, SumAndBoundsOverManyDraws) {
  ChainTaskSpec spec;
  spec.total_frames = 60;
  std::mt19937_64 rng(11);
  std::vector<std::map<int, int>> hist(4);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto d = sample_durations(spec, rng);
    ASSERT_EQ(d.size(), 4u);
    int sum = 0;
    for (int g = 0; g < 4; ++g) {
      ASSERT_GE(d[g], 13);
      ASSERT_LE(d[g], 17);
      sum += d[g];
      ++hist[g][d[g]];
    }
    ASSERT_EQ(sum, 60);
  }
  for (const auto& h : hist) {
    EXPECT_EQ(h.size(), 5u);
    for (const auto& [value, count] : h) {
      const double f = static_cast<double>(count) / draws;
      EXPECT_GE(f, 0.1) << value;
      EXPECT_LE(f, 0.4) << value;
    }
  }
}

TEST(Durations, InfeasibleSpecNamesSide) {
  ChainTaskSpec spec;
  spec.length = 4;
  spec.total_frames = 4;
  spec.alpha1 = 1.0;
  spec.alpha2 = 1.0;
  std::mt19937_64 rng(1);
  EXPECT_NO_THROW(sample_durations(spec, rng));
  spec.alpha1 = 0.99;
  spec.alpha2 = 0.99;
  try {
    sample_durations(spec, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleDuration);
  }
}

FrameSequence ramp(int frames, double base) {
  FrameSequence f(frames, 2, 2, 2);
  for (int t = 0; t < frames; ++t) f.at(t, 0, 0, 0) = base + t;
  return f;
}

TEST(BuildChain, ConcatenatesLeadingFrames) {
  const FrameSequence a = ramp(5, 0), b = ramp(5, 100);
  const std::vector<const FrameSequence*> rec = {&a, &b};
  const std::vector<int> d = {2, 3};
  const FrameSequence c = build_chain(rec, d);
  ASSERT_EQ(c.frames(), 5u);
  EXPECT_EQ(c.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(c.at(1, 0, 0, 0), 1.0);
  EXPECT_EQ(c.at(2, 0, 0, 0), 100.0);
  EXPECT_EQ(c.at(4, 0, 0, 0), 102.0);
}

TEST(BuildChain, InsufficientFrames) {
  const FrameSequence a = ramp(2, 0);
  const std::vector<const FrameSequence*> rec = {&a};
  const std::vector<int> d = {3};
  try {
    build_chain(rec, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientFrames);
  }
}

class SmallDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    CorpusConfig cc;
    cc.users = {"u1", "u2", "u3", "u4"};
    cc.duration_ms = 120.0;
    sources_ = new std::vector<EventStream>(synth_corpus(cc));
  }
  static void TearDownTestSuite() { delete sources_; }

  static ChainTaskSpec spec() {
    ChainTaskSpec s;
    s.gestures = 3;
    s.length = 3;
    s.total_frames = 24;
    s.seed = 5;
    return s;
  }
  static GenerateOptions options() {
    GenerateOptions o;
    o.test_users = {"u4"};
    return o;
  }
  static std::vector<EventStream>* sources_;
};
std::vector<EventStream>* SmallDataset::sources_ = nullptr;

TEST_F(SmallDataset, SplitsAreDisjointAndStratified) {
  const Dataset d = generate_dataset(spec(), *sources_, options());
  EXPECT_NO_THROW(d.manifest.validate());
  std::set<std::string> train_users, test_users;
  std::size_t n_train = 0, n_val = 0;
  for (const auto& s : d.manifest.samples) {
    if (s.split == Split::kTest) test_users.insert(s.user);
    else train_users.insert(s.user);
    n_train += s.split == Split::kTrain;
    n_val += s.split == Split::kValidation;
  }
  EXPECT_EQ(test_users, std::set<std::string>{"u4"});
  EXPECT_EQ(train_users.count("u4"), 0u);
  const std::size_t pool = n_train + n_val;
  EXPECT_EQ(n_val, static_cast<std::size_t>(std::ceil(0.2 * pool - 1e-9)));
  std::set<int> val_classes;
  for (const auto& s : d.manifest.samples)
    if (s.split == Split::kValidation) val_classes.insert(s.class_id);
  EXPECT_EQ(val_classes.size(), 27u);
  for (const auto& f : d.frames) EXPECT_EQ(f.frames(), 24u);
}

TEST_F(SmallDataset, Deterministic) {
  const Dataset a = generate_dataset(spec(), *sources_, options());
  const Dataset b = generate_dataset(spec(), *sources_, options());
  EXPECT_EQ(a.manifest.samples, b.manifest.samples);
  EXPECT_EQ(a.frames, b.frames);
}

TEST_F(SmallDataset, EmptyTestUsers) {
  GenerateOptions o = options();
  o.test_users.clear();
  try {
    generate_dataset(spec(), *sources_, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyTestUsers);
  }
}

TEST_F(SmallDataset, DiskRoundTrip) {
  const Dataset a = generate_dataset(spec(), *sources_, options());
  const auto dir = std::filesystem::temp_directory_path() / "spikechain_dataset_test";
  std::filesystem::remove_all(dir);
  write_dataset(a, dir);
  const Dataset b = read_dataset(dir);
  EXPECT_EQ(b.manifest.spec, a.manifest.spec);
  EXPECT_EQ(b.manifest.classes, a.manifest.classes);
  EXPECT_EQ(b.manifest.samples, a.manifest.samples);
  EXPECT_EQ(b.frames, a.frames);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace spikechain
