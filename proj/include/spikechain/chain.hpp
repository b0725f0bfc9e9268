#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spikechain/events.hpp"

namespace spikechain {

struct ChainTaskSpec {
  int gestures = 3;        // N
  int length = 4;          // L
  bool repetition = true;  // consecutive repeats allowed
  double alpha1 = 0.5;
  double alpha2 = 0.7;
  int total_frames = 60;   // F_total
  std::uint64_t seed = 1;

  void validate() const;

  friend bool operator==(const ChainTaskSpec&, const ChainTaskSpec&) = default;
};

struct ChainClass {
  int id = 0;
  std::vector<int> labels;

  friend bool operator==(const ChainClass&, const ChainClass&) = default;
};

/// N^L with repetition, N (N-1)^(L-1) without. Throws kNoValidChains.
std::uint64_t count_classes(int gestures, int length, bool repetition);

/// Lexicographically ordered label sequences; id = position in the order.
std::vector<ChainClass> enumerate_classes(int gestures, int length, bool repetition);

/// Inverse of the enumeration. Returns -1 for sequences not in `classes`.
int class_id_of(std::span<const ChainClass> classes, std::span<const int> labels);

/// Initial per-gesture frame count F = (F_total / L) * 2 / (a1 + a2), unrounded.
double compute_initial_frames(int total_frames, int length, double alpha1, double alpha2);

struct DurationBounds {
  int initial = 0;  // F rounded to nearest
  int lo = 0;       // ceil(a1 F)
  int hi = 0;       // floor(a2 F)
};

DurationBounds duration_bounds(const ChainTaskSpec& spec);

/// L integer durations within the bounds summing exactly to F_total.
/// Throws kInfeasibleDuration naming the violated side.
std::vector<int> sample_durations(const ChainTaskSpec& spec, std::mt19937_64& rng);

/// Concatenates the first durations[g] frames of recordings[g].
FrameSequence build_chain(std::span<const FrameSequence* const> recordings,
                          std::span<const int> durations);

enum class Split { kTrain, kValidation, kTest };

const char* to_string(Split split);
Split split_from_string(const std::string& name);

struct SampleRecord {
  std::string path;
  int class_id = 0;
  std::string user;
  std::string lighting;
  std::vector<int> durations;
  Split split = Split::kTrain;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetManifest {
  ChainTaskSpec spec;
  std::vector<ChainClass> classes;
  std::vector<SampleRecord> samples;

  /// Throws kInvalidArgument if bounds, sums or subject disjointness fail.
  void validate() const;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

struct GenerateOptions {
  std::vector<std::string> test_users;
  int multiplier = 1;
  double validation_fraction = 0.2;
  bool binarize = false;
};

/// Manifest plus the chained frames, index-aligned with manifest.samples.
struct Dataset {
  DatasetManifest manifest;
  std::vector<FrameSequence> frames;
  std::vector<std::string> warnings;

  std::vector<const FrameSequence*> split(Split which) const;
  std::vector<int> labels(Split which) const;
};

Dataset generate_dataset(const ChainTaskSpec& spec, std::span<const EventStream> sources,
                         const GenerateOptions& options);

/// Writes DIR/manifest.json and DIR/frames/sample_NNNNNN.frs.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace spikechain
