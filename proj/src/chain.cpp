#include "spikechain/chain.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "spikechain/detail/byteio.hpp"
#include "spikechain/error.hpp"

namespace spikechain {

using nlohmann::json;

void ChainTaskSpec::validate() const {
  if (gestures < 1 || length < 1) {
    throw Error(ErrorCode::kInvalidArgument, "N and L must be >= 1");
  }
  if (!(alpha1 > 0.0 && alpha1 <= alpha2 && alpha2 <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "require 0 < alpha1 <= alpha2 <= 1");
  }
  if (total_frames < length) throw Error(ErrorCode::kInvalidArgument, "F_total must be >= L");
}

std::uint64_t count_classes(int gestures, int length, bool repetition) {
  if (gestures < 1 || length < 1) {
    throw Error(ErrorCode::kInvalidArgument, "N and L must be >= 1");
  }
  if (!repetition && gestures == 1 && length > 1) {
    throw Error(ErrorCode::kNoValidChains, "no valid chains");
  }
  std::uint64_t count = static_cast<std::uint64_t>(gestures);
  const std::uint64_t step = repetition ? gestures : gestures - 1;
  for (int i = 1; i < length; ++i) count *= step;
  return count;
}

std::vector<ChainClass> enumerate_classes(int gestures, int length, bool repetition) {
  const std::uint64_t expected = count_classes(gestures, length, repetition);
  std::vector<ChainClass> classes;
  classes.reserve(expected);
  std::vector<int> labels(length, 0);
  // Odometer over N^L in lexicographic order, skipping adjacent repeats.
  while (true) {
    bool ok = true;
    if (!repetition) {
      for (int i = 1; i < length && ok; ++i) ok = labels[i] != labels[i - 1];
    }
    if (ok) classes.push_back({static_cast<int>(classes.size()), labels});
    int pos = length - 1;
    while (pos >= 0 && ++labels[pos] == gestures) labels[pos--] = 0;
    if (pos < 0) break;
  }
  return classes;
}

int class_id_of(std::span<const ChainClass> classes, std::span<const int> labels) {
  auto it = std::lower_bound(classes.begin(), classes.end(), labels,
                             [](const ChainClass& c, std::span<const int> key) {
                               return std::lexicographical_compare(c.labels.begin(), c.labels.end(),
                                                                   key.begin(), key.end());
                             });
  if (it == classes.end() || !std::equal(it->labels.begin(), it->labels.end(), labels.begin(),
                                         labels.end())) {
    return -1;
  }
  return it->id;
}

double compute_initial_frames(int total_frames, int length, double alpha1, double alpha2) {
  return (static_cast<double>(total_frames) / length) * (2.0 / (alpha1 + alpha2));
}

DurationBounds duration_bounds(const ChainTaskSpec& spec) {
  spec.validate();
  DurationBounds b;
  b.initial = static_cast<int>(std::lround(
      compute_initial_frames(spec.total_frames, spec.length, spec.alpha1, spec.alpha2)));
  // Small tolerance so that e.g. 0.5 * 14 stays 7 despite rounding noise.
  b.lo = static_cast<int>(std::ceil(spec.alpha1 * b.initial - 1e-9));
  b.hi = static_cast<int>(std::floor(spec.alpha2 * b.initial + 1e-9));
  b.lo = std::max(b.lo, 1);
  return b;
}

std::vector<int> sample_durations(const ChainTaskSpec& spec, std::mt19937_64& rng) {
  const DurationBounds b = duration_bounds(spec);
  const int L = spec.length;
  if (static_cast<long>(L) * b.lo > spec.total_frames) {
    throw Error(ErrorCode::kInfeasibleDuration,
                fmt::format("infeasible duration constraint: lower bound L*{} > F_total={}", b.lo,
                            spec.total_frames));
  }
  if (static_cast<long>(L) * b.hi < spec.total_frames) {
    throw Error(ErrorCode::kInfeasibleDuration,
                fmt::format("infeasible duration constraint: upper bound L*{} < F_total={}", b.hi,
                            spec.total_frames));
  }
  std::vector<int> durations(L);
  int remaining = spec.total_frames;
  for (int g = 0; g < L; ++g) {
    const int left_after = L - g - 1;
    const int lo = std::max(b.lo, remaining - left_after * b.hi);
    const int hi = std::min(b.hi, remaining - left_after * b.lo);
    durations[g] = std::uniform_int_distribution<int>(lo, hi)(rng);
    remaining -= durations[g];
  }
  std::shuffle(durations.begin(), durations.end(), rng);
  return durations;
}

FrameSequence build_chain(std::span<const FrameSequence* const> recordings,
                          std::span<const int> durations) {
  if (recordings.empty() || recordings.size() != durations.size()) {
    throw Error(ErrorCode::kInvalidArgument, "need one duration per recording");
  }
  const FrameSequence& first = *recordings.front();
  std::uint32_t total = 0;
  for (std::size_t g = 0; g < recordings.size(); ++g) {
    const FrameSequence& r = *recordings[g];
    if (r.meta.user != first.meta.user || r.meta.lighting != first.meta.lighting) {
      throw Error(ErrorCode::kHeterogeneousSources, "heterogeneous chain sources");
    }
    if (r.channels() != first.channels() || r.height() != first.height() ||
        r.width() != first.width()) {
      throw Error(ErrorCode::kGeometryMismatch, "chain sources differ in geometry");
    }
    if (durations[g] < 0 || static_cast<std::uint32_t>(durations[g]) > r.frames()) {
      throw Error(ErrorCode::kInsufficientFrames,
                  fmt::format("recording {} has {} frames, {} requested", g, r.frames(),
                              durations[g]));
    }
    total += static_cast<std::uint32_t>(durations[g]);
  }
  FrameSequence out(total, first.channels(), first.height(), first.width());
  out.meta = first.meta;
  out.meta.gesture = -1;
  std::uint32_t t = 0;
  for (std::size_t g = 0; g < recordings.size(); ++g) {
    out.boundaries.push_back(t);
    const std::size_t n = static_cast<std::size_t>(durations[g]) * first.frame_size();
    std::copy_n(recordings[g]->frame(0), n, out.frame(t));
    t += static_cast<std::uint32_t>(durations[g]);
  }
  return out;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation" || name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + name + "'");
}

void DatasetManifest::validate() const {
  const DurationBounds b = duration_bounds(spec);
  std::set<std::string> train_users, test_users;
  for (const SampleRecord& s : samples) {
    if (static_cast<int>(s.durations.size()) != spec.length) {
      throw Error(ErrorCode::kInvalidArgument, "sample has wrong number of durations");
    }
    int sum = 0;
    for (int d : s.durations) {
      if (d < b.lo || d > b.hi) throw Error(ErrorCode::kInvalidArgument, "duration out of bounds");
      sum += d;
    }
    if (sum != spec.total_frames) throw Error(ErrorCode::kInvalidArgument, "durations sum mismatch");
    if (s.class_id < 0 || s.class_id >= static_cast<int>(classes.size())) {
      throw Error(ErrorCode::kInvalidArgument, "class id out of range");
    }
    (s.split == Split::kTest ? test_users : train_users).insert(s.user);
  }
  for (const auto& u : test_users) {
    if (train_users.contains(u)) {
      throw Error(ErrorCode::kInvalidArgument, "user '" + u + "' appears in train and test");
    }
  }
}

std::string DatasetManifest::to_json() const {
  json doc;
  doc["spec"] = {{"n", spec.gestures},         {"l", spec.length},
                 {"repetition", spec.repetition}, {"alpha1", spec.alpha1},
                 {"alpha2", spec.alpha2},       {"f_total", spec.total_frames},
                 {"seed", spec.seed}};
  json cls = json::object();
  for (const ChainClass& c : classes) cls[std::to_string(c.id)] = c.labels;
  doc["classes"] = std::move(cls);
  json rows = json::array();
  for (const SampleRecord& s : samples) {
    rows.push_back({{"path", s.path},
                    {"class_id", s.class_id},
                    {"user", s.user},
                    {"lighting", s.lighting},
                    {"durations", s.durations},
                    {"split", to_string(s.split)}});
  }
  doc["samples"] = std::move(rows);
  return doc.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json doc = json::parse(text);
    const json& s = doc.at("spec");
    m.spec.gestures = s.at("n").get<int>();
    m.spec.length = s.at("l").get<int>();
    m.spec.repetition = s.at("repetition").get<bool>();
    m.spec.alpha1 = s.at("alpha1").get<double>();
    m.spec.alpha2 = s.at("alpha2").get<double>();
    m.spec.total_frames = s.at("f_total").get<int>();
    m.spec.seed = s.at("seed").get<std::uint64_t>();
    const json& cls = doc.at("classes");
    m.classes.resize(cls.size());
    for (const auto& [key, labels] : cls.items()) {
      const int id = std::stoi(key);
      if (id < 0 || id >= static_cast<int>(m.classes.size())) {
        throw Error(ErrorCode::kInvalidArgument, "class id out of range in manifest");
      }
      m.classes[id] = ChainClass{id, labels.get<std::vector<int>>()};
    }
    for (const json& row : doc.at("samples")) {
      SampleRecord r;
      r.path = row.at("path").get<std::string>();
      r.class_id = row.at("class_id").get<int>();
      r.user = row.at("user").get<std::string>();
      r.lighting = row.at("lighting").get<std::string>();
      r.durations = row.at("durations").get<std::vector<int>>();
      r.split = split_from_string(row.at("split").get<std::string>());
      m.samples.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::vector<const FrameSequence*> Dataset::split(Split which) const {
  std::vector<const FrameSequence*> out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    if (manifest.samples[i].split == which) out.push_back(&frames[i]);
  }
  return out;
}

std::vector<int> Dataset::labels(Split which) const {
  std::vector<int> out;
  for (const SampleRecord& s : manifest.samples) {
    if (s.split == which) out.push_back(s.class_id);
  }
  return out;
}

Dataset generate_dataset(const ChainTaskSpec& spec, std::span<const EventStream> sources,
                         const GenerateOptions& options) {
  spec.validate();
  if (options.test_users.empty()) throw Error(ErrorCode::kEmptyTestUsers, "empty test user set");
  if (options.multiplier < 1) throw Error(ErrorCode::kInvalidArgument, "multiplier must be >= 1");
  const DurationBounds bounds = duration_bounds(spec);

  Dataset data;
  data.manifest.spec = spec;
  data.manifest.classes = enumerate_classes(spec.gestures, spec.length, spec.repetition);

  // (user, lighting) -> gesture -> source index
  std::map<std::pair<std::string, std::string>, std::map<int, std::size_t>> groups;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const StreamMeta& m = sources[i].meta;
    groups[{m.user, m.lighting}].emplace(m.gesture, i);
  }
  const std::set<std::string> test_users(options.test_users.begin(), options.test_users.end());

  std::vector<std::size_t> train_indices;
  std::uint64_t sample_index = 0;
  for (const auto& [key, by_gesture] : groups) {
    bool complete = true;
    for (int g = 0; g < spec.gestures && complete; ++g) complete = by_gesture.contains(g);
    if (!complete) {
      data.warnings.push_back("skipping user '" + key.first + "' lighting '" + key.second +
                              "': missing gestures");
      continue;
    }
    std::vector<FrameSequence> clips(spec.gestures);
    for (int g = 0; g < spec.gestures; ++g) {
      clips[g] = accumulate_frames(sources[by_gesture.at(g)], static_cast<std::uint32_t>(bounds.initial),
                                   options.binarize);
    }
    const bool is_test = test_users.contains(key.first);
    for (const ChainClass& cls : data.manifest.classes) {
      for (int k = 0; k < options.multiplier; ++k) {
        std::mt19937_64 rng(spec.seed + sample_index);
        std::vector<int> durations = sample_durations(spec, rng);
        std::vector<const FrameSequence*> parts;
        for (int label : cls.labels) parts.push_back(&clips[label]);
        FrameSequence chained = build_chain(parts, durations);
        chained.meta.gesture = cls.id;

        SampleRecord rec;
        rec.path = fmt::format("frames/sample_{:06}.frs", sample_index);
        rec.class_id = cls.id;
        rec.user = key.first;
        rec.lighting = key.second;
        rec.durations = std::move(durations);
        rec.split = is_test ? Split::kTest : Split::kTrain;
        if (!is_test) train_indices.push_back(data.manifest.samples.size());
        data.manifest.samples.push_back(std::move(rec));
        data.frames.push_back(std::move(chained));
        ++sample_index;
      }
    }
  }

  // Stratified validation draw: floor share per class, remainder handed to
  // randomly chosen classes, total = ceil(fraction * train count).
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i : train_indices) by_class[data.manifest.samples[i].class_id].push_back(i);
  const auto target = static_cast<std::size_t>(
      std::ceil(options.validation_fraction * static_cast<double>(train_indices.size()) - 1e-9));
  std::mt19937_64 rng(spec.seed ^ 0xA5A5A5A5DEADBEEFull);
  std::vector<std::pair<int, std::size_t>> quota;
  std::size_t assigned = 0;
  for (auto& [cls, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto share = static_cast<std::size_t>(
        std::floor(options.validation_fraction * static_cast<double>(members.size()) + 1e-9));
    quota.emplace_back(cls, share);
    assigned += share;
  }
  std::vector<std::size_t> order(quota.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; assigned < target && !order.empty(); i = (i + 1) % order.size()) {
    auto& [cls, share] = quota[order[i]];
    if (share < by_class[cls].size()) {
      ++share;
      ++assigned;
    }
  }
  for (const auto& [cls, share] : quota) {
    for (std::size_t j = 0; j < share; ++j) {
      data.manifest.samples[by_class[cls][j]].split = Split::kValidation;
    }
  }

  data.manifest.validate();
  return data;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    write_frames(dataset.frames[i], dir / dataset.manifest.samples[i].path);
  }
  detail::write_file(dir / "manifest.json", dataset.manifest.to_json());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.manifest = DatasetManifest::from_json(detail::read_file(dir / "manifest.json"));
  data.manifest.validate();
  for (const SampleRecord& s : data.manifest.samples) {
    FrameSequence f = read_frames(dir / s.path);
    f.meta.user = s.user;
    f.meta.lighting = s.lighting;
    f.meta.gesture = s.class_id;
    std::uint32_t t = 0;
    for (int d : s.durations) {
      f.boundaries.push_back(t);
      t += static_cast<std::uint32_t>(d);
    }
    data.frames.push_back(std::move(f));
  }
  return data;
}

}  // namespace spikechain
