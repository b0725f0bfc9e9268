#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikechain/events.hpp"

namespace spikechain {

enum class Shape { kBar, kCross, kRing };

/// Parametric stand-in for one recorded gesture class: a shape oscillating
/// along an axis. Distinct shapes keep classes separable from a single frame.
struct GestureArchetype {
  int id = 0;
  Shape shape = Shape::kBar;
  double size = 4.0;               // half extent of the shape, pixels
  double axis_angle = 0.0;         // oscillation direction, radians
  double angular_velocity = 0.03;  // rad per ms
  double amplitude = 2.5;          // oscillation amplitude, pixels
  double event_rate = 2.0;         // events per ms from a pixel an edge is sweeping
  double noise_rate = 0.2;         // uniform background events per ms, whole sensor
  double center_x = 0.0;           // offset from the sensor centre, pixels
  double center_y = 0.0;
};

/// Catalog entry for a gesture id: shape cycles bar/cross/ring, axis and speed
/// vary with id / 3.
GestureArchetype default_archetype(int id);

/// Deterministic for fixed arguments. Throws kShapeExceedsGeometry when the
/// swept shape does not fit, kInvalidArgument for bad geometry or duration.
EventStream synth_gesture(const GestureArchetype& archetype, double duration_ms,
                          std::uint32_t width, std::uint32_t height, std::uint64_t seed);

struct CorpusConfig {
  int gestures = 3;
  std::vector<std::string> users;
  std::vector<std::string> lightings = {"led", "natural"};
  double duration_ms = 300.0;
  std::uint32_t width = 16;
  std::uint32_t height = 16;
  std::uint64_t seed = 1;
  int threads = 1;  // output does not depend on this
};

/// One recording per (user, lighting, gesture). Users perturb position, speed
/// and phase; lighting scales the noise floor. Stream i uses seed + i.
std::vector<EventStream> synth_corpus(const CorpusConfig& config);

}  // namespace spikechain
