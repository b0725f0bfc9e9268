#include "spikechain/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

#include "spikechain/error.hpp"

namespace spikechain {

namespace {

constexpr double kTickMs = 0.5;
constexpr double kHalfThickness = 0.9;

// Signed distance from a point (relative to the shape centre) to the shape
// boundary; negative inside.
double signed_distance(Shape shape, double size, double px, double py) {
  auto box = [](double x, double y, double hx, double hy) {
    const double dx = std::abs(x) - hx;
    const double dy = std::abs(y) - hy;
    const double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
    return outside + std::min(std::max(dx, dy), 0.0);
  };
  switch (shape) {
    case Shape::kBar:
      return box(px, py, size, kHalfThickness);
    case Shape::kCross:
      return std::min(box(px, py, size, kHalfThickness), box(px, py, kHalfThickness, size));
    case Shape::kRing:
      return std::abs(std::hypot(px, py) - (size - kHalfThickness)) - kHalfThickness;
  }
  return 1.0;
}

}  // namespace

GestureArchetype default_archetype(int id) {
  if (id < 0) throw Error(ErrorCode::kInvalidArgument, "archetype id must be >= 0");
  GestureArchetype a;
  a.id = id;
  const int variant = id / 3;
  switch (id % 3) {
    case 0:
      a.shape = Shape::kBar;
      a.axis_angle = std::numbers::pi / 2;
      break;
    case 1:
      a.shape = Shape::kCross;
      a.axis_angle = 0.0;
      a.size = 3.5;
      break;
    default:
      a.shape = Shape::kRing;
      a.axis_angle = std::numbers::pi / 4;
      a.size = 3.5;
      break;
  }
  a.axis_angle += variant * std::numbers::pi / 3;
  a.angular_velocity = 0.03 * (1.0 + 0.5 * variant);
  return a;
}

EventStream synth_gesture(const GestureArchetype& archetype, double duration_ms,
                          std::uint32_t width, std::uint32_t height, std::uint64_t seed) {
  if (width < 8 || height < 8) {
    throw Error(ErrorCode::kInvalidArgument, "geometry must be at least 8x8");
  }
  if (!(duration_ms > 0.0)) throw Error(ErrorCode::kInvalidArgument, "duration must be > 0");

  const double cx = width / 2.0 + archetype.center_x;
  const double cy = height / 2.0 + archetype.center_y;
  const double reach = archetype.size + std::abs(archetype.amplitude);
  if (cx - reach < 0.0 || cy - reach < 0.0 || cx + reach > width || cy + reach > height) {
    throw Error(ErrorCode::kShapeExceedsGeometry, "shape exceeds geometry");
  }

  EventStream stream;
  stream.width = width;
  stream.height = height;
  stream.meta.gesture = archetype.id;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double ux = std::cos(archetype.axis_angle);
  const double uy = std::sin(archetype.axis_angle);

  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  auto render = [&](double t_ms, std::vector<double>& intensity) {
    const double offset = archetype.amplitude * std::sin(archetype.angular_velocity * t_ms + phase);
    const double sx = cx + offset * ux;
    const double sy = cy + offset * uy;
    for (std::uint32_t y = 0; y < height; ++y) {
      for (std::uint32_t x = 0; x < width; ++x) {
        const double d = signed_distance(archetype.shape, archetype.size, x + 0.5 - sx, y + 0.5 - sy);
        intensity[y * width + x] = std::clamp(0.5 - d, 0.0, 1.0);
      }
    }
  };

  std::vector<double> previous(pixels), current(pixels);
  render(0.0, previous);
  const auto ticks = static_cast<std::size_t>(std::ceil(duration_ms / kTickMs));
  const double tick_us = kTickMs * 1000.0;
  const double noise_mean = archetype.noise_rate * kTickMs;
  for (std::size_t k = 1; k <= ticks; ++k) {
    const double t_ms = std::min(k * kTickMs, duration_ms);
    render(t_ms, current);
    const double start_us = (k - 1) * tick_us;
    auto stamp = [&] {
      return static_cast<std::uint64_t>(start_us + unit(rng) * tick_us);
    };
    if (archetype.event_rate > 0.0) {
      for (std::size_t i = 0; i < pixels; ++i) {
        const double change = current[i] - previous[i];
        if (std::abs(change) < 1e-9) continue;
        const double mean = archetype.event_rate * kTickMs * std::min(1.0, 4.0 * std::abs(change));
        const int count = std::poisson_distribution<int>(mean)(rng);
        for (int n = 0; n < count; ++n) {
          stream.events.push_back(Event{stamp(), static_cast<std::uint16_t>(i % width),
                                        static_cast<std::uint16_t>(i / width),
                                        static_cast<std::uint8_t>(change > 0 ? 1 : 0)});
        }
      }
    }
    if (noise_mean > 0.0) {
      const int count = std::poisson_distribution<int>(noise_mean)(rng);
      for (int n = 0; n < count; ++n) {
        const auto pixel = static_cast<std::size_t>(unit(rng) * pixels) % pixels;
        stream.events.push_back(Event{stamp(), static_cast<std::uint16_t>(pixel % width),
                                      static_cast<std::uint16_t>(pixel / width),
                                      static_cast<std::uint8_t>(unit(rng) < 0.5 ? 1 : 0)});
      }
    }
    std::swap(previous, current);
  }
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return stream;
}

std::vector<EventStream> synth_corpus(const CorpusConfig& config) {
  if (config.gestures < 1) throw Error(ErrorCode::kInvalidArgument, "gestures must be >= 1");
  struct Job {
    GestureArchetype archetype;
    std::size_t user, lighting;
  };
  std::vector<Job> jobs;
  for (std::size_t u = 0; u < config.users.size(); ++u) {
    // Per-user style, fixed across that user's gestures and lightings.
    std::mt19937_64 style(config.seed ^ (0x9E3779B97F4A7C15ull * (u + 1)));
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    const double dx = 0.5 * jitter(style);
    const double dy = 0.5 * jitter(style);
    const double speed = 1.0 + 0.2 * jitter(style);
    for (std::size_t l = 0; l < config.lightings.size(); ++l) {
      for (int g = 0; g < config.gestures; ++g) {
        GestureArchetype a = default_archetype(g);
        a.center_x = dx;
        a.center_y = dy;
        a.angular_velocity *= speed;
        a.noise_rate *= 1.0 + static_cast<double>(l);
        jobs.push_back({a, u, l});
      }
    }
  }
  std::vector<EventStream> corpus(jobs.size());
  auto run = [&](std::size_t i) {
    corpus[i] = synth_gesture(jobs[i].archetype, config.duration_ms, config.width, config.height,
                              config.seed + i);
    corpus[i].meta.user = config.users[jobs[i].user];
    corpus[i].meta.lighting = config.lightings[jobs[i].lighting];
  };
  const std::size_t workers = std::clamp<std::size_t>(config.threads, 1, std::max<std::size_t>(jobs.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
    return corpus;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < jobs.size();) {
        try {
          run(i);
        } catch (...) {
          std::lock_guard lock(failure_lock);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return corpus;
}

}  // namespace spikechain
