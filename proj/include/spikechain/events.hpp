#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spikechain {

struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;  // 0 = OFF, 1 = ON

  friend bool operator==(const Event&, const Event&) = default;
};

struct StreamMeta {
  std::string user;
  std::string lighting;
  int gesture = 0;

  friend bool operator==(const StreamMeta&, const StreamMeta&) = default;
};

/// Time-ordered events on a W x H sensor.
struct EventStream {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<Event> events;
  StreamMeta meta;

  friend bool operator==(const EventStream&, const EventStream&) = default;

  /// Throws kUnsortedTimestamps / kInvalidPolarity / kInvalidArgument.
  void validate() const;
};

/// T x 2 x H x W event counts. Channel c holds events of polarity c.
class FrameSequence {
 public:
  static constexpr std::uint32_t kChannels = 2;

  FrameSequence() = default;
  FrameSequence(std::uint32_t frames, std::uint32_t channels, std::uint32_t height,
                std::uint32_t width);

  std::uint32_t frames() const { return frames_; }
  std::uint32_t channels() const { return channels_; }
  std::uint32_t height() const { return height_; }
  std::uint32_t width() const { return width_; }
  std::size_t frame_size() const {
    return static_cast<std::size_t>(channels_) * height_ * width_;
  }

  float& at(std::uint32_t t, std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return values_[index(t, c, y, x)];
  }
  float at(std::uint32_t t, std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return values_[index(t, c, y, x)];
  }

  const float* frame(std::uint32_t t) const { return values_.data() + t * frame_size(); }
  float* frame(std::uint32_t t) { return values_.data() + t * frame_size(); }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  /// Sum over (t, y, x) of one channel.
  double channel_total(std::uint32_t c) const;

  StreamMeta meta;
  /// Frame index where each chained segment starts (empty for raw clips).
  std::vector<std::uint32_t> boundaries;

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;

 private:
  std::size_t index(std::uint32_t t, std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return ((static_cast<std::size_t>(t) * channels_ + c) * height_ + y) * width_ + x;
  }

  std::uint32_t frames_ = 0;
  std::uint32_t channels_ = 0;
  std::uint32_t height_ = 0;
  std::uint32_t width_ = 0;
  std::vector<float> values_;
};

/// Splits [t_first, t_last] into `frames` equal windows (last one closed) and
/// counts events per (window, polarity, y, x). Boundary ties go to the later
/// window.
FrameSequence accumulate_frames(const EventStream& stream, std::uint32_t frames,
                                bool binarize = false);

void write_events(const EventStream& stream, const std::filesystem::path& path);
EventStream read_events(const std::filesystem::path& path);

void write_events_csv(const EventStream& stream, const std::filesystem::path& path);
/// CSV carries no geometry, so the caller supplies it.
EventStream read_events_csv(const std::filesystem::path& path, std::uint32_t width,
                            std::uint32_t height);

void write_frames(const FrameSequence& frames, const std::filesystem::path& path);
FrameSequence read_frames(const std::filesystem::path& path);

}  // namespace spikechain
