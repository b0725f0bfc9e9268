#include "spikechain/events.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "spikechain/detail/byteio.hpp"
#include "spikechain/error.hpp"

namespace spikechain {

namespace detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + path.string());
}

}  // namespace detail

namespace {

constexpr std::string_view kEventMagic = "EVB1";
constexpr std::string_view kFrameMagic = "FRS1";

}  // namespace

void EventStream::validate() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.polarity > 1) throw Error(ErrorCode::kInvalidPolarity, "invalid polarity");
    if (e.x >= width || e.y >= height) {
      throw Error(ErrorCode::kInvalidArgument, "event outside sensor geometry");
    }
    if (i > 0 && e.t < events[i - 1].t) {
      throw Error(ErrorCode::kUnsortedTimestamps, "unsorted timestamps");
    }
  }
}

FrameSequence::FrameSequence(std::uint32_t frames, std::uint32_t channels,
                             std::uint32_t height, std::uint32_t width)
    : frames_(frames),
      channels_(channels),
      height_(height),
      width_(width),
      values_(static_cast<std::size_t>(frames) * channels * height * width, 0.0f) {}

double FrameSequence::channel_total(std::uint32_t c) const {
  double total = 0.0;
  for (std::uint32_t t = 0; t < frames_; ++t) {
    const float* p = frame(t) + static_cast<std::size_t>(c) * height_ * width_;
    for (std::size_t i = 0; i < static_cast<std::size_t>(height_) * width_; ++i) total += p[i];
  }
  return total;
}

FrameSequence accumulate_frames(const EventStream& stream, std::uint32_t frames, bool binarize) {
  if (stream.events.empty()) throw Error(ErrorCode::kEmptyStream, "empty stream");
  if (frames == 0) throw Error(ErrorCode::kInvalidArgument, "frame count must be >= 1");

  FrameSequence out(frames, FrameSequence::kChannels, stream.height, stream.width);
  out.meta = stream.meta;

  const std::uint64_t t0 = stream.events.front().t;
  const std::uint64_t span = stream.events.back().t - t0;
  for (const Event& e : stream.events) {
    std::uint32_t window = 0;
    if (span > 0) {
      const auto scaled = static_cast<unsigned __int128>(e.t - t0) * frames / span;
      window = static_cast<std::uint32_t>(std::min<unsigned __int128>(scaled, frames - 1));
    }
    float& cell = out.at(window, e.polarity, e.y, e.x);
    cell = binarize ? 1.0f : cell + 1.0f;
  }
  return out;
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put_bytes(kEventMagic);
  w.put<std::uint32_t>(stream.width);
  w.put<std::uint32_t>(stream.height);
  w.put<std::uint64_t>(stream.events.size());
  for (const Event& e : stream.events) {
    w.put<std::uint64_t>(e.t);
    w.put<std::uint16_t>(e.x);
    w.put<std::uint16_t>(e.y);
    w.put<std::uint8_t>(e.polarity);
    w.put<std::uint8_t>(0);
  }
  detail::write_file(path, w.bytes());
}

EventStream read_events(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader r(data);
  if (r.remaining() < 4 || r.get_bytes(4) != kEventMagic) {
    throw Error(ErrorCode::kBadMagic, "bad magic");
  }
  EventStream stream;
  stream.width = r.get<std::uint32_t>();
  stream.height = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  constexpr std::size_t kRecord = 14;
  if (count > r.remaining() / kRecord) {
    throw Error(ErrorCode::kTruncatedPayload, "truncated payload");
  }
  stream.events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.t = r.get<std::uint64_t>();
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.polarity = r.get<std::uint8_t>();
    r.get<std::uint8_t>();
    stream.events.push_back(e);
  }
  stream.validate();
  return stream;
}

void write_events_csv(const EventStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << "t,x,y,p\n";
  for (const Event& e : stream.events) {
    out << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.polarity) << '\n';
  }
}

namespace {

template <typename T>
T parse_field(std::string_view field, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kInvalidCsv,
                "invalid csv field '" + std::string(field) + "' on line " + std::to_string(line));
  }
  return value;
}

}  // namespace

EventStream read_events_csv(const std::filesystem::path& path, std::uint32_t width,
                            std::uint32_t height) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "t,x,y,p") {
    throw Error(ErrorCode::kInvalidCsv, "missing header t,x,y,p");
  }
  EventStream stream;
  stream.width = width;
  stream.height = height;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string_view rest(line);
    std::string_view fields[4];
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if ((i < 3) == (comma == std::string_view::npos)) {
        throw Error(ErrorCode::kInvalidCsv, "expected 4 fields on line " + std::to_string(lineno));
      }
      fields[i] = rest.substr(0, comma);
      rest = i < 3 ? rest.substr(comma + 1) : std::string_view{};
    }
    Event e;
    e.t = parse_field<std::uint64_t>(fields[0], lineno);
    e.x = parse_field<std::uint16_t>(fields[1], lineno);
    e.y = parse_field<std::uint16_t>(fields[2], lineno);
    const auto p = parse_field<unsigned>(fields[3], lineno);
    if (p > 1) throw Error(ErrorCode::kInvalidPolarity, "invalid polarity");
    e.polarity = static_cast<std::uint8_t>(p);
    stream.events.push_back(e);
  }
  stream.validate();
  return stream;
}

void write_frames(const FrameSequence& frames, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put_bytes(kFrameMagic);
  w.put<std::uint32_t>(frames.frames());
  w.put<std::uint32_t>(frames.channels());
  w.put<std::uint32_t>(frames.height());
  w.put<std::uint32_t>(frames.width());
  for (float v : frames.values()) w.put<float>(v);
  detail::write_file(path, w.bytes());
}

FrameSequence read_frames(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader r(data);
  if (r.remaining() < 4 || r.get_bytes(4) != kFrameMagic) {
    throw Error(ErrorCode::kBadMagic, "bad magic");
  }
  const auto t = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  const auto h = r.get<std::uint32_t>();
  const auto w = r.get<std::uint32_t>();
  const std::uint64_t n = static_cast<std::uint64_t>(t) * c * h * w;
  if (n > r.remaining() / 4) throw Error(ErrorCode::kTruncatedPayload, "truncated payload");
  FrameSequence out(t, c, h, w);
  for (float& v : out.values()) v = r.get<float>();
  return out;
}

}  // namespace spikechain
