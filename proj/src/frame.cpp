#include "lnic/frame.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace lnic {

std::uint64_t load_be(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v = (v << 8) | bytes[offset + i];
  return v;
}

void store_be(std::span<std::uint8_t> bytes, std::size_t offset, std::size_t width, std::uint64_t value) {
  for (std::size_t i = 0; i < width; ++i) {
    bytes[offset + width - 1 - i] = static_cast<std::uint8_t>(value & 0xFF);
    value >>= 8;
  }
}

Bytes encode_frame(const LambdaFrame& frame, std::size_t mtu) {
  if (frame.total == 0 || frame.seq >= frame.total)
    throw FrameError("frame seq " + std::to_string(frame.seq) + " outside total " +
                     std::to_string(frame.total));
  if (frame.payload.size() > 0xFFFF) throw FrameError("payload exceeds 16-bit length field");
  if (frame.wire_size() > mtu)
    throw FrameError("frame of " + std::to_string(frame.wire_size()) + " bytes exceeds MTU " +
                     std::to_string(mtu));

  Bytes out(frame.wire_size());
  std::span<std::uint8_t> s(out);
  store_be(s, 0, 2, kFrameMagic);
  out[2] = kFrameVersion;
  out[3] = frame.flags;
  store_be(s, 4, 4, frame.workload_id);
  store_be(s, 8, 8, frame.request_id);
  store_be(s, 16, 2, frame.seq);
  store_be(s, 18, 2, frame.total);
  store_be(s, 20, 2, frame.payload.size());
  std::copy(frame.payload.begin(), frame.payload.end(), out.begin() + kFrameHeaderSize);
  return out;
}

LambdaFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) throw FrameError("malformed frame: short header");
  if (load_be(bytes, 0, 2) != kFrameMagic) throw FrameError("malformed frame: bad magic");
  if (bytes[2] != kFrameVersion) throw FrameError("malformed frame: bad version");
  LambdaFrame f;
  f.flags = bytes[3];
  f.workload_id = static_cast<std::uint32_t>(load_be(bytes, 4, 4));
  f.request_id = load_be(bytes, 8, 8);
  f.seq = static_cast<std::uint16_t>(load_be(bytes, 16, 2));
  f.total = static_cast<std::uint16_t>(load_be(bytes, 18, 2));
  const auto len = static_cast<std::size_t>(load_be(bytes, 20, 2));
  if (f.total == 0 || f.seq >= f.total) throw FrameError("malformed frame: seq outside total");
  if (bytes.size() < kFrameHeaderSize + len) throw FrameError("malformed frame: truncated payload");
  f.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.begin() + kFrameHeaderSize + len);
  return f;
}

std::vector<LambdaFrame> split_message(std::uint32_t workload_id, std::uint64_t request_id,
                                       std::span<const std::uint8_t> payload, std::uint8_t flags,
                                       std::size_t mtu) {
  if (mtu <= kFrameHeaderSize) throw FrameError("MTU too small for the frame header");
  const std::size_t chunk = mtu - kFrameHeaderSize;
  const std::size_t count = payload.empty() ? 1 : (payload.size() + chunk - 1) / chunk;
  if (count > 0xFFFF) throw FrameError("message needs more than 65535 frames");
  std::vector<LambdaFrame> frames;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LambdaFrame f;
    f.flags = flags;
    f.workload_id = workload_id;
    f.request_id = request_id;
    f.seq = static_cast<std::uint16_t>(i);
    f.total = static_cast<std::uint16_t>(count);
    const std::size_t begin = i * chunk;
    const std::size_t end = std::min(payload.size(), begin + chunk);
    f.payload.assign(payload.begin() + begin, payload.begin() + end);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::uint32_t HeaderSchema::total_width() const {
  std::uint32_t w = 0;
  for (const auto& f : fields) w += f.width;
  return w;
}

std::optional<std::uint32_t> HeaderSchema::field_offset(const std::string& field) const {
  std::uint32_t off = 0;
  for (const auto& f : fields) {
    if (f.name == field) return off;
    off += f.width;
  }
  return std::nullopt;
}

const HeaderSchema::Field* HeaderSchema::find(const std::string& field) const {
  for (const auto& f : fields)
    if (f.name == field) return &f;
  return nullptr;
}

void HeaderSchema::check() const {
  std::set<std::string> seen;
  for (const auto& f : fields) {
    if (f.width == 0) throw std::invalid_argument("header " + name + ": field " + f.name + " has zero width");
    if (!seen.insert(f.name).second)
      throw std::invalid_argument("header " + name + ": duplicate field " + f.name);
  }
}

bool Reassembler::add(const LambdaFrame& frame) {
  if (!started_) {
    started_ = true;
    request_id_ = frame.request_id;
    workload_id_ = frame.workload_id;
    total_ = frame.total;
    flags_ = frame.flags;
  } else if (frame.request_id != request_id_ || frame.workload_id != workload_id_ ||
             frame.total != total_) {
    throw FrameError("frame does not belong to this message");
  }
  if (frame.seq >= total_) throw FrameError("frame seq outside total");
  return slots_.try_emplace(frame.seq, frame).second;
}

bool Reassembler::complete() const { return started_ && slots_.size() == total_; }

std::vector<std::uint16_t> Reassembler::missing() const {
  std::vector<std::uint16_t> out;
  for (std::uint16_t s = 0; s < total_; ++s)
    if (!slots_.contains(s)) out.push_back(s);
  return out;
}

std::optional<Message> Reassembler::take() {
  if (!complete()) return std::nullopt;
  Message m;
  m.request_id = request_id_;
  m.workload_id = workload_id_;
  m.direction = (flags_ & frame_flags::kResponse) ? Direction::kResponse : Direction::kRequest;
  for (auto& [seq, f] : slots_) {
    m.payload.insert(m.payload.end(), f.payload.begin(), f.payload.end());
    m.frames.push_back(std::move(f));
  }
  slots_.clear();
  started_ = false;
  return m;
}

std::optional<Message> assemble_message(std::span<const LambdaFrame> frames) {
  Reassembler r;
  for (const auto& f : frames) r.add(f);
  return r.take();
}

}  // namespace lnic
