#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lnic {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint16_t kFrameMagic = 0xD41C;
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 22;
inline constexpr std::size_t kDefaultMtu = 1500;

namespace frame_flags {
inline constexpr std::uint8_t kResponse = 0x01;
inline constexpr std::uint8_t kRdmaWrite = 0x02;
inline constexpr std::uint8_t kEventTrigger = 0x04;
}  // namespace frame_flags

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One datagram of the lambda transport. Header layout (big-endian):
///   magic:2 version:1 flags:1 workload_id:4 request_id:8 seq:2 total:2 payload_len:2
struct LambdaFrame {
  std::uint8_t flags = 0;
  std::uint32_t workload_id = 0;
  std::uint64_t request_id = 0;
  std::uint16_t seq = 0;
  std::uint16_t total = 1;
  Bytes payload;

  bool is_response() const { return flags & frame_flags::kResponse; }
  bool is_rdma_write() const { return flags & frame_flags::kRdmaWrite; }
  bool is_event_trigger() const { return flags & frame_flags::kEventTrigger; }
  std::size_t wire_size() const { return kFrameHeaderSize + payload.size(); }

  bool operator==(const LambdaFrame&) const = default;
};

Bytes encode_frame(const LambdaFrame& frame, std::size_t mtu = kDefaultMtu);
LambdaFrame decode_frame(std::span<const std::uint8_t> bytes);

/// Splits `payload` into frames that each fit in `mtu`. An empty payload
/// still produces one frame.
std::vector<LambdaFrame> split_message(std::uint32_t workload_id, std::uint64_t request_id,
                                       std::span<const std::uint8_t> payload, std::uint8_t flags,
                                       std::size_t mtu = kDefaultMtu);

/// A named application header. Fields are laid out back to back in
/// declaration order; numeric fields are big-endian on the wire.
struct HeaderSchema {
  struct Field {
    std::string name;
    std::uint32_t width = 0;
    bool operator==(const Field&) const = default;
  };

  std::string name;
  std::vector<Field> fields;

  std::uint32_t total_width() const;
  std::optional<std::uint32_t> field_offset(const std::string& field) const;
  const Field* find(const std::string& field) const;
  /// Throws std::invalid_argument when field names repeat or a width is zero.
  void check() const;

  bool operator==(const HeaderSchema&) const = default;
};

enum class Direction : std::uint8_t { kRequest, kResponse };

struct Message {
  std::uint64_t request_id = 0;
  std::uint32_t workload_id = 0;
  Direction direction = Direction::kRequest;
  std::vector<LambdaFrame> frames;  // sorted by seq, one per seq
  Bytes payload;

  bool operator==(const Message&) const = default;
};

/// Read-only ingress metadata handed to a lambda.
struct MatchData {
  std::uint32_t source_endpoint = 0;
  std::uint64_t arrival_ns = 0;
  std::uint32_t payload_len = 0;
};

/// Orders frames by seq, keeping the first arrival of each seq. Returns
/// nullopt while any seq in [0, total) is missing. Throws FrameError when
/// the frames disagree on (request_id, workload_id, total).
std::optional<Message> assemble_message(std::span<const LambdaFrame> frames);

/// Incremental form of assemble_message for frames arriving one at a time.
class Reassembler {
 public:
  /// Returns true if the frame filled a new seq slot.
  bool add(const LambdaFrame& frame);
  bool complete() const;
  std::size_t received() const { return slots_.size(); }
  std::uint16_t total() const { return total_; }
  std::vector<std::uint16_t> missing() const;
  std::optional<Message> take();

 private:
  bool started_ = false;
  std::uint64_t request_id_ = 0;
  std::uint32_t workload_id_ = 0;
  std::uint16_t total_ = 0;
  std::uint8_t flags_ = 0;
  std::map<std::uint16_t, LambdaFrame> slots_;
};

// Big-endian helpers shared by the header parser and the KV wire format.
std::uint64_t load_be(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width);
void store_be(std::span<std::uint8_t> bytes, std::size_t offset, std::size_t width, std::uint64_t value);

}  // namespace lnic
