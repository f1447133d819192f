#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lnic/firmware.hpp"
#include "lnic/interp.hpp"
#include "lnic/sim.hpp"

namespace lnic::emu {

/// Reply to an outbound packet plus the round-trip time the issuing thread
/// stalls for.
struct RpcReply {
  Bytes reply;
  sim::Time latency = 0;
};
using RpcService = std::function<RpcReply(std::uint32_t endpoint, std::span<const std::uint8_t> request)>;

/// Byte-addressable tier memories, allocated lazily in pages.
class PhysicalMemory {
 public:
  static constexpr std::size_t kPage = 4096;

  void clear();
  void read(Tier tier, std::uint64_t addr, std::span<std::uint8_t> out) const;
  void write(Tier tier, std::uint64_t addr, std::span<const std::uint8_t> in);
  std::size_t resident_pages() const;

 private:
  using Page = std::array<std::uint8_t, kPage>;
  std::array<std::unordered_map<std::uint64_t, std::unique_ptr<Page>>, kNumTiers> pages_;
};

/// Checks every tier access against the region owned by the running lambda.
class RegionTracker {
 public:
  void reset(const fw::Firmware& firmware);
  /// True when [addr, addr+len) lies inside a region owned by `owner`.
  bool check(const std::string& owner, Tier tier, std::uint64_t addr, std::uint64_t len);

  std::uint64_t accesses() const { return accesses_; }
  /// Accesses that touched another lambda's region.
  std::uint64_t cross_lambda() const { return cross_lambda_; }
  /// Accesses that left the owner's regions (includes cross_lambda).
  std::uint64_t out_of_region() const { return out_of_region_; }

 private:
  struct Span {
    std::uint64_t base, end;
    std::string owner;
  };
  std::array<std::vector<Span>, kNumTiers> spans_;  // sorted by base
  std::uint64_t accesses_ = 0, cross_lambda_ = 0, out_of_region_ = 0;
};

/// Everything a core needs to run one request through the firmware.
struct MachineRequest {
  LambdaFrame header;   // transport fields; payload ignored
  const Bytes* payload = nullptr;
  bool payload_in_emem = false;  // RDMA-delivered
  MatchData match;
};

struct MachineResult {
  int lambda = -1;            // lambda context that ran, -1 for none
  std::int32_t rc = 0;        // lambda return code or trap code
  bool to_host = false;       // dispatch took the send-to-host default
  std::uint32_t port = 0;
  Bytes response;             // set when rc == FORWARD
  std::vector<ir::EmittedPacket> emitted;
  std::uint64_t instructions = 0;
  std::uint64_t cycles = 0;
  std::string trap;
};

struct MachineEnv {
  const NicSpec* nic = nullptr;
  PhysicalMemory* memory = nullptr;
  RegionTracker* tracker = nullptr;  // optional
  RpcService rpc;                    // optional; empty replies otherwise
};

/// Runs `req` through the firmware on one thread, to completion.
MachineResult execute(const fw::Firmware& firmware, const MachineRequest& req, const MachineEnv& env);

/// Writes every region's initial bytes into memory.
void initialize_memory(const fw::Firmware& firmware, PhysicalMemory& memory);

}  // namespace lnic::emu
