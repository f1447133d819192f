#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace lnic {

enum class Tier : std::uint8_t { kLocal = 0, kCtm = 1, kImem = 2, kEmem = 3 };
inline constexpr std::size_t kNumTiers = 4;
std::string_view tier_name(Tier t);

/// Static description of the emulated SmartNIC. Read from a flat
/// `key = value` file; unknown keys are rejected.
struct NicSpec {
  std::uint32_t islands = 7;
  std::uint32_t cores_per_island = 8;
  std::uint32_t threads_per_core = 8;
  std::uint32_t instruction_store = 16384;
  std::uint64_t clock_hz = 633'000'000;

  // LOCAL is per core, CTM per island, IMEM and EMEM shared.
  std::array<std::uint64_t, kNumTiers> capacity = {4ull << 10, 256ull << 10, 4ull << 20, 2ull << 30};
  std::array<std::uint32_t, kNumTiers> latency = {1, 50, 150, 300};

  std::uint64_t wire_latency_ns = 500;
  std::uint64_t downtime_ns = 200'000'000;
  std::uint64_t reassembly_timeout_ns = 10'000'000;
  std::uint32_t reorder_instructions_per_packet = 30;
  std::uint64_t rdma_pool_bytes = 64ull << 20;  // reserved at the top of EMEM
  std::uint64_t instruction_budget = 1'000'000;
  std::uint32_t mtu = 1500;

  // Size thresholds used by memory stratification for objects without pragma.
  std::uint32_t local_max_object = 256;
  std::uint32_t ctm_max_object = 8u << 10;
  std::uint32_t imem_max_object = 1u << 20;

  std::uint32_t cores() const { return islands * cores_per_island; }
  std::uint32_t threads() const { return cores() * threads_per_core; }
  std::uint64_t tier_capacity(Tier t) const { return capacity[static_cast<std::size_t>(t)]; }
  std::uint32_t tier_latency(Tier t) const { return latency[static_cast<std::size_t>(t)]; }
  /// EMEM bytes available to program objects.
  std::uint64_t emem_object_capacity() const { return capacity[3] - rdma_pool_bytes; }
  double cycles_to_ns(std::uint64_t cycles) const { return static_cast<double>(cycles) * 1e9 / static_cast<double>(clock_hz); }

  /// Throws std::invalid_argument on zero counts or non-increasing tiers.
  void check() const;

  static NicSpec parse(std::string_view text);
  static NicSpec load(const std::string& path);
  std::string to_text() const;
};

}  // namespace lnic
