#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lnic/frame.hpp"
#include "lnic/ir.hpp"
#include "lnic/nic_spec.hpp"

namespace lnic::fw {

/// Extraction plan for one application header schema.
struct ParseNode {
  std::string schema;
  std::vector<std::string> fields;  // fields actually extracted
  struct Condition {
    std::uint32_t workload_id;
    std::uint32_t payload_offset;
    bool operator==(const Condition&) const = default;
  };
  std::vector<Condition> conditions;
  bool operator==(const ParseNode&) const = default;
};

struct ParseGraph {
  bool transport = true;  // the 22-byte transport header is always extracted
  std::vector<ParseNode> nodes;
  std::vector<std::string> warnings;

  const ParseNode* find(const std::string& schema) const;
};

struct RouteRow {
  std::uint32_t workload_id;
  std::uint32_t port;
  bool operator==(const RouteRow&) const = default;
};

struct DecisionBranch {
  std::uint32_t workload_id;
  std::string lambda;
  std::optional<std::uint32_t> route_row;  // row in the merged route table
  bool operator==(const DecisionBranch&) const = default;
};

/// Compiled match stage: compare chain on workload id ending in send-to-host.
struct DecisionTree {
  std::vector<DecisionBranch> chain;
  std::vector<RouteRow> routes;

  /// Lambda selected for `workload_id`, or nullopt for the send-to-host default.
  std::optional<std::string> dispatch(std::uint32_t workload_id) const;
};

struct PlacedObject {
  std::string owner;  // lambda name; "$system" for compiler-generated tables
  std::string name;
  std::uint32_t size = 0;
  Tier tier = Tier::kEmem;
  std::uint64_t base = 0;
  bool replicated = false;  // copied per core (LOCAL) or per island (CTM)
  bool operator==(const PlacedObject&) const = default;
};

struct PlacementMap {
  std::vector<PlacedObject> objects;

  const PlacedObject* find(const std::string& owner, const std::string& name) const;
  /// Bytes used in `tier` (highest extent).
  std::uint64_t used(Tier tier) const;
  bool operator==(const PlacementMap&) const = default;
};

inline constexpr const char* kSystemOwner = "$system";

// ---------------------------------------------------------------------------
// Machine code executed by every NIC core.

enum class MOp : std::uint8_t {
  kConst, kMov,
  kAdd, kSub, kMul, kDiv, kAnd, kOr, kXor, kShl, kShr, kMulSh, kDivSh,
  kJmp, kJeq, kJne, kJlt, kJge,
  kExtT,   // transport header -> PHV[0, 22)
  kExt,    // PHV[phv, phv+width) <- payload[pkt, pkt+width), zero-filled past the end
  kLdf, kStf,
  kLdm, kStm, kLdb, kStb,
  kMemcpy, kEmitPkt,
  kAddr,   // address setup for a shared-tier access
  kGuard,  // trap unless 0 <= off && off + extent <= bound
  kLdmd,
  kCall, kRet,
  kLCall,  // enter a lambda: clear registers, mark the frame, set the lambda context
  kExit,   // leave the current lambda with a return code
  kSetPort, kToHost, kDone,
};

std::string_view mop_name(MOp op);

enum class RegionKind : std::uint8_t { kGlobal, kPayload, kResp, kReply, kPhv, kTable };

struct Region {
  std::string owner;
  std::string name;
  RegionKind kind = RegionKind::kGlobal;
  Tier tier = Tier::kEmem;
  std::uint64_t base = 0;
  std::uint32_t size = 0;
  Bytes init;
};

// Fixed region ids for the per-request buffers.
inline constexpr int kRegionPayload = 0;
inline constexpr int kRegionResp = 1;
inline constexpr int kRegionReply = 2;
inline constexpr int kRegionPhv = 3;

struct MIns {
  MOp op = MOp::kDone;
  int rd = 0;
  ir::Operand a, b;
  std::uint32_t target = 0;  // absolute pc; lambda index for LCALL is in `imm`
  int region = -1, region2 = -1;
  std::int32_t disp = 0, disp2 = 0;  // static displacement added to the offsets
  ir::Operand off, off2;
  std::int64_t imm = 0;  // guard bound, EXT payload offset, LCALL lambda index, LDMD field
  std::uint32_t width = 0;
};

struct Firmware {
  std::vector<MIns> code;
  std::vector<std::pair<std::string, std::uint32_t>> symbols;  // name -> pc, in code order
  std::vector<Region> regions;
  std::vector<std::string> lambdas;  // lambda context index -> name
  std::vector<std::pair<std::string, std::uint32_t>> workload_ids;  // lambda -> id, match order
  PlacementMap placement;
  ParseGraph parse;
  DecisionTree tree;
  std::uint32_t phv_size = 0;
  int opt_level = 0;

  std::size_t total_instructions() const { return code.size(); }
  std::string listing() const;
  /// FNV-1a over the listing and region table.
  std::uint64_t digest() const;
  std::optional<std::uint32_t> workload_id(const std::string& lambda) const;
};

}  // namespace lnic::fw
