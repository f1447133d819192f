#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lnic/frame.hpp"
#include "lnic/ir.hpp"

namespace lnic::ir {

inline constexpr std::uint64_t kDefaultInstructionBudget = 1'000'000;

/// Answers an EMITPKT: given the endpoint and request bytes, returns the reply.
using RpcHandler = std::function<Bytes(std::uint32_t endpoint, std::span<const std::uint8_t> request)>;

struct EmittedPacket {
  std::uint32_t endpoint = 0;
  Bytes bytes;
  bool operator==(const EmittedPacket&) const = default;
};

struct ExecResult {
  std::int32_t rc = 0;
  Bytes response;  // only populated when rc == kForward
  std::vector<EmittedPacket> emitted;
  std::uint64_t instructions = 0;
  std::string trap;  // empty unless a trap fired
};

/// The flat virtual address space of one lambda: its globals laid out back
/// to back in declaration order.
class FlatMemory {
 public:
  FlatMemory() = default;
  explicit FlatMemory(const LambdaProgram& prog);

  std::span<std::uint8_t> bytes() { return bytes_; }
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  /// Virtual base address of a global.
  std::uint32_t base(const std::string& object) const;
  std::span<const std::uint8_t> object(const std::string& name) const;

 private:
  Bytes bytes_;
  std::vector<std::pair<std::string, std::pair<std::uint32_t, std::uint32_t>>> layout_;
};

struct InterpOptions {
  std::uint64_t budget = kDefaultInstructionBudget;
  RpcHandler rpc;
};

/// Reference interpreter. Construction resolves names once so repeated runs
/// of the same program stay cheap.
class Interpreter {
 public:
  explicit Interpreter(const LambdaProgram& prog);
  ~Interpreter();
  Interpreter(Interpreter&&) noexcept;
  Interpreter& operator=(Interpreter&&) noexcept;

  ExecResult run(const Message& msg, const MatchData& md, FlatMemory& memory,
                 const InterpOptions& options = {}) const;

 private:
  struct Prepared;
  std::unique_ptr<Prepared> p_;
};

ExecResult interpret(const LambdaProgram& prog, const Message& msg, const MatchData& md, FlatMemory& memory,
                     const InterpOptions& options = {});

/// Q16.16 encoding of a constant; throws IrError outside [-32768, 32768).
std::int32_t to_q16(double value);

}  // namespace lnic::ir
