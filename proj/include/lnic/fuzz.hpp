#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lnic/frame.hpp"
#include "lnic/ir.hpp"
#include "lnic/nic_spec.hpp"

namespace lnic::fuzz {

struct GenOptions {
  int max_lambdas = 3;
  int max_statements = 24;
  int max_loop_trips = 12;
  bool floats = true;
  bool rpc = true;
};

/// A random program that passes validation by construction: bounded loops,
/// forward-only conditional skips, no recursion and no arrival-time reads.
/// Some accesses use register offsets, so runtime bounds traps do occur.
ir::MLProgram random_program(std::uint64_t seed, const GenOptions& options = {});
std::string random_program_text(std::uint64_t seed, const GenOptions& options = {});

struct FuzzRequest {
  std::uint32_t workload_id = 0;
  std::uint32_t source = 0;
  Bytes payload;
};
std::vector<FuzzRequest> random_requests(const ir::MLProgram& prog, std::uint64_t seed, std::size_t count);

/// Deterministic RPC peer shared by the interpreter and the emulated core.
Bytes fuzz_rpc_reply(std::uint32_t endpoint, std::span<const std::uint8_t> request);

/// One program checked three ways: interpreter, opt-0 firmware, opt-1 firmware.
struct CaseResult {
  std::uint64_t seed = 0;
  std::size_t requests = 0;
  std::size_t traps = 0;      // requests that trapped (identically) in all three
  std::size_t forwards = 0;   // requests that produced a response
  bool agree = true;
  std::string mismatch;       // first disagreement, empty when agree
};

CaseResult check_case(std::uint64_t seed, std::size_t requests_per_program = 8, const NicSpec& nic = {},
                      const GenOptions& options = {});

struct BatchResult {
  std::vector<CaseResult> cases;  // in seed order
  std::size_t programs() const { return cases.size(); }
  std::size_t disagreements() const;
  std::size_t requests() const;
  std::size_t traps() const;
  std::size_t forwards() const;
};

/// Serial reference: seeds first_seed .. first_seed+count-1 in order.
BatchResult run_batch_serial(std::uint64_t first_seed, std::size_t count, std::size_t requests_per_program = 8);
/// Same cases fanned out over OpenMP threads; the result is identical to the
/// serial reference because every case owns its interpreter and emulator.
BatchResult run_batch_parallel(std::uint64_t first_seed, std::size_t count, std::size_t requests_per_program = 8);

}  // namespace lnic::fuzz
