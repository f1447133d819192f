#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnic/firmware.hpp"
#include "lnic/ir.hpp"
#include "lnic/nic_spec.hpp"

namespace lnic::compiler {

class CompileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fw::ParseGraph infer_parse_graph(const ir::MLProgram& prog);

/// Throws CompileError on a duplicate workload id.
fw::DecisionTree reduce_match(const ir::MatchStage& stage);

struct CoalesceReport {
  std::size_t instructions_before = 0;
  std::size_t instructions_after = 0;
  std::size_t dead_functions = 0;
  std::size_t dead_instructions = 0;
  std::vector<std::string> helpers;  // shared helper names created
  std::size_t savings() const { return instructions_before - instructions_after; }
};

struct CoalesceResult {
  std::vector<ir::LambdaProgram> lambdas;
  std::vector<ir::Function> helpers;  // shared across lambdas, names start with "$h"
  CoalesceReport report;
};

CoalesceResult coalesce(std::span<const ir::LambdaProgram> lambdas);

/// Copies the helpers a coalesced lambda calls into it, making it
/// self-contained for the interpreter.
ir::LambdaProgram link_helpers(const ir::LambdaProgram& lambda, std::span<const ir::Function> helpers);

struct ObjectRequest {
  std::string owner;
  std::string name;
  std::uint32_t size = 0;
  ir::Pragma pragma = ir::Pragma::kNone;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
};

/// Tier placement by pragma and size; see README for the rule order.
/// Throws CompileError naming the objects that do not fit.
fw::PlacementMap stratify(std::span<const ObjectRequest> objects, const NicSpec& nic);
/// Everything in EMEM, declaration order.
fw::PlacementMap naive_placement(std::span<const ObjectRequest> objects, const NicSpec& nic);

/// Rewrites float instructions to Q16.16 integer forms.
ir::LambdaProgram lower_fixed_point(const ir::LambdaProgram& prog);

/// Adds GUARD before every global or header-field access whose bounds are
/// not statically known; throws CompileError on a provable violation.
ir::LambdaProgram insert_isolation_guards(const ir::LambdaProgram& prog, const fw::PlacementMap& placement);

struct CompileOptions {
  int opt_level = 1;
  bool guards = true;  // off only for isolation testing
};

struct PassTotal {
  std::string pass;
  std::size_t instructions = 0;
};

struct CompileReport {
  std::vector<PassTotal> passes;
  CoalesceReport coalesce;
  std::vector<std::string> warnings;
  std::vector<std::string> lowered;

  /// `pass,instructions` rows with a header line.
  std::string table() const;
  std::string summary() const;
};

struct CompileResult {
  fw::Firmware firmware;
  CompileReport report;
};

CompileResult compile(const ir::MLProgram& prog, const NicSpec& nic, const CompileOptions& options = {});

}  // namespace lnic::compiler
