#pragma once

#include <string>
#include <vector>

#include "lnic/ir.hpp"

namespace lnic::ir {

struct Issue {
  std::string lambda;
  std::string function;
  int index = -1;  // instruction index within the function, -1 if n/a
  int line = 0;
  std::string message;
  std::vector<std::string> cycle;  // set for recursion errors
};

struct ValidationReport {
  std::vector<Issue> errors;
  std::vector<Issue> warnings;
  /// Lambdas containing float instructions; accepted, but must be lowered.
  std::vector<std::string> requires_lowering;

  bool ok() const { return errors.empty(); }
  std::string summary() const;
};

ValidationReport validate(const MLProgram& prog);
/// Validates one lambda against the given header schemas.
ValidationReport validate_lambda(const LambdaProgram& lambda, const std::vector<HeaderSchema>& schemas);

/// Throws IrError carrying the report summary when validation fails.
void require_valid(const MLProgram& prog);

/// Reads/writes per object, counted statically over all instructions.
struct AccessCount {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
};
std::vector<std::pair<std::string, AccessCount>> static_access_counts(const LambdaProgram& lambda);

}  // namespace lnic::ir
