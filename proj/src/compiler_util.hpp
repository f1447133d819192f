#pragma once

// Internal helpers shared by the compiler passes.

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lnic/ir.hpp"

namespace lnic::compiler::detail {

/// Functions reachable from the entry through CALLs. Names not defined in
/// the lambda (shared helpers) are resolved through `helpers`.
std::set<std::string> reachable_functions(const ir::LambdaProgram& lambda,
                                          std::span<const ir::Function> helpers = {});

/// (schema, field) pairs touched by the given functions.
std::map<std::string, std::set<std::string>> used_fields(const ir::LambdaProgram& lambda,
                                                         const std::set<std::string>& functions,
                                                         std::span<const ir::Function> helpers = {});

const ir::Function* find_function(const ir::LambdaProgram& lambda, std::span<const ir::Function> helpers,
                                  const std::string& name);

}  // namespace lnic::compiler::detail
