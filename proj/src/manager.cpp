#include <algorithm>

#include "lnic/control.hpp"
#include "lnic/validate.hpp"

namespace lnic::cp {

ir::MLProgram merge_programs(const ir::MLProgram& base, const ir::MLProgram& add) {
  ir::MLProgram out = base;
  for (const auto& h : add.headers) {
    if (const auto* existing = out.find_header(h.name)) {
      if (!(*existing == h)) throw DeployError("header " + h.name + " redefined with a different layout");
      continue;
    }
    out.headers.push_back(h);
  }
  for (const auto& l : add.lambdas) {
    auto it = std::find_if(out.lambdas.begin(), out.lambdas.end(), [&](const auto& x) { return x.name == l.name; });
    if (it != out.lambdas.end()) *it = l;
    else out.lambdas.push_back(l);
    std::erase_if(out.match.rules, [&](const auto& r) { return r.lambda == l.name; });
  }
  for (const auto& r : add.match.rules) out.match.rules.push_back(r);
  return out;
}

WorkloadManager::WorkloadManager(sim::Scheduler& sched, Registry& registry, Gateway& gateway,
                                 compiler::CompileOptions options)
    : sched_(sched), registry_(registry), gateway_(gateway), options_(options) {}

void WorkloadManager::add_node(const std::string& name, emu::NicEmulator* nic, HostBackend* host) {
  if (nodes_.contains(name)) throw DeployError("node " + name + " already registered");
  nodes_[name] = Node{nic, host, {}};
}

const ir::MLProgram& WorkloadManager::program(const std::string& node) const {
  const auto it = nodes_.find(node);
  if (it == nodes_.end()) throw DeployError("unknown node " + node);
  return it->second.program;
}

DeployResult WorkloadManager::deploy(const ir::MLProgram& input, const std::vector<std::string>& nodes,
                                     const std::string& source, bool factory) {
  if (nodes.empty()) throw DeployError("deploy needs at least one node");
  for (const auto& n : nodes)
    if (!nodes_.contains(n)) throw DeployError("unknown node " + n);
  const auto report = ir::validate(input);
  if (!report.ok()) throw DeployError("invalid program:\n" + report.summary());

  // Tentative ids; the registry is only written once everything compiled.
  ir::MLProgram prog = input;
  DeployResult result;
  std::uint32_t next = registry_.next_id();
  std::vector<std::string> fresh;
  for (const auto& l : prog.lambdas) {
    if (std::count_if(prog.match.rules.begin(), prog.match.rules.end(), [&](const auto& r) { return r.lambda == l.name; }) > 1)
      throw DeployError("lambda " + l.name + " has more than one match rule");
    if (const auto e = registry_.find(l.name)) {
      result.ids[l.name] = e->workload_id;
    } else {
      result.ids[l.name] = next++;
      fresh.push_back(l.name);
    }
  }
  for (auto& r : prog.match.rules) r.workload_id = result.ids.at(r.lambda);
  for (const auto& l : prog.lambdas) {
    const bool has_rule = std::any_of(prog.match.rules.begin(), prog.match.rules.end(), [&](const auto& r) { return r.lambda == l.name; });
    if (!has_rule) prog.match.rules.push_back({result.ids.at(l.name), l.name, std::nullopt});
  }

  std::map<std::string, ir::MLProgram> merged;
  std::map<std::string, compiler::CompileResult> built;
  try {
    for (const auto& n : nodes) {
      merged[n] = merge_programs(nodes_.at(n).program, prog);
      built[n] = compiler::compile(merged[n], nodes_.at(n).nic ? nodes_.at(n).nic->spec() : NicSpec{}, options_);
    }
  } catch (const compiler::CompileError& e) {
    throw DeployError(std::string("compile failed: ") + e.what());
  } catch (const ir::IrError& e) {
    throw DeployError(std::string("compile failed: ") + e.what());
  }

  sim::Time ready = sched_.now();
  for (const auto& n : nodes) {
    Node& node = nodes_.at(n);
    try {
      if (node.nic) {
        if (factory) node.nic->install_firmware(built[n].firmware);
        else node.nic->load_firmware(built[n].firmware);
        ready = std::max(ready, node.nic->ready_at());
      }
    } catch (const emu::LoadError& e) {
      throw DeployError(std::string("firmware load failed on ") + n + ": " + e.what());
    }
    if (node.host) node.host->deploy(merged[n]);
    node.program = merged[n];
  }

  for (const auto& name : fresh) registry_.assign(name);
  result.digest = built.at(nodes.front()).firmware.digest();
  for (const auto& l : prog.lambdas) {
    std::vector<std::string> where;
    if (const auto e = registry_.find(l.name)) where = e->nodes;
    for (const auto& n : nodes)
      if (std::find(where.begin(), where.end(), n) == where.end()) where.push_back(n);
    registry_.record_deploy(l.name, result.digest, where, source);
  }
  result.report = built.at(nodes.front()).report;
  result.ready_at = ready;

  // old mapping keeps serving until the swap completes
  auto mapping = registry_.mapping();
  if (factory || ready <= sched_.now()) gateway_.set_mapping(std::move(mapping));
  else sched_.at(ready, [this, mapping = std::move(mapping)]() mutable { gateway_.set_mapping(std::move(mapping)); });
  return result;
}

}  // namespace lnic::cp
