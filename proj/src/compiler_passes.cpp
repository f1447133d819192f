#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "compiler_util.hpp"
#include "lnic/compiler.hpp"
#include "lnic/interp.hpp"

namespace lnic::compiler {

using ir::Function;
using ir::Instruction;
using ir::LambdaProgram;
using ir::MemRef;
using ir::Op;

namespace detail {

const Function* find_function(const LambdaProgram& lambda, std::span<const Function> helpers,
                              const std::string& name) {
  if (const auto* f = lambda.find_function(name)) return f;
  for (const auto& h : helpers)
    if (h.name == name) return &h;
  return nullptr;
}

std::set<std::string> reachable_functions(const LambdaProgram& lambda, std::span<const Function> helpers) {
  std::set<std::string> seen;
  std::vector<std::string> work{lambda.entry};
  while (!work.empty()) {
    const std::string name = work.back();
    work.pop_back();
    if (!seen.insert(name).second) continue;
    const auto* f = find_function(lambda, helpers, name);
    if (!f) continue;
    for (const auto& ins : f->body)
      if (ins.op == Op::kCall && !seen.contains(ins.target)) work.push_back(ins.target);
  }
  return seen;
}

std::map<std::string, std::set<std::string>> used_fields(const LambdaProgram& lambda,
                                                         const std::set<std::string>& functions,
                                                         std::span<const Function> helpers) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& name : functions) {
    const auto* f = find_function(lambda, helpers, name);
    if (!f) continue;
    for (const auto& ins : f->body) {
      if (ins.op == Op::kLdh || ins.op == Op::kSth) out[ins.header].insert(ins.field);
      if (ins.src.is_header()) out[ins.src.object].insert(ins.src.field);
      if (ins.dst.is_header()) out[ins.dst.object].insert(ins.dst.field);
    }
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parse graph and match reduction

fw::ParseGraph infer_parse_graph(const ir::MLProgram& prog) {
  fw::ParseGraph g;
  std::map<std::string, fw::ParseNode> nodes;
  std::set<std::string> routed;
  for (const auto& rule : prog.match.rules) {
    const auto* l = prog.find_lambda(rule.lambda);
    if (!l || !rule.workload_id) continue;
    routed.insert(l->name);
    const auto fields = detail::used_fields(*l, detail::reachable_functions(*l));
    for (const auto& [schema, names] : fields) {
      auto& node = nodes[schema];
      node.schema = schema;
      for (const auto& n : names)
        if (std::find(node.fields.begin(), node.fields.end(), n) == node.fields.end()) node.fields.push_back(n);
      node.conditions.push_back({*rule.workload_id, l->header_offset(schema).value_or(0)});
    }
  }
  for (const auto& l : prog.lambdas) {
    if (routed.contains(l.name)) continue;
    for (const auto& h : l.headers)
      g.warnings.push_back("dead header " + h.name + " in lambda " + l.name + ": no match rule routes to it");
  }
  for (const auto& schema : prog.headers) {
    auto it = nodes.find(schema.name);
    if (it == nodes.end()) continue;
    auto node = it->second;
    // fields in declaration order
    std::vector<std::string> ordered;
    for (const auto& f : schema.fields)
      if (std::find(node.fields.begin(), node.fields.end(), f.name) != node.fields.end()) ordered.push_back(f.name);
    node.fields = std::move(ordered);
    g.nodes.push_back(std::move(node));
  }
  return g;
}

fw::DecisionTree reduce_match(const ir::MatchStage& stage) {
  fw::DecisionTree t;
  std::set<std::uint32_t> ids;
  for (const auto& rule : stage.rules) {
    if (!rule.workload_id) throw CompileError("match rule for " + rule.lambda + " has no workload id");
    if (!ids.insert(*rule.workload_id).second)
      throw CompileError("duplicate workload id " + std::to_string(*rule.workload_id));
    fw::DecisionBranch b{*rule.workload_id, rule.lambda, std::nullopt};
    if (rule.port) {
      b.route_row = static_cast<std::uint32_t>(t.routes.size());
      t.routes.push_back({*rule.workload_id, *rule.port});
    }
    t.chain.push_back(std::move(b));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Lambda coalescing

namespace {

void remove_unreachable_instructions(Function& f, std::size_t& removed) {
  const std::size_t n = f.body.size();
  std::vector<bool> live(n, false);
  std::vector<std::size_t> work{0};
  while (!work.empty()) {
    const std::size_t pc = work.back();
    work.pop_back();
    if (pc >= n || live[pc]) continue;
    live[pc] = true;
    const auto& ins = f.body[pc];
    if (ir::is_branch(ins.op)) {
      if (auto t = f.label_index(ins.target)) work.push_back(*t);
      if (ins.op != Op::kJmp) work.push_back(pc + 1);
    } else if (ins.op != Op::kHalt && ins.op != Op::kRet) {
      work.push_back(pc + 1);
    }
  }
  std::vector<std::size_t> remap(n, 0);
  std::vector<Instruction> body;
  for (std::size_t i = 0; i < n; ++i) {
    remap[i] = body.size();
    if (live[i]) body.push_back(f.body[i]);
  }
  removed += n - body.size();
  std::vector<std::pair<std::string, std::size_t>> labels;
  for (const auto& [name, at] : f.labels)
    if (at < n && live[at]) labels.emplace_back(name, remap[at]);
  f.body = std::move(body);
  f.labels = std::move(labels);
}

std::string operand_key(const ir::Operand& o) {
  if (o.is_reg()) return "r" + std::to_string(o.value);
  if (o.is_imm()) return "#" + std::to_string(o.value);
  return "_";
}

bool references_globals(const LambdaProgram& l, const Function& f) {
  auto global = [&](const MemRef& m) { return !m.is_header() && !m.object.empty() && l.find_global(m.object); };
  for (const auto& ins : f.body)
    if (global(ins.dst) || global(ins.src)) return true;
  return false;
}

// Post-order over the call graph so callees come before callers.
std::vector<std::string> callee_first_order(const LambdaProgram& l) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  std::function<void(const std::string&)> visit = [&](const std::string& name) {
    if (!seen.insert(name).second) return;
    const auto* f = l.find_function(name);
    if (!f) return;
    for (const auto& ins : f->body)
      if (ins.op == Op::kCall) visit(ins.target);
    order.push_back(name);
  };
  for (const auto& f : l.functions) visit(f.name);
  return order;
}

}  // namespace

CoalesceResult coalesce(std::span<const LambdaProgram> lambdas) {
  CoalesceResult out;
  for (const auto& l : lambdas) out.report.instructions_before += l.instruction_count();

  // Dead-code elimination.
  for (const auto& src : lambdas) {
    LambdaProgram l = src;
    const auto live = detail::reachable_functions(l);
    std::vector<Function> kept;
    for (auto& f : l.functions) {
      if (!live.contains(f.name)) {
        ++out.report.dead_functions;
        out.report.dead_instructions += f.body.size();
        continue;
      }
      remove_unreachable_instructions(f, out.report.dead_instructions);
      kept.push_back(std::move(f));
    }
    l.functions = std::move(kept);
    out.lambdas.push_back(std::move(l));
  }

  // Structural deduplication: functions identical up to label names, with
  // callees compared by equivalence class.
  struct Member {
    std::size_t lambda;
    std::string function;
  };
  std::map<std::string, int> class_of_key;
  std::vector<std::vector<Member>> classes;
  std::vector<std::map<std::string, int>> fn_class(out.lambdas.size());

  for (std::size_t li = 0; li < out.lambdas.size(); ++li) {
    const auto& l = out.lambdas[li];
    for (const auto& name : callee_first_order(l)) {
      const auto& f = *l.find_function(name);
      std::ostringstream key;
      // functions touching globals only ever match within their own lambda
      if (references_globals(l, f)) key << "L" << li << "|";
      for (const auto& ins : f.body) {
        key << static_cast<int>(ins.op) << ' ' << ins.rd << ' ' << operand_key(ins.a) << ' ' << operand_key(ins.b) << ' ';
        if (ir::is_branch(ins.op)) {
          key << '@' << *f.label_index(ins.target);
        } else if (ins.op == Op::kCall) {
          key << 'C' << fn_class[li].at(ins.target);
        }
        for (const MemRef* m : {&ins.dst, &ins.src})
          key << " [" << m->object << '.' << m->field << '+' << operand_key(m->offset) << ']';
        key << ' ' << ins.header << '.' << ins.field << ' ' << ins.fimm << ';';
      }
      const auto [it, fresh] = class_of_key.try_emplace(key.str(), static_cast<int>(classes.size()));
      if (fresh) classes.push_back({});
      classes[it->second].push_back({li, name});
      fn_class[li][name] = it->second;
    }
  }

  // Decide the surviving name of every function.
  std::vector<std::map<std::string, std::string>> rename(out.lambdas.size());
  std::vector<std::string> helper_of_class(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& members = classes[c];
    if (members.size() < 2) continue;
    const bool cross = std::any_of(members.begin(), members.end(),
                                   [&](const Member& m) { return m.lambda != members.front().lambda; });
    if (cross) {
      const std::string helper = "$h" + std::to_string(out.helpers.size());
      helper_of_class[c] = helper;
      Function h = *out.lambdas[members.front().lambda].find_function(members.front().function);
      h.name = helper;
      out.helpers.push_back(std::move(h));
      out.report.helpers.push_back(helper);
      for (const auto& m : members) rename[m.lambda][m.function] = helper;
    } else {
      // keep the entry if it is a member, else the first in order
      const auto& l = out.lambdas[members.front().lambda];
      std::string keep = members.front().function;
      for (const auto& m : members)
        if (m.function == l.entry) keep = m.function;
      for (const auto& m : members)
        if (m.function != keep) rename[m.lambda][m.function] = keep;
    }
  }

  auto retarget = [](Function& f, const std::map<std::string, std::string>& names) {
    for (auto& ins : f.body)
      if (ins.op == Op::kCall)
        if (auto it = names.find(ins.target); it != names.end()) ins.target = it->second;
  };
  // A cross-lambda class only calls cross-lambda classes (callee classes are
  // part of the key), so helper bodies call helpers only.
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (helper_of_class[c].empty()) continue;
    auto& h = *std::find_if(out.helpers.begin(), out.helpers.end(),
                            [&](const Function& f) { return f.name == helper_of_class[c]; });
    const auto& rep = classes[c].front();
    const auto& src = *out.lambdas[rep.lambda].find_function(rep.function);
    for (std::size_t i = 0; i < h.body.size(); ++i) {
      if (h.body[i].op != Op::kCall) continue;
      const int callee = fn_class[rep.lambda].at(src.body[i].target);
      h.body[i].target = helper_of_class[callee];
    }
  }

  for (std::size_t li = 0; li < out.lambdas.size(); ++li) {
    auto& l = out.lambdas[li];
    const auto& names = rename[li];
    std::vector<Function> kept;
    for (auto& f : l.functions) {
      if (names.contains(f.name)) continue;
      retarget(f, names);
      kept.push_back(std::move(f));
    }
    l.functions = std::move(kept);
    if (auto it = names.find(l.entry); it != names.end()) l.entry = it->second;
  }

  for (const auto& l : out.lambdas) out.report.instructions_after += l.instruction_count();
  for (const auto& h : out.helpers) out.report.instructions_after += h.body.size();
  return out;
}

LambdaProgram link_helpers(const LambdaProgram& lambda, std::span<const Function> helpers) {
  LambdaProgram out = lambda;
  for (const auto& name : detail::reachable_functions(lambda, helpers)) {
    if (out.find_function(name)) continue;
    for (const auto& h : helpers)
      if (h.name == name) out.functions.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Memory stratification

namespace {

std::uint64_t align8(std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; }

std::uint64_t object_capacity(const NicSpec& nic, Tier t) {
  return t == Tier::kEmem ? nic.emem_object_capacity() : nic.tier_capacity(t);
}

}  // namespace

fw::PlacementMap stratify(std::span<const ObjectRequest> objects, const NicSpec& nic) {
  std::vector<const ObjectRequest*> order;
  for (const auto& o : objects) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [](const ObjectRequest* x, const ObjectRequest* y) {
    const auto ax = x->reads + x->writes, ay = y->reads + y->writes;
    if (ax != ay) return ax > ay;
    return std::tie(x->owner, x->name) < std::tie(y->owner, y->name);
  });

  std::array<std::uint64_t, kNumTiers> used{};
  fw::PlacementMap map;
  std::vector<std::string> overflow;
  for (const auto* o : order) {
    Tier preferred;
    if (o->pragma == ir::Pragma::kHot) {
      preferred = Tier::kLocal;
    } else if (o->pragma == ir::Pragma::kCold) {
      preferred = Tier::kEmem;
    } else if (o->size <= nic.local_max_object) {
      preferred = Tier::kLocal;
    } else if (o->size <= nic.ctm_max_object) {
      preferred = Tier::kCtm;
    } else if (o->size <= nic.imem_max_object) {
      preferred = Tier::kImem;
    } else {
      preferred = Tier::kEmem;
    }
    // LOCAL and CTM are replicated per core/island, so only objects that are
    // never written may live there.
    if (o->writes > 0 && preferred < Tier::kImem) preferred = Tier::kImem;

    bool placed = false;
    for (auto t = static_cast<std::size_t>(preferred); t < kNumTiers; ++t) {
      const std::uint64_t base = align8(used[t]);
      if (base + o->size > object_capacity(nic, static_cast<Tier>(t))) continue;
      used[t] = base + o->size;
      map.objects.push_back({o->owner, o->name, o->size, static_cast<Tier>(t), base, t <= 1});
      placed = true;
      break;
    }
    if (!placed) overflow.push_back(o->owner + "." + o->name);
  }
  if (!overflow.empty()) {
    std::string names;
    for (const auto& n : overflow) names += (names.empty() ? "" : ", ") + n;
    throw CompileError("memory capacity exceeded; objects that do not fit: " + names);
  }
  return map;
}

fw::PlacementMap naive_placement(std::span<const ObjectRequest> objects, const NicSpec& nic) {
  fw::PlacementMap map;
  std::uint64_t used = 0;
  std::vector<std::string> overflow;
  for (const auto& o : objects) {
    const std::uint64_t base = align8(used);
    if (base + o.size > nic.emem_object_capacity()) {
      overflow.push_back(o.owner + "." + o.name);
      continue;
    }
    used = base + o.size;
    map.objects.push_back({o.owner, o.name, o.size, Tier::kEmem, base, false});
  }
  if (!overflow.empty()) {
    std::string names;
    for (const auto& n : overflow) names += (names.empty() ? "" : ", ") + n;
    throw CompileError("memory capacity exceeded; objects that do not fit: " + names);
  }
  return map;
}

// ---------------------------------------------------------------------------
// Fixed-point lowering and isolation guards

LambdaProgram lower_fixed_point(const LambdaProgram& prog) {
  LambdaProgram out = prog;
  for (auto& f : out.functions) {
    for (auto& ins : f.body) {
      switch (ins.op) {
        case Op::kFConst: {
          std::int32_t q = 0;
          try {
            q = ir::to_q16(ins.fimm);
          } catch (const ir::IrError& e) {
            throw CompileError("lowering " + prog.name + "::" + f.name + ": " + e.what());
          }
          ins.op = Op::kConst;
          ins.a = ir::Operand::imm(q);
          ins.fimm = 0.0;
          break;
        }
        case Op::kFAdd: ins.op = Op::kAdd; break;
        case Op::kFSub: ins.op = Op::kSub; break;
        case Op::kFMul:
          ins.op = Op::kMulSh;
          ins.dst.offset = ir::Operand::imm(16);
          break;
        case Op::kFDiv:
          ins.op = Op::kDivSh;
          ins.dst.offset = ir::Operand::imm(16);
          break;
        default:
          break;
      }
    }
  }
  return out;
}

namespace {

// Static bound of a guarded reference, or nullopt when no guard applies.
std::optional<std::uint32_t> guarded_bound(const LambdaProgram& prog, const fw::PlacementMap& placement,
                                           const MemRef& m) {
  if (m.is_header()) {
    const auto* h = prog.find_header(m.object);
    const auto* f = h ? h->find(m.field) : nullptr;
    if (!f) throw CompileError("unknown header field " + m.object + "." + m.field);
    return f->width;
  }
  if (ir::is_pseudo_object(m.object)) return std::nullopt;  // bounded by the packet engine
  const auto* p = placement.find(prog.name, m.object);
  if (!p) throw CompileError("object " + prog.name + "." + m.object + " has no placement");
  return p->size;
}

}  // namespace

LambdaProgram insert_isolation_guards(const LambdaProgram& prog, const fw::PlacementMap& placement) {
  LambdaProgram out = prog;
  for (auto& f : out.functions) {
    std::vector<Instruction> body;
    std::vector<std::size_t> first(f.body.size() + 1, 0);
    for (std::size_t i = 0; i < f.body.size(); ++i) {
      first[i] = body.size();
      const Instruction& ins = f.body[i];
      std::vector<std::pair<const MemRef*, ir::Operand>> refs;
      switch (ins.op) {
        case Op::kLdm: case Op::kStm: refs.push_back({&ins.dst, ir::Operand::imm(4)}); break;
        case Op::kLdb: case Op::kStb: refs.push_back({&ins.dst, ir::Operand::imm(1)}); break;
        case Op::kMemcpy:
          refs.push_back({&ins.dst, ins.b});
          refs.push_back({&ins.src, ins.b});
          break;
        case Op::kEmitPkt: refs.push_back({&ins.dst, ins.b}); break;
        default: break;
      }
      for (const auto& [ref, extent] : refs) {
        const auto bound = guarded_bound(prog, placement, *ref);
        if (!bound) continue;
        if (ref->offset.is_imm() && extent.is_imm()) {
          const std::int64_t lo = ref->offset.value;
          if (lo < 0 || extent.value < 0 || lo + extent.value > static_cast<std::int64_t>(*bound))
            throw CompileError("static out-of-bounds access in " + prog.name + "::" + f.name + " at instruction " +
                               std::to_string(i) + ": " + ir::to_text(ins));
          continue;
        }
        Instruction g;
        g.op = Op::kGuard;
        g.dst = *ref;
        g.b = extent;
        g.line = ins.line;
        body.push_back(std::move(g));
      }
      body.push_back(ins);
    }
    first[f.body.size()] = body.size();
    for (auto& [name, at] : f.labels) at = first[at];
    f.body = std::move(body);
  }
  return out;
}

}  // namespace lnic::compiler
