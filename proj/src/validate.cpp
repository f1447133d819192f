#include "lnic/validate.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace lnic::ir {

namespace {

int access_width(Op op) {
  switch (op) {
    case Op::kLdm: case Op::kStm: return 4;
    case Op::kLdb: case Op::kStb: return 1;
    default: return 0;
  }
}

class LambdaChecker {
 public:
  LambdaChecker(const LambdaProgram& l, const std::vector<HeaderSchema>& schemas, ValidationReport& out)
      : l_(l), schemas_(schemas), out_(out) {}

  void run() {
    if (l_.functions.empty()) error("", -1, 0, "lambda has no functions");
    if (l_.entry.empty() || !l_.find_function(l_.entry)) error("", -1, 0, "entry function '" + l_.entry + "' not found");

    std::set<std::string> names;
    for (const auto& g : l_.globals) {
      if (g.size == 0) error("", -1, 0, "global " + g.name + " has zero size");
      if (g.init.size() > g.size) error("", -1, 0, "global " + g.name + " initializer exceeds size");
      if (is_pseudo_object(g.name)) error("", -1, 0, "global " + g.name + " shadows a built-in object");
      if (!names.insert(g.name).second) error("", -1, 0, "duplicate global " + g.name);
    }
    std::set<std::string> fnames;
    for (const auto& f : l_.functions)
      if (!fnames.insert(f.name).second) error(f.name, -1, 0, "duplicate function " + f.name);

    bool has_float = false;
    for (const auto& f : l_.functions) {
      check_function(f);
      for (const auto& ins : f.body) has_float |= is_float_op(ins.op);
    }
    if (has_float) out_.requires_lowering.push_back(l_.name);
    check_recursion();
  }

 private:
  void error(const std::string& fn, int idx, int line, std::string msg) {
    out_.errors.push_back({l_.name, fn, idx, line, std::move(msg), {}});
  }

  const HeaderSchema* schema(const std::string& name) const {
    for (const auto& s : schemas_)
      if (s.name == name) return &s;
    return nullptr;
  }

  // Returns the static size of an object, 0 for objects sized at runtime.
  // Returns nullopt when the object does not exist.
  std::optional<std::uint32_t> object_size(const std::string& obj) const {
    if (obj == kPayload) return 0u;
    if (obj == kReply) return kReplyCapacity;
    if (obj == kResp) return kRespCapacity;
    if (const auto* g = l_.find_global(obj)) return g->size;
    return std::nullopt;
  }

  void check_mem(const Function& f, int idx, const Instruction& ins, const MemRef& m, bool write,
                 std::optional<std::int64_t> extent) {
    if (m.is_header()) {
      const auto* s = schema(m.object);
      if (write) {
        error(f.name, idx, ins.line, "header fields cannot be a memory destination");
        return;
      }
      const HeaderSchema::Field* fld = s ? s->find(m.field) : nullptr;
      if (!fld) {
        error(f.name, idx, ins.line, "unknown header field " + m.object + "." + m.field);
        return;
      }
      if (m.offset.is_imm() && extent &&
          (m.offset.value < 0 || m.offset.value + *extent > static_cast<std::int64_t>(fld->width)))
        error(f.name, idx, ins.line, "header copy out of bounds on " + m.object + "." + m.field);
      return;
    }
    const auto size = object_size(m.object);
    if (!size) {
      error(f.name, idx, ins.line, "unknown object " + m.object);
      return;
    }
    if (write && (m.object == kPayload || m.object == kReply))
      error(f.name, idx, ins.line, "object " + m.object + " is read-only");
    if (write) {
      if (const auto* g = l_.find_global(m.object); g && g->pragma == Pragma::kReadonly)
        error(f.name, idx, ins.line, "write to readonly global " + m.object);
    }
    if (m.offset.is_imm() && extent) {
      const std::int64_t off = m.offset.value;
      if (off < 0 || (*size > 0 && off + *extent > static_cast<std::int64_t>(*size)))
        error(f.name, idx, ins.line,
              "out-of-bounds access to " + m.object + " at offset " + std::to_string(off) + " (size " +
                  std::to_string(*size) + ")");
    }
  }

  void check_function(const Function& f) {
    if (f.body.empty()) {
      error(f.name, -1, 0, "function " + f.name + " is empty");
      return;
    }
    for (const auto& [label, at] : f.labels)
      if (at >= f.body.size()) error(f.name, -1, 0, "label " + label + " points past the last instruction");
    const Op last = f.body.back().op;
    if (last != Op::kJmp && last != Op::kRet && last != Op::kHalt)
      error(f.name, static_cast<int>(f.body.size()) - 1, f.body.back().line,
            "function " + f.name + " can fall off its end");

    for (std::size_t i = 0; i < f.body.size(); ++i) {
      const auto& ins = f.body[i];
      const int idx = static_cast<int>(i);
      if (is_branch(ins.op) && !f.label_index(ins.target))
        error(f.name, idx, ins.line, "undefined label " + ins.target);
      if (ins.op == Op::kCall && !l_.find_function(ins.target))
        error(f.name, idx, ins.line, "call to undefined function " + ins.target);
      if ((ins.op == Op::kMulSh || ins.op == Op::kDivSh) &&
          (ins.dst.offset.value < 0 || ins.dst.offset.value > 31))
        error(f.name, idx, ins.line, "shift amount out of range");
      if (ins.op == Op::kLdmd && (ins.a.value < 0 || ins.a.value > 2))
        error(f.name, idx, ins.line, "unknown match-data field");
      switch (ins.op) {
        case Op::kLdh: case Op::kSth: {
          const auto* s = schema(ins.header);
          const auto* fld = s ? s->find(ins.field) : nullptr;
          if (!fld) {
            error(f.name, idx, ins.line, "unknown header field " + ins.header + "." + ins.field);
          } else if (fld->width != 1 && fld->width != 2 && fld->width != 4 && fld->width != 8) {
            error(f.name, idx, ins.line, "header field " + ins.header + "." + ins.field +
                                             " is a byte array; use MEMCPY");
          }
          break;
        }
        case Op::kLdm: case Op::kLdb:
          check_mem(f, idx, ins, ins.dst, false, access_width(ins.op));
          break;
        case Op::kStm: case Op::kStb:
          check_mem(f, idx, ins, ins.dst, true, access_width(ins.op));
          break;
        case Op::kMemcpy: {
          std::optional<std::int64_t> len;
          if (ins.b.is_imm()) {
            len = ins.b.value;
            if (*len < 0) error(f.name, idx, ins.line, "negative MEMCPY length");
          }
          check_mem(f, idx, ins, ins.dst, true, len);
          check_mem(f, idx, ins, ins.src, false, len);
          break;
        }
        case Op::kGuard: {
          if (ins.b.is_imm() && ins.b.value < 0) error(f.name, idx, ins.line, "negative guard extent");
          check_mem(f, idx, ins, ins.dst, false, ins.b.is_imm() ? std::optional<std::int64_t>(ins.b.value) : std::nullopt);
          break;
        }
        case Op::kEmitPkt: {
          std::optional<std::int64_t> len;
          if (ins.b.is_imm()) len = ins.b.value;
          check_mem(f, idx, ins, ins.dst, false, len);
          break;
        }
        default:
          break;
      }
    }
  }

  void check_recursion() {
    std::map<std::string, std::vector<std::string>> callees;
    for (const auto& f : l_.functions) {
      auto& v = callees[f.name];
      for (const auto& ins : f.body)
        if (ins.op == Op::kCall && l_.find_function(ins.target)) v.push_back(ins.target);
    }
    std::map<std::string, int> state;  // 0 new, 1 on stack, 2 done
    std::vector<std::string> stack;
    std::set<std::vector<std::string>> reported;
    std::function<void(const std::string&)> dfs = [&](const std::string& fn) {
      state[fn] = 1;
      stack.push_back(fn);
      for (const auto& c : callees[fn]) {
        if (state[c] == 1) {
          auto it = std::find(stack.begin(), stack.end(), c);
          std::vector<std::string> cycle(it, stack.end());
          // rotate so the cycle starts at its smallest name, for stable reporting
          std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
          if (reported.insert(cycle).second) {
            std::string path;
            for (const auto& n : cycle) path += n + " -> ";
            path += cycle.front();
            Issue issue{l_.name, c, -1, 0, "recursion: " + path, cycle};
            out_.errors.push_back(std::move(issue));
          }
        } else if (state[c] == 0) {
          dfs(c);
        }
      }
      stack.pop_back();
      state[fn] = 2;
    };
    std::vector<std::string> order;
    for (const auto& [name, _] : callees) order.push_back(name);
    for (const auto& name : order)
      if (state[name] == 0) dfs(name);
  }

  const LambdaProgram& l_;
  const std::vector<HeaderSchema>& schemas_;
  ValidationReport& out_;
};

}  // namespace

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& e : errors) {
    os << "error: " << e.lambda;
    if (!e.function.empty()) os << "::" << e.function;
    if (e.index >= 0) os << "[" << e.index << "]";
    if (e.line > 0) os << " (line " << e.line << ")";
    os << ": " << e.message << "\n";
  }
  for (const auto& w : warnings) os << "warning: " << w.lambda << ": " << w.message << "\n";
  for (const auto& l : requires_lowering) os << "note: " << l << " requires fixed-point lowering\n";
  return os.str();
}

ValidationReport validate_lambda(const LambdaProgram& lambda, const std::vector<HeaderSchema>& schemas) {
  ValidationReport r;
  LambdaChecker(lambda, schemas, r).run();
  return r;
}

ValidationReport validate(const MLProgram& prog) {
  ValidationReport r;
  std::set<std::string> hnames;
  for (const auto& h : prog.headers) {
    if (!hnames.insert(h.name).second) r.errors.push_back({"", "", -1, 0, "duplicate header " + h.name, {}});
    try {
      h.check();
    } catch (const std::invalid_argument& e) {
      r.errors.push_back({"", "", -1, 0, e.what(), {}});
    }
  }
  std::set<std::string> lnames;
  for (const auto& l : prog.lambdas) {
    if (!lnames.insert(l.name).second) r.errors.push_back({l.name, "", -1, 0, "duplicate lambda " + l.name, {}});
    LambdaChecker(l, prog.headers, r).run();
  }
  std::set<std::uint32_t> ids;
  for (const auto& rule : prog.match.rules) {
    if (!prog.find_lambda(rule.lambda))
      r.errors.push_back({rule.lambda, "", -1, 0, "match rule references unknown lambda " + rule.lambda, {}});
    if (rule.workload_id && !ids.insert(*rule.workload_id).second)
      r.errors.push_back({rule.lambda, "", -1, 0, "duplicate workload id " + std::to_string(*rule.workload_id), {}});
  }
  return r;
}

void require_valid(const MLProgram& prog) {
  const auto r = validate(prog);
  if (!r.ok()) throw IrError("invalid program:\n" + r.summary());
}

std::vector<std::pair<std::string, AccessCount>> static_access_counts(const LambdaProgram& lambda) {
  std::vector<std::pair<std::string, AccessCount>> out;
  for (const auto& g : lambda.globals) out.emplace_back(g.name, AccessCount{});
  auto bump = [&](const MemRef& m, bool write) {
    if (m.is_header()) return;
    for (auto& [name, c] : out)
      if (name == m.object) (write ? c.writes : c.reads)++;
  };
  for (const auto& f : lambda.functions) {
    for (const auto& ins : f.body) {
      switch (ins.op) {
        case Op::kLdm: case Op::kLdb: case Op::kEmitPkt: bump(ins.dst, false); break;
        case Op::kStm: case Op::kStb: bump(ins.dst, true); break;
        case Op::kMemcpy: bump(ins.dst, true); bump(ins.src, false); break;
        default: break;
      }
    }
  }
  return out;
}

}  // namespace lnic::ir
