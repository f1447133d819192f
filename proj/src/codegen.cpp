#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "compiler_util.hpp"
#include "lnic/compiler.hpp"
#include "lnic/validate.hpp"

namespace lnic::compiler {

using fw::MIns;
using fw::MOp;
using ir::Op;

namespace {

constexpr std::uint32_t kWidOffset = 4;  // workload_id within the transport header
constexpr const char* kMergedRoutes = "routes";

std::string route_table_name(const std::string& lambda) { return "routes." + lambda; }

bool shared_tier(Tier t) { return t == Tier::kImem || t == Tier::kEmem; }

MOp alu(Op op) {
  switch (op) {
    case Op::kConst: return MOp::kConst;
    case Op::kMov: return MOp::kMov;
    case Op::kAdd: return MOp::kAdd;
    case Op::kSub: return MOp::kSub;
    case Op::kMul: return MOp::kMul;
    case Op::kDiv: return MOp::kDiv;
    case Op::kAnd: return MOp::kAnd;
    case Op::kOr: return MOp::kOr;
    case Op::kXor: return MOp::kXor;
    case Op::kShl: return MOp::kShl;
    case Op::kShr: return MOp::kShr;
    case Op::kMulSh: return MOp::kMulSh;
    case Op::kDivSh: return MOp::kDivSh;
    case Op::kJmp: return MOp::kJmp;
    case Op::kJeq: return MOp::kJeq;
    case Op::kJne: return MOp::kJne;
    case Op::kJlt: return MOp::kJlt;
    case Op::kJge: return MOp::kJge;
    default: break;
  }
  throw CompileError("internal: not an ALU/branch op");
}

MIns bare(MOp op) {
  MIns m;
  m.op = op;
  return m;
}

enum class MatchMode { kNaive, kReduced };

struct CodegenInput {
  const ir::MLProgram* prog;
  std::vector<ir::LambdaProgram> lambdas;  // lowered + guarded, possibly coalesced
  std::vector<ir::Function> helpers;
  MatchMode mode = MatchMode::kNaive;
  fw::PlacementMap placement;
  int opt_level = 0;
};

class Codegen {
 public:
  Codegen(const CodegenInput& in, const NicSpec& nic) : in_(in), nic_(nic) {}

  fw::Firmware run() {
    fw_.opt_level = in_.opt_level;
    fw_.placement = in_.placement;
    fw_.parse = infer_parse_graph(*in_.prog);
    fw_.tree = reduce_match(in_.prog->match);
    layout_phv();
    layout_regions();
    for (const auto& l : in_.lambdas) {
      lambda_index_[l.name] = static_cast<std::int64_t>(fw_.lambdas.size());
      fw_.lambdas.push_back(l.name);
    }
    for (const auto& b : fw_.tree.chain) fw_.workload_ids.emplace_back(b.lambda, b.workload_id);

    emit_dispatch();
    for (const auto& l : in_.lambdas)
      for (const auto& f : l.functions) emit_function(l, f, l.name + "." + f.name);
    if (!in_.helpers.empty()) {
      // helpers are lambda-agnostic; any lambda resolves their headers identically
      ir::LambdaProgram host;
      host.name = "$helpers";
      host.headers = in_.prog->headers;
      for (const auto& h : in_.helpers) emit_function(host, h, h.name);
    }
    resolve_fixups();
    return std::move(fw_);
  }

 private:
  struct Fixup {
    std::size_t pc;
    std::string symbol;
  };

  void layout_phv() {
    std::uint32_t at = kFrameHeaderSize;
    for (const auto& h : in_.prog->headers) {
      phv_base_[h.name] = at;
      at += h.total_width();
    }
    fw_.phv_size = at;
  }

  void layout_regions() {
    fw_.regions.push_back({"", "payload", fw::RegionKind::kPayload, Tier::kCtm, 0, 0, {}});
    fw_.regions.push_back({"", "resp", fw::RegionKind::kResp, Tier::kCtm, 0, ir::kRespCapacity, {}});
    fw_.regions.push_back({"", "reply", fw::RegionKind::kReply, Tier::kCtm, 0, ir::kReplyCapacity, {}});
    fw_.regions.push_back({"", "phv", fw::RegionKind::kPhv, Tier::kLocal, 0, fw_.phv_size, {}});
    for (const auto& p : in_.placement.objects) {
      fw::Region r{p.owner, p.name, fw::RegionKind::kGlobal, p.tier, p.base, p.size, {}};
      if (p.owner == fw::kSystemOwner) {
        r.kind = fw::RegionKind::kTable;
        r.init = table_bytes(p.name);
      } else if (const auto* l = in_.prog->find_lambda(p.owner)) {
        if (const auto* g = l->find_global(p.name)) r.init = g->init;
      }
      region_of_[p.owner + "\n" + p.name] = static_cast<int>(fw_.regions.size());
      fw_.regions.push_back(std::move(r));
    }
  }

  Bytes table_bytes(const std::string& name) const {
    std::vector<fw::RouteRow> rows;
    if (name == kMergedRoutes) {
      rows = fw_.tree.routes;
    } else {
      for (const auto& r : in_.prog->match.rules)
        if (r.port && route_table_name(r.lambda) == name) rows.push_back({*r.workload_id, *r.port});
    }
    Bytes b(rows.size() * 8);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      store_be(b, i * 8, 4, rows[i].workload_id);
      store_be(b, i * 8 + 4, 4, rows[i].port);
    }
    return b;
  }

  int region(const std::string& owner, const std::string& name) const {
    const auto it = region_of_.find(owner + "\n" + name);
    if (it == region_of_.end()) throw CompileError("no region for " + owner + "." + name);
    return it->second;
  }

  MIns& emit(MIns ins) {
    fw_.code.push_back(std::move(ins));
    return fw_.code.back();
  }

  void symbol(const std::string& name) { fw_.symbols.emplace_back(name, static_cast<std::uint32_t>(fw_.code.size())); }

  void jump_to(MIns ins, const std::string& symbol_name) {
    fixups_.push_back({fw_.code.size(), symbol_name});
    emit(std::move(ins));
  }

  void addr_if_shared(int r) {
    if (r >= 0 && fw_.regions[static_cast<std::size_t>(r)].kind != fw::RegionKind::kPayload &&
        shared_tier(fw_.regions[static_cast<std::size_t>(r)].tier)) {
      MIns a;
      a.op = MOp::kAddr;
      a.region = r;
      emit(a);
    }
  }

  void emit_parse(const ir::LambdaProgram& l) {
    std::map<std::string, std::set<std::string>> wanted;
    if (in_.mode == MatchMode::kNaive) {
      for (const auto& h : l.headers)
        for (const auto& f : h.fields) wanted[h.name].insert(f.name);
    } else {
      wanted = detail::used_fields(l, detail::reachable_functions(l, in_.helpers), in_.helpers);
    }
    for (const auto& h : l.headers) {
      const auto it = wanted.find(h.name);
      if (it == wanted.end()) continue;
      const std::uint32_t pkt_base = *l.header_offset(h.name);
      for (const auto& f : h.fields) {
        if (!it->second.contains(f.name)) continue;
        MIns e;
        e.op = MOp::kExt;
        const std::uint32_t off = *h.field_offset(f.name);
        e.disp = static_cast<std::int32_t>(phv_base_.at(h.name) + off);
        e.imm = pkt_base + off;
        e.width = f.width;
        emit(e);
      }
    }
  }

  void emit_dispatch() {
    symbol("$dispatch");
    emit(bare(MOp::kExtT));
    MIns ld;
    ld.op = MOp::kLdf;
    ld.rd = 0;
    ld.disp = kWidOffset;
    ld.width = 4;
    emit(ld);
    for (const auto& b : fw_.tree.chain) {
      MIns j;
      j.op = MOp::kJeq;
      j.rd = 0;
      j.a = ir::Operand::imm(static_cast<std::int32_t>(b.workload_id));
      jump_to(j, "$branch." + std::to_string(b.workload_id));
    }
    emit(bare(MOp::kToHost));

    std::set<std::string> routed_lambdas;
    for (const auto& b : fw_.tree.chain) {
      symbol("$branch." + std::to_string(b.workload_id));
      const auto* l = find_lambda(b.lambda);
      emit_parse(*l);
      MIns call;
      call.op = MOp::kLCall;
      call.imm = lambda_index_.at(l->name);
      jump_to(call, entry_symbol(*l));
      if (in_.mode == MatchMode::kNaive) {
        if (has_routes(l->name)) {
          routed_lambdas.insert(l->name);
          MIns c;
          c.op = MOp::kCall;
          jump_to(c, "$route." + l->name);
        }
        emit(bare(MOp::kDone));
      } else if (b.route_row) {
        MIns c;
        c.op = MOp::kConst;
        c.rd = 2;
        c.a = ir::Operand::imm(static_cast<std::int32_t>(*b.route_row * 8 + 4));
        emit(c);
        MIns j;
        j.op = MOp::kJmp;
        jump_to(j, "$route");
      } else {
        emit(bare(MOp::kDone));
      }
    }

    if (in_.mode == MatchMode::kNaive) {
      for (const auto& name : routed_lambdas) emit_table_lookup(name);
    } else if (!fw_.tree.routes.empty()) {
      // one metadata load per dispatched request
      symbol("$route");
      const int r = region(fw::kSystemOwner, kMergedRoutes);
      addr_if_shared(r);
      MIns ld2;
      ld2.op = MOp::kLdm;
      ld2.rd = 6;
      ld2.region = r;
      ld2.off = ir::Operand::reg(2);
      emit(ld2);
      MIns sp;
      sp.op = MOp::kSetPort;
      sp.a = ir::Operand::reg(6);
      emit(sp);
      emit(bare(MOp::kDone));
    }
  }

  // Linear scan over one lambda's own route table.
  void emit_table_lookup(const std::string& lambda) {
    const std::string base = "$route." + lambda;
    const int r = region(fw::kSystemOwner, route_table_name(lambda));
    const auto rows = static_cast<std::int32_t>(fw_.regions[static_cast<std::size_t>(r)].size / 8);
    auto ins = [](MOp op, int rd, ir::Operand a = {}, ir::Operand b = {}) {
      MIns m;
      m.op = op;
      m.rd = rd;
      m.a = a;
      m.b = b;
      return m;
    };
    using ir::Operand;
    symbol(base);
    emit(ins(MOp::kConst, 2, Operand::imm(0)));
    symbol(base + ".loop");
    {
      MIns j = ins(MOp::kJge, 2, Operand::imm(rows));
      jump_to(j, base + ".miss");
    }
    emit(ins(MOp::kShl, 3, Operand::reg(2), Operand::imm(3)));
    addr_if_shared(r);
    {
      MIns ld = ins(MOp::kLdm, 4);
      ld.region = r;
      ld.off = Operand::reg(3);
      emit(ld);
    }
    {
      MIns lf = ins(MOp::kLdf, 5);
      lf.disp = kWidOffset;
      lf.width = 4;
      emit(lf);
    }
    {
      MIns j = ins(MOp::kJeq, 4, Operand::reg(5));
      jump_to(j, base + ".hit");
    }
    emit(ins(MOp::kAdd, 2, Operand::reg(2), Operand::imm(1)));
    jump_to(ins(MOp::kJmp, 0), base + ".loop");
    symbol(base + ".hit");
    emit(ins(MOp::kAdd, 3, Operand::reg(3), Operand::imm(4)));
    addr_if_shared(r);
    {
      MIns ld = ins(MOp::kLdm, 6);
      ld.region = r;
      ld.off = Operand::reg(3);
      emit(ld);
    }
    emit(ins(MOp::kSetPort, 0, Operand::reg(6)));
    emit(ins(MOp::kRet, 0));
    symbol(base + ".miss");
    emit(ins(MOp::kRet, 0));
  }

  bool has_routes(const std::string& lambda) const {
    for (const auto& r : in_.prog->match.rules)
      if (r.lambda == lambda && r.port) return true;
    return false;
  }

  const ir::LambdaProgram* find_lambda(const std::string& name) const {
    for (const auto& l : in_.lambdas)
      if (l.name == name) return &l;
    throw CompileError("match rule references unknown lambda " + name);
  }

  std::string function_symbol(const ir::LambdaProgram& l, const std::string& fn) const {
    if (fn.rfind("$h", 0) == 0) return fn;
    return l.name + "." + fn;
  }

  std::string entry_symbol(const ir::LambdaProgram& l) const { return function_symbol(l, l.entry); }

  struct Ref {
    int region;
    std::int32_t disp;
    std::int64_t bound;  // static bound for guards, -1 when dynamic
  };

  Ref resolve(const ir::LambdaProgram& l, const ir::MemRef& m) const {
    if (m.is_header()) {
      const auto* h = in_.prog->find_header(m.object);
      if (!h) throw CompileError("unknown header " + m.object);
      const auto off = h->field_offset(m.field);
      if (!off) throw CompileError("unknown header field " + m.object + "." + m.field);
      return {fw::kRegionPhv, static_cast<std::int32_t>(phv_base_.at(m.object) + *off), h->find(m.field)->width};
    }
    if (m.object == ir::kPayload) return {fw::kRegionPayload, 0, -1};
    if (m.object == ir::kResp) return {fw::kRegionResp, 0, ir::kRespCapacity};
    if (m.object == ir::kReply) return {fw::kRegionReply, 0, -1};
    const int r = region(l.name, m.object);
    return {r, 0, fw_.regions[static_cast<std::size_t>(r)].size};
  }

  void emit_function(const ir::LambdaProgram& l, const ir::Function& f, const std::string& name) {
    const std::size_t start_fixups = fixups_.size();
    std::vector<std::size_t> first(f.body.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> branch_fixups;  // (pc, ir index)
    symbol(name);
    for (std::size_t i = 0; i < f.body.size(); ++i) {
      first[i] = fw_.code.size();
      const auto& ins = f.body[i];
      switch (ins.op) {
        case Op::kConst: case Op::kMov: case Op::kAdd: case Op::kSub: case Op::kMul: case Op::kDiv:
        case Op::kAnd: case Op::kOr: case Op::kXor: case Op::kShl: case Op::kShr: {
          MIns m;
          m.op = alu(ins.op);
          m.rd = ins.rd;
          m.a = ins.a;
          m.b = ins.b;
          emit(m);
          break;
        }
        case Op::kMulSh: case Op::kDivSh: {
          MIns m;
          m.op = alu(ins.op);
          m.rd = ins.rd;
          m.a = ins.a;
          m.b = ins.b;
          m.imm = ins.dst.offset.value;
          emit(m);
          break;
        }
        case Op::kJmp: case Op::kJeq: case Op::kJne: case Op::kJlt: case Op::kJge: {
          MIns m;
          m.op = alu(ins.op);
          m.rd = ins.rd;
          m.a = ins.a;
          branch_fixups.emplace_back(fw_.code.size(), *f.label_index(ins.target));
          emit(m);
          break;
        }
        case Op::kLdh: case Op::kSth: {
          const auto* h = in_.prog->find_header(ins.header);
          MIns m;
          m.op = ins.op == Op::kLdh ? MOp::kLdf : MOp::kStf;
          m.rd = ins.rd;
          m.a = ins.a;
          m.disp = static_cast<std::int32_t>(phv_base_.at(ins.header) + *h->field_offset(ins.field));
          m.width = h->find(ins.field)->width;
          emit(m);
          break;
        }
        case Op::kLdm: case Op::kStm: case Op::kLdb: case Op::kStb: {
          const Ref r = resolve(l, ins.dst);
          addr_if_shared(r.region);
          MIns m;
          m.op = ins.op == Op::kLdm ? MOp::kLdm : ins.op == Op::kStm ? MOp::kStm : ins.op == Op::kLdb ? MOp::kLdb : MOp::kStb;
          m.rd = ins.rd;
          m.a = ins.a;
          m.region = r.region;
          m.disp = r.disp;
          m.off = ins.dst.offset;
          emit(m);
          break;
        }
        case Op::kMemcpy: {
          const Ref d = resolve(l, ins.dst);
          const Ref s = resolve(l, ins.src);
          addr_if_shared(d.region);
          addr_if_shared(s.region);
          MIns m;
          m.op = MOp::kMemcpy;
          m.region = d.region;
          m.disp = d.disp;
          m.off = ins.dst.offset;
          m.region2 = s.region;
          m.disp2 = s.disp;
          m.off2 = ins.src.offset;
          m.b = ins.b;
          emit(m);
          break;
        }
        case Op::kEmitPkt: {
          const Ref s = resolve(l, ins.dst);
          addr_if_shared(s.region);
          MIns m;
          m.op = MOp::kEmitPkt;
          m.rd = ins.rd;
          m.a = ins.a;
          m.region = s.region;
          m.disp = s.disp;
          m.off = ins.dst.offset;
          m.b = ins.b;
          emit(m);
          break;
        }
        case Op::kGuard: {
          const Ref r = resolve(l, ins.dst);
          MIns m;
          m.op = MOp::kGuard;
          m.region = r.region;
          m.off = ins.dst.offset;
          m.b = ins.b;
          m.imm = r.bound;
          emit(m);
          break;
        }
        case Op::kLdmd: {
          MIns m;
          m.op = MOp::kLdmd;
          m.rd = ins.rd;
          m.imm = ins.a.value;
          emit(m);
          break;
        }
        case Op::kCall: {
          MIns m;
          m.op = MOp::kCall;
          jump_to(m, function_symbol(l, ins.target));
          break;
        }
        case Op::kRet:
          emit(bare(MOp::kRet));
          break;
        case Op::kHalt: {
          MIns m;
          m.op = MOp::kExit;
          m.a = ins.a;
          emit(m);
          break;
        }
        case Op::kFConst: case Op::kFAdd: case Op::kFSub: case Op::kFMul: case Op::kFDiv:
          throw CompileError("float instruction survived lowering in " + name);
      }
    }
    for (const auto& [pc, idx] : branch_fixups) fw_.code[pc].target = static_cast<std::uint32_t>(first[idx]);
    (void)start_fixups;
  }

  void resolve_fixups() {
    std::map<std::string, std::uint32_t> at;
    for (const auto& [name, pc] : fw_.symbols) at.emplace(name, pc);
    for (const auto& f : fixups_) {
      const auto it = at.find(f.symbol);
      if (it == at.end()) throw CompileError("unresolved symbol " + f.symbol);
      fw_.code[f.pc].target = it->second;
    }
  }

  const CodegenInput& in_;
  const NicSpec& nic_;
  fw::Firmware fw_;
  std::map<std::string, std::uint32_t> phv_base_;
  std::map<std::string, int> region_of_;
  std::map<std::string, std::int64_t> lambda_index_;
  std::vector<Fixup> fixups_;
};

std::vector<ObjectRequest> object_requests(const std::vector<ir::LambdaProgram>& lambdas, const ir::MLProgram& prog,
                                           MatchMode mode) {
  std::vector<ObjectRequest> out;
  for (const auto& l : lambdas) {
    const auto counts = ir::static_access_counts(l);
    for (const auto& g : l.globals) {
      ObjectRequest r{l.name, g.name, g.size, g.pragma, 0, 0};
      for (const auto& [name, c] : counts)
        if (name == g.name) {
          r.reads = c.reads;
          r.writes = c.writes;
        }
      out.push_back(std::move(r));
    }
  }
  if (mode == MatchMode::kNaive) {
    std::vector<std::string> seen;
    for (const auto& rule : prog.match.rules) {
      if (!rule.port || std::find(seen.begin(), seen.end(), rule.lambda) != seen.end()) continue;
      seen.push_back(rule.lambda);
      std::uint32_t rows = 0;
      for (const auto& r : prog.match.rules)
        if (r.lambda == rule.lambda && r.port) ++rows;
      out.push_back({fw::kSystemOwner, route_table_name(rule.lambda), rows * 8, ir::Pragma::kReadonly, 2, 0});
    }
  } else {
    std::uint32_t rows = 0;
    for (const auto& r : prog.match.rules)
      if (r.port) ++rows;
    if (rows > 0) out.push_back({fw::kSystemOwner, kMergedRoutes, rows * 8, ir::Pragma::kReadonly, 1, 0});
  }
  return out;
}

std::vector<ir::LambdaProgram> guard_all(const std::vector<ir::LambdaProgram>& lambdas, const fw::PlacementMap& p,
                                         bool enabled) {
  if (!enabled) return lambdas;
  std::vector<ir::LambdaProgram> out;
  for (const auto& l : lambdas) out.push_back(insert_isolation_guards(l, p));
  return out;
}

std::vector<ir::Function> guard_helpers(const std::vector<ir::Function>& helpers, const ir::MLProgram& prog,
                                        const fw::PlacementMap& p, bool enabled) {
  if (!enabled || helpers.empty()) return helpers;
  ir::LambdaProgram host;
  host.name = "$helpers";
  host.headers = prog.headers;
  host.functions = helpers;
  return insert_isolation_guards(host, p).functions;
}

}  // namespace

std::string CompileReport::table() const {
  std::ostringstream os;
  os << "pass,instructions\n";
  for (const auto& p : passes) os << p.pass << "," << p.instructions << "\n";
  return os.str();
}

std::string CompileReport::summary() const {
  std::ostringstream os;
  for (const auto& p : passes) os << std::left << std::setw(22) << p.pass << std::right << std::setw(8) << p.instructions << "\n";
  if (passes.size() > 1) {
    const double first = static_cast<double>(passes.front().instructions);
    const double last = static_cast<double>(passes.back().instructions);
    os << "reduction: " << std::fixed << std::setprecision(2) << (first > 0 ? 100.0 * (first - last) / first : 0.0)
       << "% (" << passes.front().instructions << " -> " << passes.back().instructions << ")\n";
  }
  if (!coalesce.helpers.empty()) {
    os << "shared helpers:";
    for (const auto& h : coalesce.helpers) os << " " << h;
    os << "\n";
  }
  for (const auto& w : warnings) os << "warning: " << w << "\n";
  return os.str();
}

CompileResult compile(const ir::MLProgram& input, const NicSpec& nic, const CompileOptions& options) {
  if (options.opt_level != 0 && options.opt_level != 1) throw CompileError("opt level must be 0 or 1");
  ir::MLProgram prog = input;
  prog.finalize();
  if (const auto v = ir::validate(prog); !v.ok()) throw CompileError("validation failed:\n" + v.summary());

  CompileResult result;
  std::vector<ir::LambdaProgram> lowered;
  for (const auto& l : prog.lambdas) {
    if (l.has_float_ops()) result.report.lowered.push_back(l.name);
    lowered.push_back(l.has_float_ops() ? lower_fixed_point(l) : l);
  }
  prog.lambdas = lowered;
  result.report.warnings = infer_parse_graph(prog).warnings;

  auto build = [&](const std::vector<ir::LambdaProgram>& lambdas, const std::vector<ir::Function>& helpers,
                   MatchMode mode, bool stratified) {
    const auto objects = object_requests(lambdas, prog, mode);
    CodegenInput in;
    in.prog = &prog;
    in.placement = stratified ? stratify(objects, nic) : naive_placement(objects, nic);
    in.lambdas = guard_all(lambdas, in.placement, options.guards);
    in.helpers = guard_helpers(helpers, prog, in.placement, options.guards);
    in.mode = mode;
    in.opt_level = options.opt_level;
    return Codegen(in, nic).run();
  };

  fw::Firmware firmware = build(lowered, {}, MatchMode::kNaive, false);
  result.report.passes.push_back({"naive", firmware.total_instructions()});
  if (options.opt_level == 1) {
    auto co = coalesce(lowered);
    result.report.coalesce = co.report;
    firmware = build(co.lambdas, co.helpers, MatchMode::kNaive, false);
    result.report.passes.push_back({"coalescing", firmware.total_instructions()});
    firmware = build(co.lambdas, co.helpers, MatchMode::kReduced, false);
    result.report.passes.push_back({"match reduction", firmware.total_instructions()});
    firmware = build(co.lambdas, co.helpers, MatchMode::kReduced, true);
    result.report.passes.push_back({"memory stratification", firmware.total_instructions()});
  }
  if (firmware.total_instructions() > nic.instruction_store)
    throw CompileError("firmware needs " + std::to_string(firmware.total_instructions()) +
                       " instructions; instruction store holds " + std::to_string(nic.instruction_store));
  result.firmware = std::move(firmware);
  return result;
}

}  // namespace lnic::compiler

namespace lnic::fw {

std::string_view mop_name(MOp op) {
  switch (op) {
    case MOp::kConst: return "CONST";
    case MOp::kMov: return "MOV";
    case MOp::kAdd: return "ADD";
    case MOp::kSub: return "SUB";
    case MOp::kMul: return "MUL";
    case MOp::kDiv: return "DIV";
    case MOp::kAnd: return "AND";
    case MOp::kOr: return "OR";
    case MOp::kXor: return "XOR";
    case MOp::kShl: return "SHL";
    case MOp::kShr: return "SHR";
    case MOp::kMulSh: return "MULSH";
    case MOp::kDivSh: return "DIVSH";
    case MOp::kJmp: return "JMP";
    case MOp::kJeq: return "JEQ";
    case MOp::kJne: return "JNE";
    case MOp::kJlt: return "JLT";
    case MOp::kJge: return "JGE";
    case MOp::kExtT: return "EXTT";
    case MOp::kExt: return "EXT";
    case MOp::kLdf: return "LDF";
    case MOp::kStf: return "STF";
    case MOp::kLdm: return "LDM";
    case MOp::kStm: return "STM";
    case MOp::kLdb: return "LDB";
    case MOp::kStb: return "STB";
    case MOp::kMemcpy: return "MEMCPY";
    case MOp::kEmitPkt: return "EMITPKT";
    case MOp::kAddr: return "ADDR";
    case MOp::kGuard: return "GUARD";
    case MOp::kLdmd: return "LDMD";
    case MOp::kCall: return "CALL";
    case MOp::kRet: return "RET";
    case MOp::kLCall: return "LCALL";
    case MOp::kExit: return "EXIT";
    case MOp::kSetPort: return "SETPORT";
    case MOp::kToHost: return "TOHOST";
    case MOp::kDone: return "DONE";
  }
  return "?";
}

namespace {

std::string opnd(const ir::Operand& o) {
  if (o.is_reg()) return "r" + std::to_string(o.value);
  if (o.is_imm()) return std::to_string(o.value);
  return "-";
}

}  // namespace

std::string Firmware::listing() const {
  std::ostringstream os;
  std::multimap<std::uint32_t, std::string> labels;
  for (const auto& [name, pc] : symbols) labels.emplace(pc, name);
  auto rname = [&](int r) {
    if (r < 0) return std::string("-");
    const auto& reg = regions[static_cast<std::size_t>(r)];
    return reg.owner.empty() ? reg.name : reg.owner + "." + reg.name;
  };
  for (std::size_t pc = 0; pc < code.size(); ++pc) {
    auto [lo, hi] = labels.equal_range(static_cast<std::uint32_t>(pc));
    for (auto it = lo; it != hi; ++it) os << it->second << ":\n";
    const auto& m = code[pc];
    os << std::setw(6) << pc << "  " << std::left << std::setw(8) << mop_name(m.op) << std::right;
    switch (m.op) {
      case MOp::kJmp: case MOp::kCall: os << " @" << m.target; break;
      case MOp::kLCall: os << " @" << m.target << " lambda=" << m.imm; break;
      case MOp::kJeq: case MOp::kJne: case MOp::kJlt: case MOp::kJge:
        os << " r" << m.rd << ", " << opnd(m.a) << ", @" << m.target;
        break;
      case MOp::kExt: os << " phv+" << m.disp << ", pkt+" << m.imm << ", " << m.width; break;
      case MOp::kLdf: os << " r" << m.rd << ", phv+" << m.disp << ", " << m.width; break;
      case MOp::kStf: os << " phv+" << m.disp << ", " << m.width << ", " << opnd(m.a); break;
      case MOp::kLdm: case MOp::kLdb:
        os << " r" << m.rd << ", [" << rname(m.region) << "+" << m.disp << "+" << opnd(m.off) << "]";
        break;
      case MOp::kStm: case MOp::kStb:
        os << " [" << rname(m.region) << "+" << m.disp << "+" << opnd(m.off) << "], " << opnd(m.a);
        break;
      case MOp::kMemcpy:
        os << " [" << rname(m.region) << "+" << m.disp << "+" << opnd(m.off) << "], [" << rname(m.region2) << "+"
           << m.disp2 << "+" << opnd(m.off2) << "], " << opnd(m.b);
        break;
      case MOp::kEmitPkt:
        os << " r" << m.rd << ", " << opnd(m.a) << ", [" << rname(m.region) << "+" << m.disp << "+" << opnd(m.off)
           << "], " << opnd(m.b);
        break;
      case MOp::kAddr: os << " " << rname(m.region); break;
      case MOp::kGuard:
        os << " " << rname(m.region) << ", " << opnd(m.off) << ", " << opnd(m.b) << ", bound=" << m.imm;
        break;
      case MOp::kLdmd: os << " r" << m.rd << ", " << m.imm; break;
      case MOp::kExit: case MOp::kSetPort: os << " " << opnd(m.a); break;
      case MOp::kMulSh: case MOp::kDivSh:
        os << " r" << m.rd << ", " << opnd(m.a) << ", " << opnd(m.b) << ", " << m.imm;
        break;
      case MOp::kExtT: case MOp::kRet: case MOp::kToHost: case MOp::kDone: break;
      default: os << " r" << m.rd << ", " << opnd(m.a) << (m.b.kind == ir::Operand::Kind::kNone ? "" : ", " + opnd(m.b)); break;
    }
    os << "\n";
  }
  os << "; regions\n";
  for (const auto& r : regions)
    os << ";   " << (r.owner.empty() ? "" : r.owner + ".") << r.name << " " << tier_name(r.tier) << " base=" << r.base
       << " size=" << r.size << "\n";
  return os.str();
}

std::uint64_t Firmware::digest() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  mix(listing());
  for (const auto& r : regions) mix(std::string_view(reinterpret_cast<const char*>(r.init.data()), r.init.size()));
  return h;
}

const ParseNode* ParseGraph::find(const std::string& schema) const {
  for (const auto& n : nodes)
    if (n.schema == schema) return &n;
  return nullptr;
}

std::optional<std::string> DecisionTree::dispatch(std::uint32_t workload_id) const {
  for (const auto& b : chain)
    if (b.workload_id == workload_id) return b.lambda;
  return std::nullopt;
}

const PlacedObject* PlacementMap::find(const std::string& owner, const std::string& name) const {
  for (const auto& o : objects)
    if (o.owner == owner && o.name == name) return &o;
  return nullptr;
}

std::uint64_t PlacementMap::used(Tier tier) const {
  std::uint64_t hi = 0;
  for (const auto& o : objects)
    if (o.tier == tier) hi = std::max(hi, o.base + o.size);
  return hi;
}

std::optional<std::uint32_t> Firmware::workload_id(const std::string& lambda) const {
  for (const auto& [name, id] : workload_ids)
    if (name == lambda) return id;
  return std::nullopt;
}

}  // namespace lnic::fw
