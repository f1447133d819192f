#include "lnic/interp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace lnic::ir {

std::int32_t to_q16(double value) {
  if (!(value >= -32768.0 && value < 32768.0))
    throw IrError("constant " + std::to_string(value) + " outside Q16.16 range");
  const double scaled = std::round(value * 65536.0);
  if (scaled > static_cast<double>(std::numeric_limits<std::int32_t>::max()))
    throw IrError("constant " + std::to_string(value) + " outside Q16.16 range");
  return static_cast<std::int32_t>(scaled);
}

FlatMemory::FlatMemory(const LambdaProgram& prog) {
  std::uint32_t at = 0;
  for (const auto& g : prog.globals) {
    layout_.push_back({g.name, {at, g.size}});
    at += g.size;
  }
  bytes_.assign(at, 0);
  for (const auto& g : prog.globals) {
    const auto b = base(g.name);
    std::copy(g.init.begin(), g.init.end(), bytes_.begin() + b);
  }
}

std::uint32_t FlatMemory::base(const std::string& object) const {
  for (const auto& [name, r] : layout_)
    if (name == object) return r.first;
  throw IrError("no global named " + object);
}

std::span<const std::uint8_t> FlatMemory::object(const std::string& name) const {
  for (const auto& [n, r] : layout_)
    if (n == name) return std::span<const std::uint8_t>(bytes_).subspan(r.first, r.second);
  throw IrError("no global named " + name);
}

namespace {

enum class Obj : std::uint8_t { kGlobal, kPayload, kResp, kReply, kHeader };

struct RMem {
  Obj kind = Obj::kGlobal;
  std::uint32_t index = 0;   // global index or header index
  std::uint32_t base = 0;    // global virtual base, or field offset within the header
  std::uint32_t size = 0;    // global size or header field width
  Operand offset;
};

struct RIns {
  Op op;
  int rd;
  Operand a, b;
  std::uint32_t target = 0;  // instruction index or function index
  RMem dst, src;
  std::uint32_t hdr = 0, hdr_off = 0, hdr_width = 0;
  std::int32_t fq = 0;  // FCONST pre-encoded
  bool fq_valid = true;
};

struct RFunc {
  std::vector<RIns> body;
};

struct Trap {
  std::int32_t rc;
  std::string what;
};

std::uint32_t ceil8(std::uint64_t n) { return static_cast<std::uint32_t>((n + 7) / 8); }

}  // namespace

struct Interpreter::Prepared {
  std::vector<RFunc> funcs;
  std::uint32_t entry = 0;
  std::vector<std::uint32_t> header_offsets;  // payload offset of each layout header
  std::vector<std::uint32_t> header_widths;
};

Interpreter::Interpreter(const LambdaProgram& prog) : p_(std::make_unique<Prepared>()) {
  FlatMemory layout(prog);
  auto fn_index = [&](const std::string& name) -> std::uint32_t {
    for (std::size_t i = 0; i < prog.functions.size(); ++i)
      if (prog.functions[i].name == name) return static_cast<std::uint32_t>(i);
    throw IrError("call to undefined function " + name);
  };
  auto hdr_index = [&](const std::string& name) -> std::uint32_t {
    for (std::size_t i = 0; i < prog.headers.size(); ++i)
      if (prog.headers[i].name == name) return static_cast<std::uint32_t>(i);
    throw IrError("lambda " + prog.name + " does not use header " + name);
  };
  auto resolve = [&](const MemRef& m) {
    RMem r;
    r.offset = m.offset;
    if (m.is_header()) {
      r.kind = Obj::kHeader;
      r.index = hdr_index(m.object);
      const auto& schema = prog.headers[r.index];
      const auto off = schema.field_offset(m.field);
      if (!off) throw IrError("unknown header field " + m.object + "." + m.field);
      r.base = *off;
      r.size = schema.find(m.field)->width;
    } else if (m.object == kPayload) {
      r.kind = Obj::kPayload;
    } else if (m.object == kResp) {
      r.kind = Obj::kResp;
    } else if (m.object == kReply) {
      r.kind = Obj::kReply;
    } else {
      for (std::size_t i = 0; i < prog.globals.size(); ++i) {
        if (prog.globals[i].name == m.object) {
          r.index = static_cast<std::uint32_t>(i);
          r.base = layout.base(m.object);
          r.size = prog.globals[i].size;
          return r;
        }
      }
      throw IrError("unknown object " + m.object);
    }
    return r;
  };

  for (const auto& f : prog.functions) {
    RFunc rf;
    for (const auto& ins : f.body) {
      RIns r{ins.op, ins.rd, ins.a, ins.b, 0, {}, {}, 0, 0, 0, 0, true};
      if (is_branch(ins.op)) {
        const auto idx = f.label_index(ins.target);
        if (!idx) throw IrError("undefined label " + ins.target);
        r.target = static_cast<std::uint32_t>(*idx);
      } else if (ins.op == Op::kCall) {
        r.target = fn_index(ins.target);
      }
      switch (ins.op) {
        case Op::kLdm: case Op::kLdb: case Op::kStm: case Op::kStb: case Op::kEmitPkt: case Op::kGuard:
          r.dst = resolve(ins.dst);
          break;
        case Op::kMemcpy:
          r.dst = resolve(ins.dst);
          r.src = resolve(ins.src);
          break;
        case Op::kMulSh: case Op::kDivSh:
          r.dst.offset = ins.dst.offset;
          break;
        case Op::kLdh: case Op::kSth: {
          r.hdr = hdr_index(ins.header);
          const auto& schema = prog.headers[r.hdr];
          const auto off = schema.field_offset(ins.field);
          if (!off) throw IrError("unknown header field " + ins.header + "." + ins.field);
          r.hdr_off = *off;
          r.hdr_width = schema.find(ins.field)->width;
          break;
        }
        case Op::kFConst:
          try {
            r.fq = to_q16(ins.fimm);
          } catch (const IrError&) {
            r.fq_valid = false;
          }
          break;
        default:
          break;
      }
      rf.body.push_back(r);
    }
    p_->funcs.push_back(std::move(rf));
  }
  p_->entry = fn_index(prog.entry);
  std::uint32_t off = 0;
  for (const auto& h : prog.headers) {
    p_->header_offsets.push_back(off);
    p_->header_widths.push_back(h.total_width());
    off += h.total_width();
  }
}

Interpreter::~Interpreter() = default;
Interpreter::Interpreter(Interpreter&&) noexcept = default;
Interpreter& Interpreter::operator=(Interpreter&&) noexcept = default;

ExecResult Interpreter::run(const Message& msg, const MatchData& md, FlatMemory& memory,
                            const InterpOptions& options) const {
  ExecResult out;
  std::array<std::int32_t, kNumRegisters> reg{};
  const Bytes& payload = msg.payload;
  Bytes resp;
  std::size_t resp_len = 0;
  Bytes reply;

  std::vector<Bytes> headers;
  for (std::size_t h = 0; h < p_->header_offsets.size(); ++h) {
    Bytes bytes(p_->header_widths[h], 0);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      const std::size_t at = p_->header_offsets[h] + i;
      if (at < payload.size()) bytes[i] = payload[at];
    }
    headers.push_back(std::move(bytes));
  }

  auto value = [&](const Operand& o) -> std::int32_t { return o.is_reg() ? reg[o.value] : o.value; };

  // Returns a byte span for [offset, offset+len) of the object, or throws a bounds trap.
  auto region = [&](const RMem& m, std::int64_t offset, std::int64_t len, bool write) -> std::span<std::uint8_t> {
    if (write && (m.kind == Obj::kPayload || m.kind == Obj::kReply || m.kind == Obj::kHeader))
      throw Trap{kTrapBounds, "write to read-only object"};
    std::span<std::uint8_t> whole;
    switch (m.kind) {
      case Obj::kGlobal: whole = memory.bytes().subspan(m.base, m.size); break;
      case Obj::kPayload: whole = std::span<std::uint8_t>(const_cast<std::uint8_t*>(payload.data()), payload.size()); break;
      case Obj::kReply: whole = reply; break;
      case Obj::kHeader: whole = std::span<std::uint8_t>(headers[m.index]).subspan(m.base, m.size); break;
      case Obj::kResp:
        if (offset < 0 || len < 0 || offset + len > kRespCapacity) throw Trap{kTrapBounds, "resp out of bounds"};
        if (write) {
          if (resp.size() < static_cast<std::size_t>(offset + len)) resp.resize(static_cast<std::size_t>(offset + len), 0);
          resp_len = std::max(resp_len, static_cast<std::size_t>(offset + len));
        } else if (resp.size() < static_cast<std::size_t>(offset + len)) {
          resp.resize(static_cast<std::size_t>(offset + len), 0);
        }
        return std::span<std::uint8_t>(resp).subspan(static_cast<std::size_t>(offset), static_cast<std::size_t>(len));
    }
    if (offset < 0 || len < 0 || offset + len > static_cast<std::int64_t>(whole.size()))
      throw Trap{kTrapBounds, "access outside object bounds"};
    return whole.subspan(static_cast<std::size_t>(offset), static_cast<std::size_t>(len));
  };

  struct Frame {
    std::uint32_t fn;
    std::uint32_t pc;
  };
  std::vector<Frame> stack;
  std::uint32_t fn = p_->entry;
  std::uint32_t pc = 0;
  std::uint64_t& count = out.instructions;

  try {
    for (;;) {
      if (count >= options.budget) throw Trap{kTrapBudget, "instruction budget exceeded"};
      const RIns& ins = p_->funcs[fn].body[pc];
      ++pc;
      ++count;
      switch (ins.op) {
        case Op::kConst: reg[ins.rd] = ins.a.value; break;
        case Op::kMov: reg[ins.rd] = value(ins.a); break;
        case Op::kAdd: case Op::kFAdd:
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(value(ins.a)) + static_cast<std::uint32_t>(value(ins.b)));
          break;
        case Op::kSub: case Op::kFSub:
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(value(ins.a)) - static_cast<std::uint32_t>(value(ins.b)));
          break;
        case Op::kMul:
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(value(ins.a)) * static_cast<std::uint32_t>(value(ins.b)));
          break;
        case Op::kDiv: {
          const std::int32_t d = value(ins.b);
          const std::int32_t n = value(ins.a);
          if (d == 0) throw Trap{kTrapDivZero, "division by zero"};
          reg[ins.rd] = (n == std::numeric_limits<std::int32_t>::min() && d == -1) ? n : n / d;
          break;
        }
        case Op::kAnd: reg[ins.rd] = value(ins.a) & value(ins.b); break;
        case Op::kOr: reg[ins.rd] = value(ins.a) | value(ins.b); break;
        case Op::kXor: reg[ins.rd] = value(ins.a) ^ value(ins.b); break;
        case Op::kShl:
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(value(ins.a)) << (value(ins.b) & 31));
          break;
        case Op::kShr:
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(value(ins.a)) >> (value(ins.b) & 31));
          break;
        case Op::kMulSh: case Op::kFMul: {
          const int sh = ins.op == Op::kFMul ? 16 : ins.dst.offset.value;
          const std::int64_t p = static_cast<std::int64_t>(value(ins.a)) * value(ins.b);
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint64_t>(p >> sh));
          break;
        }
        case Op::kDivSh: case Op::kFDiv: {
          const int sh = ins.op == Op::kFDiv ? 16 : ins.dst.offset.value;
          const std::int32_t d = value(ins.b);
          if (d == 0) throw Trap{kTrapDivZero, "division by zero"};
          const std::int64_t n = static_cast<std::int64_t>(static_cast<std::uint64_t>(static_cast<std::int64_t>(value(ins.a))) << sh);
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint64_t>(n / d));
          break;
        }
        case Op::kFConst:
          if (!ins.fq_valid) throw IrError("FCONST outside Q16.16 range");
          reg[ins.rd] = ins.fq;
          break;
        case Op::kJmp: pc = ins.target; break;
        case Op::kJeq: if (reg[ins.rd] == value(ins.a)) pc = ins.target; break;
        case Op::kJne: if (reg[ins.rd] != value(ins.a)) pc = ins.target; break;
        case Op::kJlt: if (reg[ins.rd] < value(ins.a)) pc = ins.target; break;
        case Op::kJge: if (reg[ins.rd] >= value(ins.a)) pc = ins.target; break;
        case Op::kLdh: {
          const auto& h = headers[ins.hdr];
          const std::size_t w = ins.hdr_width == 8 ? 4 : ins.hdr_width;
          const std::size_t off = ins.hdr_off + (ins.hdr_width == 8 ? 4 : 0);
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(load_be(h, off, w)));
          break;
        }
        case Op::kSth: {
          auto& h = headers[ins.hdr];
          store_be(h, ins.hdr_off, ins.hdr_width, static_cast<std::uint32_t>(value(ins.a)));
          break;
        }
        case Op::kLdm: {
          auto s = region(ins.dst, value(ins.dst.offset), 4, false);
          reg[ins.rd] = static_cast<std::int32_t>(static_cast<std::uint32_t>(load_be(s, 0, 4)));
          break;
        }
        case Op::kLdb: {
          auto s = region(ins.dst, value(ins.dst.offset), 1, false);
          reg[ins.rd] = s[0];
          break;
        }
        case Op::kStm: {
          auto s = region(ins.dst, value(ins.dst.offset), 4, true);
          store_be(s, 0, 4, static_cast<std::uint32_t>(value(ins.a)));
          break;
        }
        case Op::kStb: {
          auto s = region(ins.dst, value(ins.dst.offset), 1, true);
          s[0] = static_cast<std::uint8_t>(value(ins.a));
          break;
        }
        case Op::kMemcpy: {
          const std::int64_t len = value(ins.b);
          auto src = region(ins.src, value(ins.src.offset), len, false);
          Bytes tmp(src.begin(), src.end());
          auto dst = region(ins.dst, value(ins.dst.offset), len, true);
          std::copy(tmp.begin(), tmp.end(), dst.begin());
          count += ceil8(static_cast<std::uint64_t>(len));
          --count;  // the MEMCPY itself is accounted by its copy units
          break;
        }
        case Op::kEmitPkt: {
          const std::int64_t len = value(ins.b);
          auto src = region(ins.dst, value(ins.dst.offset), len, false);
          EmittedPacket pkt{static_cast<std::uint32_t>(ins.a.value), Bytes(src.begin(), src.end())};
          reply = options.rpc ? options.rpc(pkt.endpoint, pkt.bytes) : Bytes{};
          if (reply.size() > kReplyCapacity) reply.resize(kReplyCapacity);
          reg[ins.rd] = static_cast<std::int32_t>(reply.size());
          out.emitted.push_back(std::move(pkt));
          break;
        }
        case Op::kGuard:
          region(ins.dst, value(ins.dst.offset), value(ins.b), false);
          break;
        case Op::kLdmd:
          switch (static_cast<MatchField>(ins.a.value)) {
            case MatchField::kPayloadLen: reg[ins.rd] = static_cast<std::int32_t>(md.payload_len); break;
            case MatchField::kSource: reg[ins.rd] = static_cast<std::int32_t>(md.source_endpoint); break;
            case MatchField::kArrival: reg[ins.rd] = static_cast<std::int32_t>(md.arrival_ns); break;
          }
          break;
        case Op::kCall:
          stack.push_back({fn, pc});
          fn = ins.target;
          pc = 0;
          break;
        case Op::kRet:
          if (stack.empty()) {
            out.rc = reg[0];
            goto done;
          }
          fn = stack.back().fn;
          pc = stack.back().pc;
          stack.pop_back();
          break;
        case Op::kHalt:
          out.rc = value(ins.a);
          goto done;
      }
    }
  } catch (const Trap& t) {
    out.rc = t.rc;
    out.trap = t.what;
    out.response.clear();
    return out;
  }
done:
  if (out.rc == kForward) out.response.assign(resp.begin(), resp.begin() + static_cast<std::ptrdiff_t>(resp_len));
  return out;
}

ExecResult interpret(const LambdaProgram& prog, const Message& msg, const MatchData& md, FlatMemory& memory,
                     const InterpOptions& options) {
  return Interpreter(prog).run(msg, md, memory, options);
}

}  // namespace lnic::ir
