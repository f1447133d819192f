#include "lnic/machine.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace lnic::emu {

using fw::MIns;
using fw::MOp;
using fw::RegionKind;

void PhysicalMemory::clear() {
  for (auto& t : pages_) t.clear();
}

void PhysicalMemory::read(Tier tier, std::uint64_t addr, std::span<std::uint8_t> out) const {
  const auto& pages = pages_[static_cast<std::size_t>(tier)];
  std::size_t done = 0;
  while (done < out.size()) {
    const std::uint64_t a = addr + done;
    const std::size_t in_page = static_cast<std::size_t>(a % kPage);
    const std::size_t n = std::min(out.size() - done, kPage - in_page);
    const auto it = pages.find(a / kPage);
    if (it == pages.end()) std::memset(out.data() + done, 0, n);
    else std::memcpy(out.data() + done, it->second->data() + in_page, n);
    done += n;
  }
}

void PhysicalMemory::write(Tier tier, std::uint64_t addr, std::span<const std::uint8_t> in) {
  auto& pages = pages_[static_cast<std::size_t>(tier)];
  std::size_t done = 0;
  while (done < in.size()) {
    const std::uint64_t a = addr + done;
    const std::size_t in_page = static_cast<std::size_t>(a % kPage);
    const std::size_t n = std::min(in.size() - done, kPage - in_page);
    auto& page = pages[a / kPage];
    if (!page) page = std::make_unique<Page>(Page{});
    std::memcpy(page->data() + in_page, in.data() + done, n);
    done += n;
  }
}

std::size_t PhysicalMemory::resident_pages() const {
  std::size_t n = 0;
  for (const auto& t : pages_) n += t.size();
  return n;
}

void RegionTracker::reset(const fw::Firmware& firmware) {
  for (auto& s : spans_) s.clear();
  for (const auto& r : firmware.regions) {
    if (r.kind != RegionKind::kGlobal && r.kind != RegionKind::kTable) continue;
    spans_[static_cast<std::size_t>(r.tier)].push_back({r.base, r.base + r.size, r.owner});
  }
  for (auto& s : spans_) std::sort(s.begin(), s.end(), [](const Span& a, const Span& b) { return a.base < b.base; });
  accesses_ = cross_lambda_ = out_of_region_ = 0;
}

bool RegionTracker::check(const std::string& owner, Tier tier, std::uint64_t addr, std::uint64_t len) {
  ++accesses_;
  const auto& spans = spans_[static_cast<std::size_t>(tier)];
  const std::uint64_t end = addr + std::max<std::uint64_t>(len, 1);
  bool inside = false, foreign = false;
  for (const auto& s : spans) {
    if (s.base >= end) break;
    if (s.end <= addr) continue;
    if (s.owner == owner) {
      if (s.base <= addr && end <= s.end) inside = true;
    } else {
      foreign = true;
    }
  }
  if (!inside) ++out_of_region_;
  if (foreign) ++cross_lambda_;
  return inside && !foreign;
}

void initialize_memory(const fw::Firmware& firmware, PhysicalMemory& memory) {
  for (const auto& r : firmware.regions) {
    if (r.kind != RegionKind::kGlobal && r.kind != RegionKind::kTable) continue;
    Bytes zero(r.size, 0);
    memory.write(r.tier, r.base, zero);
    if (!r.init.empty()) memory.write(r.tier, r.base, std::span<const std::uint8_t>(r.init).first(std::min<std::size_t>(r.init.size(), r.size)));
  }
}

namespace {

struct Trap {
  std::int32_t rc;
  const char* what;
};

std::uint64_t ceil8(std::uint64_t n) { return (n + 7) / 8; }

class Core {
 public:
  Core(const fw::Firmware& f, const MachineRequest& req, const MachineEnv& env)
      : fw_(f), req_(req), env_(env), phv_(f.phv_size, 0) {}

  MachineResult run() {
    try {
      loop();
    } catch (const Trap& t) {
      out_.rc = t.rc;
      out_.trap = t.what;
      out_.response.clear();
      return out_;
    }
    if (out_.lambda >= 0 && out_.rc == ir::kForward)
      out_.response.assign(resp_.begin(), resp_.begin() + static_cast<std::ptrdiff_t>(resp_len_));
    return out_;
  }

 private:
  struct Frame {
    std::uint32_t ret;
    bool lambda;
  };

  std::int32_t val(const ir::Operand& o) const { return o.is_reg() ? reg_[static_cast<std::size_t>(o.value)] : o.value; }

  const fw::Region& region(int r) const { return fw_.regions[static_cast<std::size_t>(r)]; }

  std::uint32_t latency(int r) const {
    if (r == fw::kRegionPayload && req_.payload_in_emem) return env_.nic->tier_latency(Tier::kEmem);
    return env_.nic->tier_latency(region(r).tier);
  }

  std::span<const std::uint8_t> payload() const {
    return req_.payload ? std::span<const std::uint8_t>(*req_.payload) : std::span<const std::uint8_t>{};
  }

  // Per-request buffers are bounds checked by the core itself.
  static void check(std::int64_t off, std::int64_t len, std::int64_t size) {
    if (off < 0 || len < 0 || off + len > size) throw Trap{ir::kTrapBounds, "access outside object bounds"};
  }

  void read(int r, std::int64_t off, std::span<std::uint8_t> out) {
    const auto len = static_cast<std::int64_t>(out.size());
    const auto& reg = region(r);
    switch (reg.kind) {
      case RegionKind::kPayload: {
        const auto p = payload();
        check(off, len, static_cast<std::int64_t>(p.size()));
        std::copy_n(p.begin() + off, len, out.begin());
        return;
      }
      case RegionKind::kResp:
        check(off, len, ir::kRespCapacity);
        for (std::int64_t i = 0; i < len; ++i) {
          const auto at = static_cast<std::size_t>(off + i);
          out[static_cast<std::size_t>(i)] = at < resp_.size() ? resp_[at] : 0;
        }
        return;
      case RegionKind::kReply:
        check(off, len, static_cast<std::int64_t>(reply_.size()));
        std::copy_n(reply_.begin() + off, len, out.begin());
        return;
      case RegionKind::kPhv:
        check(off, len, static_cast<std::int64_t>(phv_.size()));
        std::copy_n(phv_.begin() + off, len, out.begin());
        return;
      case RegionKind::kGlobal: case RegionKind::kTable:
        tier_access(reg, off, len);
        env_.memory->read(reg.tier, reg.base + static_cast<std::uint64_t>(off), out);
        return;
    }
  }

  void write(int r, std::int64_t off, std::span<const std::uint8_t> in) {
    const auto len = static_cast<std::int64_t>(in.size());
    const auto& reg = region(r);
    switch (reg.kind) {
      case RegionKind::kPayload: case RegionKind::kReply: case RegionKind::kPhv:
        throw Trap{ir::kTrapBounds, "write to read-only object"};
      case RegionKind::kResp:
        check(off, len, ir::kRespCapacity);
        if (resp_.size() < static_cast<std::size_t>(off + len)) resp_.resize(static_cast<std::size_t>(off + len), 0);
        resp_len_ = std::max(resp_len_, static_cast<std::size_t>(off + len));
        std::copy(in.begin(), in.end(), resp_.begin() + off);
        return;
      case RegionKind::kGlobal: case RegionKind::kTable:
        tier_access(reg, off, len);
        env_.memory->write(reg.tier, reg.base + static_cast<std::uint64_t>(off), in);
        return;
    }
  }

  // Tier memory has no hardware bounds beyond the tier itself; isolation
  // rests on the compiler's guards, audited by the region tracker.
  void tier_access(const fw::Region& reg, std::int64_t off, std::int64_t len) {
    const std::int64_t addr = static_cast<std::int64_t>(reg.base) + off;
    const auto cap = static_cast<std::int64_t>(env_.nic->tier_capacity(reg.tier));
    if (env_.tracker) {
      const std::string& owner = lambda_ < 0 ? std::string(fw::kSystemOwner) : fw_.lambdas[static_cast<std::size_t>(lambda_)];
      env_.tracker->check(owner, reg.tier, static_cast<std::uint64_t>(std::max<std::int64_t>(addr, 0)),
                          static_cast<std::uint64_t>(std::max<std::int64_t>(len, 0)));
    }
    if (addr < 0 || len < 0 || addr + len > cap) throw Trap{ir::kTrapBounds, "physical address outside tier"};
  }

  void loop() {
    const std::uint64_t budget = env_.nic->instruction_budget;
    std::uint32_t pc = 0;
    for (;;) {
      if (out_.instructions >= budget) throw Trap{ir::kTrapBudget, "instruction budget exceeded"};
      if (pc >= fw_.code.size()) throw Trap{ir::kTrapBounds, "pc outside firmware"};
      const MIns& m = fw_.code[pc++];
      ++out_.instructions;
      ++out_.cycles;
      auto& rd = reg_[static_cast<std::size_t>(m.rd)];
      switch (m.op) {
        case MOp::kConst: rd = m.a.value; break;
        case MOp::kMov: rd = val(m.a); break;
        case MOp::kAdd: rd = static_cast<std::int32_t>(static_cast<std::uint32_t>(val(m.a)) + static_cast<std::uint32_t>(val(m.b))); break;
        case MOp::kSub: rd = static_cast<std::int32_t>(static_cast<std::uint32_t>(val(m.a)) - static_cast<std::uint32_t>(val(m.b))); break;
        case MOp::kMul: rd = static_cast<std::int32_t>(static_cast<std::uint32_t>(val(m.a)) * static_cast<std::uint32_t>(val(m.b))); break;
        case MOp::kDiv: {
          const std::int32_t d = val(m.b), n = val(m.a);
          if (d == 0) throw Trap{ir::kTrapDivZero, "division by zero"};
          rd = (n == std::numeric_limits<std::int32_t>::min() && d == -1) ? n : n / d;
          break;
        }
        case MOp::kAnd: rd = val(m.a) & val(m.b); break;
        case MOp::kOr: rd = val(m.a) | val(m.b); break;
        case MOp::kXor: rd = val(m.a) ^ val(m.b); break;
        case MOp::kShl: rd = static_cast<std::int32_t>(static_cast<std::uint32_t>(val(m.a)) << (val(m.b) & 31)); break;
        case MOp::kShr: rd = static_cast<std::int32_t>(static_cast<std::uint32_t>(val(m.a)) >> (val(m.b) & 31)); break;
        case MOp::kMulSh: {
          const std::int64_t p = static_cast<std::int64_t>(val(m.a)) * val(m.b);
          rd = static_cast<std::int32_t>(static_cast<std::uint64_t>(p >> m.imm));
          break;
        }
        case MOp::kDivSh: {
          const std::int32_t d = val(m.b);
          if (d == 0) throw Trap{ir::kTrapDivZero, "division by zero"};
          const auto n = static_cast<std::int64_t>(static_cast<std::uint64_t>(static_cast<std::int64_t>(val(m.a))) << m.imm);
          rd = static_cast<std::int32_t>(static_cast<std::uint64_t>(n / d));
          break;
        }
        case MOp::kJmp: pc = m.target; break;
        case MOp::kJeq: if (rd == val(m.a)) pc = m.target; break;
        case MOp::kJne: if (rd != val(m.a)) pc = m.target; break;
        case MOp::kJlt: if (rd < val(m.a)) pc = m.target; break;
        case MOp::kJge: if (rd >= val(m.a)) pc = m.target; break;
        case MOp::kExtT: {
          LambdaFrame h = req_.header;
          h.payload.clear();
          const Bytes wire = encode_frame(h, kFrameHeaderSize);
          std::copy_n(wire.begin(), std::min(wire.size(), phv_.size()), phv_.begin());
          break;
        }
        case MOp::kExt: {
          const auto p = payload();
          for (std::uint32_t i = 0; i < m.width; ++i) {
            const auto at = static_cast<std::size_t>(m.imm) + i;
            phv_[static_cast<std::size_t>(m.disp) + i] = at < p.size() ? p[at] : 0;
          }
          break;
        }
        case MOp::kLdf: {
          const std::size_t w = m.width == 8 ? 4 : m.width;
          const std::size_t off = static_cast<std::size_t>(m.disp) + (m.width == 8 ? 4 : 0);
          rd = static_cast<std::int32_t>(static_cast<std::uint32_t>(load_be(phv_, off, w)));
          break;
        }
        case MOp::kStf:
          store_be(phv_, static_cast<std::size_t>(m.disp), m.width, static_cast<std::uint32_t>(val(m.a)));
          break;
        case MOp::kLdm: case MOp::kLdb: {
          const std::size_t w = m.op == MOp::kLdm ? 4 : 1;
          std::array<std::uint8_t, 4> buf{};
          read(m.region, static_cast<std::int64_t>(m.disp) + val(m.off), std::span(buf).first(w));
          rd = m.op == MOp::kLdm ? static_cast<std::int32_t>(static_cast<std::uint32_t>(load_be(buf, 0, 4))) : buf[0];
          out_.cycles += latency(m.region);
          break;
        }
        case MOp::kStm: case MOp::kStb: {
          std::array<std::uint8_t, 4> buf{};
          const std::size_t w = m.op == MOp::kStm ? 4 : 1;
          if (w == 4) store_be(buf, 0, 4, static_cast<std::uint32_t>(val(m.a)));
          else buf[0] = static_cast<std::uint8_t>(val(m.a));
          write(m.region, static_cast<std::int64_t>(m.disp) + val(m.off), std::span<const std::uint8_t>(buf).first(w));
          out_.cycles += latency(m.region);
          break;
        }
        case MOp::kMemcpy: {
          const std::int64_t len = val(m.b);
          if (len < 0) throw Trap{ir::kTrapBounds, "negative copy length"};
          Bytes tmp(static_cast<std::size_t>(len));
          read(m.region2, static_cast<std::int64_t>(m.disp2) + val(m.off2), tmp);
          write(m.region, static_cast<std::int64_t>(m.disp) + val(m.off), tmp);
          const std::uint64_t units = ceil8(static_cast<std::uint64_t>(len));
          out_.instructions += units;
          --out_.instructions;
          out_.cycles += units * (1 + ceil8(latency(m.region2)) + ceil8(latency(m.region))) - 1;
          break;
        }
        case MOp::kEmitPkt: {
          const std::int64_t len = val(m.b);
          if (len < 0) throw Trap{ir::kTrapBounds, "negative packet length"};
          Bytes pkt(static_cast<std::size_t>(len));
          read(m.region, static_cast<std::int64_t>(m.disp) + val(m.off), pkt);
          out_.cycles += latency(m.region);
          const auto endpoint = static_cast<std::uint32_t>(m.a.value);
          RpcReply r;
          if (env_.rpc) r = env_.rpc(endpoint, pkt);
          reply_ = std::move(r.reply);
          if (reply_.size() > ir::kReplyCapacity) reply_.resize(ir::kReplyCapacity);
          rd = static_cast<std::int32_t>(reply_.size());
          out_.cycles += sim::time_to_cycles(r.latency, env_.nic->clock_hz);
          out_.emitted.push_back({endpoint, std::move(pkt)});
          break;
        }
        case MOp::kAddr: break;
        case MOp::kGuard: {
          const std::int64_t off = val(m.off), ext = val(m.b);
          std::int64_t bound = m.imm;
          if (bound < 0) {
            if (m.region == fw::kRegionPayload) bound = static_cast<std::int64_t>(payload().size());
            else if (m.region == fw::kRegionReply) bound = static_cast<std::int64_t>(reply_.size());
            else bound = region(m.region).size;
          }
          check(off, ext, bound);
          break;
        }
        case MOp::kLdmd:
          switch (static_cast<ir::MatchField>(m.imm)) {
            case ir::MatchField::kPayloadLen: rd = static_cast<std::int32_t>(req_.match.payload_len); break;
            case ir::MatchField::kSource: rd = static_cast<std::int32_t>(req_.match.source_endpoint); break;
            case ir::MatchField::kArrival: rd = static_cast<std::int32_t>(req_.match.arrival_ns); break;
          }
          break;
        case MOp::kCall:
          stack_.push_back({pc, false});
          pc = m.target;
          break;
        case MOp::kLCall:
          reg_.fill(0);
          stack_.push_back({pc, true});
          lambda_ = static_cast<int>(m.imm);
          out_.lambda = lambda_;
          pc = m.target;
          break;
        case MOp::kRet: {
          if (stack_.empty()) throw Trap{ir::kTrapBounds, "return with empty stack"};
          const Frame f = stack_.back();
          stack_.pop_back();
          pc = f.ret;
          if (f.lambda) {
            out_.rc = reg_[0];
            lambda_ = -1;
          }
          break;
        }
        case MOp::kExit: {
          out_.rc = val(m.a);
          while (!stack_.empty() && !stack_.back().lambda) stack_.pop_back();
          if (stack_.empty()) throw Trap{ir::kTrapBounds, "exit outside a lambda"};
          pc = stack_.back().ret;
          stack_.pop_back();
          lambda_ = -1;
          break;
        }
        case MOp::kSetPort: out_.port = static_cast<std::uint32_t>(val(m.a)); break;
        case MOp::kToHost: out_.to_host = true; return;
        case MOp::kDone: return;
      }
    }
  }

  const fw::Firmware& fw_;
  const MachineRequest& req_;
  const MachineEnv& env_;
  std::array<std::int32_t, ir::kNumRegisters> reg_{};
  std::vector<Frame> stack_;
  Bytes phv_;
  Bytes resp_;
  std::size_t resp_len_ = 0;
  Bytes reply_;
  int lambda_ = -1;
  MachineResult out_;
};

}  // namespace

MachineResult execute(const fw::Firmware& firmware, const MachineRequest& req, const MachineEnv& env) {
  if (!env.nic || !env.memory) throw std::invalid_argument("machine environment needs a NIC spec and memory");
  return Core(firmware, req, env).run();
}

}  // namespace lnic::emu
