#include "lnic/fuzz.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "lnic/compiler.hpp"
#include "lnic/interp.hpp"
#include "lnic/machine.hpp"
#include "lnic/validate.hpp"

namespace lnic::fuzz {

namespace {

struct Global {
  std::string name;
  std::uint32_t size;
  bool writable;
};

struct HeaderField {
  std::string ref;
  std::uint32_t width;
};

const std::vector<HeaderField> kScalarFields = {{"h.a", 1}, {"h.b", 2}, {"h.c", 4}, {"q.x", 2}, {"q.y", 4}};

constexpr const char* kHeaders =
    ".header h\n  a 1\n  b 2\n  c 4\n  blob 6\n.end\n"
    ".header q\n  x 2\n  y 4\n.end\n";

// Data registers r1..r12 carry values; r20/r21 hold computed offsets; loop
// counters live in r24.. (main) and r27.. (helpers) so calls never clobber them.
constexpr int kDataRegs = 12;
constexpr int kOffReg = 20;
constexpr int kLenReg = 21;

class Gen {
 public:
  Gen(std::uint64_t seed, const GenOptions& o) : rng_(seed), o_(o) {}

  std::string program() {
    std::ostringstream os;
    os << kHeaders;
    const int lambdas = 1 + pick(o_.max_lambdas);
    // a helper body shared verbatim by several lambdas exercises coalescing
    std::string shared;
    if (chance(0.5)) shared = helper_body("shared");
    for (int l = 0; l < lambdas; ++l) os << lambda("l" + std::to_string(l), shared);
    os << ".match\n";
    int id = 1;
    for (int l = 0; l < lambdas; ++l) {
      os << "  " << id++ << " -> l" << l << " port=" << 1 + pick(3) << "\n";
      if (chance(0.2)) os << "  " << id++ << " -> l" << l << " port=1\n";
    }
    os << ".end\n";
    return os.str();
  }

 private:
  int pick(int n) { return n <= 0 ? 0 : static_cast<int>(rng_() % static_cast<std::uint64_t>(n)); }
  bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }
  std::string reg() { return "r" + std::to_string(1 + pick(kDataRegs)); }
  std::string label() { return "L" + std::to_string(labels_++); }
  std::int32_t small_imm() {
    static const std::int32_t pool[] = {0, 1, 2, 3, 7, 8, 16, 31, 255, -1, -7, 1000, 65535, 0x7fffffff, -2147483647 - 1};
    return chance(0.6) ? pool[pick(std::size(pool))] : static_cast<std::int32_t>(rng_());
  }

  std::string lambda(const std::string& name, const std::string& shared) {
    globals_.clear();
    std::ostringstream os;
    os << ".lambda " << name << "\n";
    static const std::uint32_t sizes[] = {4, 8, 16, 64, 256, 300, 1024, 9000};
    static const char* pragmas[] = {"", " hot", " cold", " readonly"};
    const int n = 1 + pick(3);
    for (int g = 0; g < n; ++g) {
      const std::uint32_t size = sizes[pick(std::size(sizes))];
      std::string pragma = pragmas[pick(4)];
      if (g == 0 && pragma == " readonly") pragma = "";  // g0 is always writable
      std::string init;
      switch (pick(3)) {
        case 0: init = " fill=" + std::to_string(pick(256)); break;
        case 1: init = " pattern=" + std::to_string(pick(1000)); break;
        default: break;
      }
      const std::string gname = "g" + std::to_string(g);
      os << ".global " << gname << " " << size << pragma << init << "\n";
      globals_.push_back({gname, size, pragma != " readonly"});
    }
    std::vector<std::string> helpers;
    if (!shared.empty()) {
      os << shared;
      helpers.push_back("shared");
    }
    if (chance(0.5)) {
      os << helper_body("own");
      helpers.push_back("own");
    }
    helpers_ = helpers;
    os << ".func main\n.entry\n";
    in_helper_ = false;
    // seed most data registers so divisions and offsets are not all zero
    for (int r = 1; r <= kDataRegs; ++r)
      if (chance(0.7)) os << "  CONST r" << r << ", " << small_imm() << "\n";
    const int stmts = 1 + pick(o_.max_statements);
    for (int i = 0; i < stmts; ++i) os << statement(0);
    os << epilogue();
    os << ".end\n";
    return os.str();
  }

  std::string helper_body(const std::string& name) {
    // helpers may only name g0, which every lambda declares
    const auto saved = globals_;
    globals_ = {{"g0", 4, true}};
    in_helper_ = true;
    std::ostringstream os;
    os << ".func " << name << "\n";
    const int stmts = 1 + pick(6);
    for (int i = 0; i < stmts; ++i) os << statement(0);
    os << "  RET\n";
    in_helper_ = false;
    globals_ = saved;
    return os.str();
  }

  std::string epilogue() {
    std::ostringstream os;
    const int writes = pick(4);
    for (int i = 0; i < writes; ++i) os << "  STM [resp+" << 4 * pick(8) << "], " << reg() << "\n";
    const int r = pick(10);
    if (r < 6) os << "  HALT 16\n";
    else if (r == 6) os << "  HALT 17\n";
    else if (r == 7) os << "  HALT 18\n";
    else if (r == 8) os << "  HALT " << reg() << "\n";
    else os << "  CONST r0, 16\n  RET\n";
    return os.str();
  }

  const Global& any_global() { return globals_[pick(static_cast<int>(globals_.size()))]; }
  const Global* writable_global() {
    std::vector<const Global*> w;
    for (const auto& g : globals_)
      if (g.writable) w.push_back(&g);
    return w.empty() ? nullptr : w[pick(static_cast<int>(w.size()))];
  }
  std::uint32_t mask_for(std::uint32_t size) {
    std::uint32_t m = 1;
    while (m < size) m <<= 1;
    return m - 1;
  }

  std::string statement(int depth) {
    std::ostringstream os;
    const int kinds = 20;
    switch (pick(kinds)) {
      case 0:
        os << "  CONST " << reg() << ", " << small_imm() << "\n";
        break;
      case 1: case 2: {
        static const char* ops[] = {"ADD", "SUB", "MUL", "AND", "OR", "XOR", "SHL", "SHR"};
        os << "  " << ops[pick(8)] << " " << reg() << ", " << reg() << ", ";
        if (chance(0.5)) os << reg(); else os << small_imm();
        os << "\n";
        break;
      }
      case 3:
        os << "  DIV " << reg() << ", " << reg() << ", ";
        if (chance(0.4)) os << reg(); else os << (chance(0.1) ? 0 : 1 + pick(100));
        os << "\n";
        break;
      case 4:
        os << "  " << (chance(0.5) ? "MULSH " : "DIVSH ") << reg() << ", " << reg() << ", " << reg() << ", "
           << pick(17) << "\n";
        break;
      case 5: {
        const auto& f = kScalarFields[pick(static_cast<int>(kScalarFields.size()))];
        if (chance(0.85)) os << "  LDH " << reg() << ", " << f.ref << "\n";
        else os << "  STH " << f.ref << ", " << reg() << "\n";
        break;
      }
      case 6: {
        const auto& g = any_global();
        const bool word = g.size >= 4 && chance(0.6);
        const std::uint32_t w = word ? 4 : 1;
        os << "  " << (word ? "LDM " : "LDB ") << reg() << ", [" << g.name << "+" << pick(static_cast<int>(g.size - w + 1))
           << "]\n";
        break;
      }
      case 7: {
        const Global* g = writable_global();
        if (!g) break;
        const bool word = g->size >= 4 && chance(0.6);
        const std::uint32_t w = word ? 4 : 1;
        os << "  " << (word ? "STM [" : "STB [") << g->name << "+" << pick(static_cast<int>(g->size - w + 1)) << "], "
           << reg() << "\n";
        break;
      }
      case 8: {
        // register offset: in bounds most of the time, occasionally past the end
        const auto& g = any_global();
        os << "  AND r" << kOffReg << ", " << reg() << ", " << mask_for(g.size) << "\n";
        const bool store = g.writable && chance(0.5);
        const bool word = chance(0.5);
        if (store) os << "  " << (word ? "STM" : "STB") << " [" << g.name << "+r" << kOffReg << "], " << reg() << "\n";
        else os << "  " << (word ? "LDM " : "LDB ") << reg() << ", [" << g.name << "+r" << kOffReg << "]\n";
        break;
      }
      case 9:
        os << "  " << (chance(0.5) ? "STM" : "STB") << " [resp+" << pick(256) << "], " << reg() << "\n";
        break;
      case 10:
        os << "  AND r" << kOffReg << ", " << reg() << ", 31\n";
        os << "  " << (chance(0.5) ? "LDB " : "LDM ") << reg() << ", [payload+r" << kOffReg << "]\n";
        break;
      case 11: {
        const auto& g = any_global();
        const std::uint32_t len = 1 + pick(static_cast<int>(std::min<std::uint32_t>(g.size, 96)));
        const std::uint32_t off = pick(static_cast<int>(g.size - len + 1));
        os << "  MEMCPY [resp+" << pick(128) << "], [" << g.name << "+" << off << "], " << len << "\n";
        break;
      }
      case 12: {
        const Global* g = writable_global();
        if (!g) break;
        os << "  AND r" << kLenReg << ", " << reg() << ", 15\n";
        os << "  MEMCPY [" << g->name << "+0], [payload+" << pick(8) << "], r" << kLenReg << "\n";
        break;
      }
      case 13:
        if (chance(0.5)) os << "  MEMCPY [resp+" << pick(64) << "], [h.blob+0], 6\n";
        else os << "  MEMCPY [resp+" << pick(64) << "], [h.blob+" << pick(3) << "], 3\n";
        break;
      case 14:
        os << "  LDMD " << reg() << ", " << (chance(0.5) ? "LEN" : "SRC") << "\n";
        break;
      case 15: {
        if (depth >= 2) break;
        const int counter = (in_helper_ ? 27 : 24) + depth;
        const std::string top = label();
        os << "  CONST r" << counter << ", " << 1 + pick(o_.max_loop_trips) << "\n" << top << ":\n";
        const int body = 1 + pick(4);
        for (int i = 0; i < body; ++i) os << statement(depth + 1);
        os << "  SUB r" << counter << ", r" << counter << ", 1\n  JNE r" << counter << ", 0, " << top << "\n";
        break;
      }
      case 16: {
        static const char* br[] = {"JEQ", "JNE", "JLT", "JGE"};
        const std::string skip = label();
        os << "  " << br[pick(4)] << " " << reg() << ", ";
        if (chance(0.5)) os << reg(); else os << small_imm();
        os << ", " << skip << "\n";
        const int body = 1 + pick(3);
        for (int i = 0; i < body; ++i) os << statement(depth + 1);
        os << skip << ":\n";
        break;
      }
      case 17:
        if (!in_helper_ && !helpers_.empty()) os << "  CALL " << helpers_[pick(static_cast<int>(helpers_.size()))] << "\n";
        break;
      case 18: {
        if (!o_.rpc) break;
        const std::string dst = reg();
        switch (pick(3)) {
          case 0: os << "  EMITPKT " << dst << ", 9, [payload+0], " << pick(12) << "\n"; break;
          case 1: os << "  EMITPKT " << dst << ", 9, [g0+0], " << 1 + pick(4) << "\n"; break;
          default: os << "  EMITPKT " << dst << ", 9, [resp+0], " << pick(32) << "\n"; break;
        }
        os << "  AND r" << kLenReg << ", " << dst << ", 31\n";
        os << "  MEMCPY [resp+" << 64 + pick(64) << "], [reply+0], r" << kLenReg << "\n";
        break;
      }
      case 19: {
        if (!o_.floats) break;
        if (chance(0.4)) {
          os << "  FCONST " << reg() << ", " << (static_cast<int>(pick(2000)) - 1000) / 16.0 << "\n";
        } else {
          static const char* fops[] = {"FADD", "FSUB", "FMUL", "FDIV"};
          os << "  " << fops[pick(4)] << " " << reg() << ", " << reg() << ", " << reg() << "\n";
        }
        break;
      }
    }
    return os.str();
  }

  std::mt19937_64 rng_;
  GenOptions o_;
  std::vector<Global> globals_;
  std::vector<std::string> helpers_;
  bool in_helper_ = false;
  int labels_ = 0;
};

std::string describe(const char* who, std::int32_t rc, const Bytes& resp) {
  std::ostringstream os;
  os << who << " rc=0x" << std::hex << rc << std::dec << " resp=" << resp.size() << "B";
  return os.str();
}

}  // namespace

std::string random_program_text(std::uint64_t seed, const GenOptions& options) {
  return Gen(seed, options).program();
}

ir::MLProgram random_program(std::uint64_t seed, const GenOptions& options) {
  return ir::parse_program(random_program_text(seed, options));
}

std::vector<FuzzRequest> random_requests(const ir::MLProgram& prog, std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::uint32_t> ids;
  for (const auto& r : prog.match.rules)
    if (r.workload_id) ids.push_back(*r.workload_id);
  std::vector<FuzzRequest> out;
  if (ids.empty()) return out;
  for (std::size_t i = 0; i < count; ++i) {
    FuzzRequest req;
    req.workload_id = ids[rng() % ids.size()];
    req.source = static_cast<std::uint32_t>(rng() % 6);
    const std::size_t len = rng() % 8 == 0 ? rng() % 12 : 12 + rng() % 100;
    req.payload.resize(len);
    for (auto& b : req.payload) b = static_cast<std::uint8_t>(rng());
    out.push_back(std::move(req));
  }
  return out;
}

Bytes fuzz_rpc_reply(std::uint32_t endpoint, std::span<const std::uint8_t> request) {
  Bytes out(request.rbegin(), request.rend());
  out.push_back(static_cast<std::uint8_t>(endpoint));
  out.push_back(static_cast<std::uint8_t>(request.size()));
  return out;
}

CaseResult check_case(std::uint64_t seed, std::size_t requests_per_program, const NicSpec& nic,
                      const GenOptions& options) {
  CaseResult out;
  out.seed = seed;
  try {
    const ir::MLProgram prog = random_program(seed, options);
    ir::require_valid(prog);
    const fw::Firmware fw0 = compiler::compile(prog, nic, {0, true}).firmware;
    const fw::Firmware fw1 = compiler::compile(prog, nic, {1, true}).firmware;

    std::vector<ir::Interpreter> interps;
    std::vector<ir::FlatMemory> flat;
    for (const auto& l : prog.lambdas) {
      interps.emplace_back(l);
      flat.emplace_back(l);
    }
    emu::PhysicalMemory mem0, mem1;
    emu::initialize_memory(fw0, mem0);
    emu::initialize_memory(fw1, mem1);
    ir::InterpOptions iopt;
    iopt.rpc = fuzz_rpc_reply;
    emu::MachineEnv env0{&nic, &mem0, nullptr, {}};
    emu::MachineEnv env1{&nic, &mem1, nullptr, {}};
    env0.rpc = env1.rpc = [](std::uint32_t ep, std::span<const std::uint8_t> req) {
      return emu::RpcReply{fuzz_rpc_reply(ep, req), sim::kUs};
    };

    std::uint64_t request_id = 1;
    for (const auto& req : random_requests(prog, seed, requests_per_program)) {
      ++out.requests;
      std::size_t li = 0;
      for (const auto& r : prog.match.rules)
        if (r.workload_id == req.workload_id)
          for (std::size_t k = 0; k < prog.lambdas.size(); ++k)
            if (prog.lambdas[k].name == r.lambda) li = k;
      const MatchData md{req.source, 0, static_cast<std::uint32_t>(req.payload.size())};
      Message msg;
      msg.request_id = request_id;
      msg.workload_id = req.workload_id;
      msg.payload = req.payload;
      const ir::ExecResult ref = interps[li].run(msg, md, flat[li], iopt);

      emu::MachineRequest mreq;
      mreq.header = LambdaFrame{0, req.workload_id, request_id, 0, 1, {}};
      mreq.payload = &req.payload;
      mreq.match = md;
      const emu::MachineResult m0 = emu::execute(fw0, mreq, env0);
      const emu::MachineResult m1 = emu::execute(fw1, mreq, env1);
      ++request_id;

      auto same = [&](const emu::MachineResult& m) {
        if (m.rc != ref.rc) return false;
        if (ref.rc == ir::kForward && m.response != ref.response) return false;
        return m.emitted == ref.emitted;
      };
      if (!same(m0) || !same(m1)) {
        out.agree = false;
        out.mismatch = "request " + std::to_string(request_id - 1) + " (lambda " + prog.lambdas[li].name + "): " +
                       describe("interp", ref.rc, ref.response) + ", " + describe("opt0", m0.rc, m0.response) + ", " +
                       describe("opt1", m1.rc, m1.response);
        if (!ref.trap.empty()) out.mismatch += ", interp trap: " + ref.trap;
        if (!m1.trap.empty()) out.mismatch += ", opt1 trap: " + m1.trap;
        return out;
      }
      if (ir::is_trap(ref.rc)) ++out.traps;
      if (ref.rc == ir::kForward) ++out.forwards;
    }
  } catch (const std::exception& e) {
    out.agree = false;
    out.mismatch = std::string("exception: ") + e.what();
  }
  return out;
}

std::size_t BatchResult::disagreements() const {
  return static_cast<std::size_t>(std::count_if(cases.begin(), cases.end(), [](const auto& c) { return !c.agree; }));
}
std::size_t BatchResult::requests() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.requests;
  return n;
}
std::size_t BatchResult::traps() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.traps;
  return n;
}
std::size_t BatchResult::forwards() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.forwards;
  return n;
}

BatchResult run_batch_serial(std::uint64_t first_seed, std::size_t count, std::size_t requests_per_program) {
  BatchResult out;
  out.cases.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.cases.push_back(check_case(first_seed + i, requests_per_program));
  return out;
}

BatchResult run_batch_parallel(std::uint64_t first_seed, std::size_t count, std::size_t requests_per_program) {
  BatchResult out;
  out.cases.resize(count);
  const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i)
    out.cases[static_cast<std::size_t>(i)] = check_case(first_seed + static_cast<std::uint64_t>(i), requests_per_program);
  return out;
}

}  // namespace lnic::fuzz
