#include <algorithm>
#include <random>

#include "doctest.h"
#include "lnic/interp.hpp"
#include "lnic/validate.hpp"
#include "lnic/workloads.hpp"
#include "oracles.hpp"

using namespace lnic;
using namespace lnic::ir;

namespace {

MLProgram parse(const std::string& body) { return parse_program(body); }

ExecResult run_one(const MLProgram& prog, const Bytes& payload, std::uint32_t wid = 1, InterpOptions opt = {}) {
  const LambdaProgram& l = prog.lambdas.front();
  FlatMemory mem(l);
  Message msg;
  msg.workload_id = wid;
  msg.payload = payload;
  return interpret(l, msg, MatchData{0, 0, static_cast<std::uint32_t>(payload.size())}, mem, opt);
}

bool has_error(const ValidationReport& r, const std::string& needle) {
  return std::any_of(r.errors.begin(), r.errors.end(), [&](const Issue& i) { return i.message.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("text round trip") {
  const MLProgram p = bench::build_suite();
  const MLProgram q = parse_program(to_text(p));
  CHECK(p == q);
}

TEST_CASE("parse errors carry line numbers") {
  try {
    parse(".lambda a\n.func main\n.entry\n  BOGUS r1\n.end\n");
    FAIL("expected a parse error");
  } catch (const IrError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
}

TEST_CASE("recursion is reported as the cycle") {
  const auto r = validate(parse(".lambda a\n.func f\n.entry\n  CALL g\n  HALT 0\n.func g\n  CALL f\n  RET\n.end\n"));
  REQUIRE_FALSE(r.ok());
  bool found = false;
  for (const auto& e : r.errors)
    if (e.cycle == std::vector<std::string>{"f", "g"}) found = true;
  CHECK(found);
}

TEST_CASE("constant out-of-bounds store is rejected") {
  const auto r = validate(parse(".lambda a\n.global obj 16\n.func main\n.entry\n  STM [obj+16], r1\n  HALT 0\n.end\n"));
  CHECK(has_error(r, "out-of-bounds"));
  const auto ok = validate(parse(".lambda a\n.global obj 16\n.func main\n.entry\n  STM [obj+12], r1\n  HALT 0\n.end\n"));
  CHECK(ok.ok());
}

TEST_CASE("float programs are accepted and flagged") {
  const auto r = validate(parse(".lambda a\n.func main\n.entry\n  FCONST r1, 1.5\n  FADD r2, r1, r1\n  HALT 16\n.end\n"));
  CHECK(r.ok());
  CHECK(r.requires_lowering == std::vector<std::string>{"a"});
}

TEST_CASE("other validation rules") {
  CHECK(has_error(validate(parse(".lambda a\n.func main\n.entry\n  LDH r1, nope.x\n  HALT 0\n.end\n")), "unknown header"));
  CHECK(has_error(validate(parse(".lambda a\n.func main\n.entry\n  JMP nowhere\n.end\n")), "undefined label"));
  CHECK(has_error(validate(parse(".lambda a\n.func main\n.entry\n  CONST r1, 1\n.end\n")), "fall off"));
  CHECK(has_error(validate(parse(".lambda a\n.func main\n.entry\n  STB [payload+0], r1\n  HALT 0\n.end\n")), "read-only"));
  CHECK(has_error(validate(parse(".lambda a\n.global c 4 readonly\n.func main\n.entry\n  STM [c+0], r1\n  HALT 0\n.end\n")),
                  "readonly"));
  CHECK(has_error(validate(parse(".lambda a\n.func main\n.entry\n  HALT 0\n.end\n.match\n  1 -> b\n.end\n")), "unknown lambda"));
}

TEST_CASE("validation is stable under function reordering") {
  const std::string a = ".lambda x\n.global g 8\n.func helper\n  STM [g+0], r1\n  RET\n.func main\n.entry\n  CALL helper\n  HALT 16\n.end\n";
  const std::string b = ".lambda x\n.global g 8\n.func main\n.entry\n  CALL helper\n  HALT 16\n.func helper\n  STM [g+0], r1\n  RET\n.end\n";
  CHECK(validate(parse(a)).ok() == validate(parse(b)).ok());
  const std::string bad_a = ".lambda x\n.global g 8\n.func helper\n  STM [g+8], r1\n  RET\n.func main\n.entry\n  CALL helper\n  HALT 16\n.end\n";
  const std::string bad_b = ".lambda x\n.global g 8\n.func main\n.entry\n  CALL helper\n  HALT 16\n.func helper\n  STM [g+8], r1\n  RET\n.end\n";
  CHECK(validate(parse(bad_a)).errors.size() == validate(parse(bad_b)).errors.size());
  CHECK_FALSE(validate(parse(bad_b)).ok());
}

TEST_CASE("HALT 0 runs one instruction") {
  const auto r = run_one(parse(".lambda a\n.func main\n.entry\n  HALT 0\n.end\n"), {});
  CHECK(r.rc == 0);
  CHECK(r.response.empty());
  CHECK(r.instructions == 1);
}

TEST_CASE("web server returns its content") {
  const MLProgram p = bench::build_workload("webserver");
  const LambdaProgram& l = p.lambdas.front();
  FlatMemory mem(l);
  const Bytes content(mem.object("content").begin(), mem.object("content").end());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    Bytes req(4 + rng() % 40);
    for (auto& b : req) b = static_cast<std::uint8_t>(rng());
    Message msg;
    msg.payload = req;
    const auto r = interpret(l, msg, MatchData{0, 0, static_cast<std::uint32_t>(req.size())}, mem);
    CHECK(r.rc == kForward);
    CHECK(r.response == content);
  }
  CHECK(content.size() == 1024);
}

TEST_CASE("grayscale of a 2x1 image") {
  bench::WorkloadParams params;
  params.image_width = 2;
  params.image_height = 1;
  const Bytes img = {255, 255, 255, 255, 0, 0, 0, 0};
  const auto r = run_one(bench::build_workload("imagexform", params), img);
  CHECK(r.rc == kForward);
  CHECK(r.response == Bytes{255, 0});
  CHECK(r.response == oracle::gray(img));
}

TEST_CASE("MEMCPY counts ceil(len/8) units") {
  for (int len : {0, 1, 7, 8, 9, 64, 100}) {
    const auto prog = parse(".lambda a\n.global g 128\n.func main\n.entry\n  MEMCPY [resp+0], [g+0], " + std::to_string(len) +
                            "\n  HALT 16\n.end\n");
    const auto r = run_one(prog, {});
    CHECK(r.instructions == 1 + oracle::ceil_div(static_cast<std::uint64_t>(len), 8));
    CHECK(r.response.size() == static_cast<std::size_t>(len));
  }
}

TEST_CASE("runtime traps") {
  SUBCASE("division by zero") {
    const auto r = run_one(parse(".lambda a\n.func main\n.entry\n  CONST r1, 5\n  DIV r2, r1, r3\n  HALT 16\n.end\n"), {});
    CHECK(r.rc == kTrapDivZero);
  }
  SUBCASE("register offset past the object") {
    const auto r = run_one(parse(".lambda a\n.global g 8\n.func main\n.entry\n  CONST r1, 6\n  LDM r2, [g+r1]\n  HALT 16\n.end\n"), {});
    CHECK(r.rc == kTrapBounds);
  }
  SUBCASE("payload read past its length") {
    const auto r = run_one(parse(".lambda a\n.func main\n.entry\n  CONST r1, 3\n  LDB r2, [payload+r1]\n  HALT 16\n.end\n"), {1, 2, 3});
    CHECK(r.rc == kTrapBounds);
  }
  SUBCASE("budget") {
    InterpOptions opt;
    opt.budget = 1000;
    const auto r = run_one(parse(".lambda a\n.func main\n.entry\nloop:\n  JMP loop\n.end\n"), {}, 1, opt);
    CHECK(r.rc == kTrapBudget);
    CHECK(r.instructions == 1000);
  }
}

TEST_CASE("a trapped request leaves the store it did not reach untouched") {
  const auto prog = parse(
      ".lambda a\n.global g 8\n.func main\n.entry\n  CONST r1, 9\n  STM [g+0], r1\n  CONST r3, 8\n  STB [g+r3], r1\n  HALT 16\n.end\n");
  const LambdaProgram& l = prog.lambdas.front();
  FlatMemory mem(l);
  const auto r = interpret(l, Message{}, MatchData{}, mem);
  CHECK(r.rc == kTrapBounds);
  CHECK(mem.bytes().size() == 8);
  CHECK(mem.object("g")[3] == 9);
}

TEST_CASE("interpretation is deterministic") {
  const MLProgram p = bench::build_workload("imagexform");
  std::mt19937_64 rng(1);
  Bytes img(64 * 64 * 4);
  for (auto& b : img) b = static_cast<std::uint8_t>(rng());
  const auto a = run_one(p, img), b = run_one(p, img);
  CHECK(a.response == b.response);
  CHECK(a.instructions == b.instructions);
  CHECK(a.response == oracle::gray(img));
}

TEST_CASE("header fields and match data") {
  const auto prog = parse(
      ".header hh\n  a 1\n  b 2\n  c 4\n.end\n.lambda x\n.func main\n.entry\n  LDH r1, hh.b\n  STM [resp+0], r1\n  LDMD r2, LEN\n"
      "  STM [resp+4], r2\n  LDMD r3, SRC\n  STM [resp+8], r3\n  HALT 16\n.end\n.match\n  1 -> x\n.end\n");
  const LambdaProgram& l = prog.lambdas.front();
  FlatMemory mem(l);
  Message msg;
  msg.payload = {0xAA, 0x12, 0x34, 0, 0, 0, 0};
  const auto r = interpret(l, msg, MatchData{42, 0, 7}, mem);
  Bytes want;
  oracle::put(want, 0x1234, 4);
  oracle::put(want, 7, 4);
  oracle::put(want, 42, 4);
  CHECK(r.response == want);
}

TEST_CASE("EMITPKT goes through the RPC handler") {
  const auto prog = parse(
      ".lambda x\n.func main\n.entry\n  EMITPKT r1, 7, [payload+0], 3\n  MEMCPY [resp+0], [reply+0], r1\n  HALT 16\n.end\n");
  InterpOptions opt;
  opt.rpc = [](std::uint32_t ep, std::span<const std::uint8_t> req) {
    Bytes out(req.begin(), req.end());
    out.push_back(static_cast<std::uint8_t>(ep));
    return out;
  };
  const auto r = run_one(prog, {'a', 'b', 'c', 'd'}, 1, opt);
  REQUIRE(r.emitted.size() == 1);
  CHECK(r.emitted[0].endpoint == 7);
  CHECK(r.emitted[0].bytes == Bytes{'a', 'b', 'c'});
  CHECK(r.response == Bytes{'a', 'b', 'c', 7});
}

TEST_CASE("Q16.16 floats in the interpreter") {
  const auto prog = parse(".lambda x\n.func main\n.entry\n  FCONST r1, 1.5\n  FCONST r2, 2.0\n  FMUL r3, r1, r2\n  STM [resp+0], r3\n"
                          "  FDIV r4, r3, r2\n  STM [resp+4], r4\n  HALT 16\n.end\n");
  const auto r = run_one(prog, {});
  Bytes want;
  oracle::put(want, (98304ull * 131072ull) >> 16, 4);
  oracle::put(want, 98304, 4);
  CHECK(r.response == want);
  CHECK(to_q16(0.5) == 32768);
  CHECK_THROWS_AS(to_q16(40000.0), IrError);
}

TEST_CASE("programs directory parses and validates") {
  for (const char* name : {"web.mlp", "kv.mlp", "image.mlp", "suite.mlp", "fixed_point.mlp"}) {
    CAPTURE(name);
    const MLProgram p = load_program(std::string(LNIC_PROGRAMS_DIR) + "/" + name);
    CHECK(validate(p).ok());
  }
}
