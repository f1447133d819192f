#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "lnic/compiler.hpp"
#include "lnic/fuzz.hpp"
#include "lnic/nic.hpp"
#include "lnic/workloads.hpp"
#include "oracles.hpp"

using namespace lnic;
using emu::Outcome;

namespace {

fw::Firmware build(const ir::MLProgram& prog, const NicSpec& nic = {}, int opt = 1) {
  return compiler::compile(prog, nic, {opt, true}).firmware;
}

fw::Firmware web_firmware(std::uint32_t content = 1024) {
  bench::WorkloadParams p;
  p.content_size = content;
  return build(bench::build_workload("webserver", p));
}

Bytes web_request() { return {1, 1, 0, 0}; }

Bytes wire(std::uint32_t wid, std::uint64_t rid, const Bytes& payload) {
  return encode_frame(LambdaFrame{0, wid, rid, 0, 1, payload});
}

std::size_t count(const std::vector<emu::TraceRecord>& t, Outcome o) {
  return static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [&](const auto& r) { return r.outcome == o; }));
}

// Two lambdas doing identical work under different ids.
ir::MLProgram twin_program() {
  std::string body = ".func main\n.entry\n  CONST r1, 0\nl:\n  ADD r1, r1, 1\n  JLT r1, 50, l\n  HALT 16\n.end\n";
  return ir::parse_program(".lambda a\n" + body + ".lambda b\n" + body + ".match\n  1 -> a\n  2 -> b\n.end\n");
}

}  // namespace

TEST_CASE("firmware over the instruction store is rejected at load") {
  std::string src = ".lambda big\n.func main\n.entry\n";
  for (int i = 0; i < 20000; ++i) src += "  ADD r1, r1, 1\n";
  src += "  HALT 16\n.end\n.match\n  1 -> big\n.end\n";
  NicSpec roomy;
  roomy.instruction_store = 1 << 20;
  const auto fw = build(ir::parse_program(src), roomy);
  REQUIRE(fw.total_instructions() > 20000);
  sim::Scheduler sched;
  emu::NicEmulator nic(sched, NicSpec{}, 1);
  CHECK_THROWS_AS(nic.install_firmware(fw), emu::LoadError);
  CHECK_THROWS_AS(nic.load_firmware(fw), emu::LoadError);
  CHECK_FALSE(nic.loaded());
}

TEST_CASE("traffic during a firmware swap is dropped, every swap") {
  sim::Scheduler sched;
  NicSpec spec;
  emu::NicEmulator nic(sched, spec, 3);
  const auto fw = web_firmware();
  const sim::Time down = spec.downtime_ns * sim::kNs;
  nic.load_firmware(fw);
  sched.at(down / 2, [&] { nic.ingest(wire(1, 1, web_request())); });
  sched.at(down + sim::kUs, [&] { nic.ingest(wire(1, 2, web_request())); });
  const sim::Time second = 2 * down;
  sched.at(second, [&] { nic.load_firmware(fw); });
  sched.at(second + down - sim::kUs, [&] { nic.ingest(wire(1, 3, web_request())); });
  sched.at(second + down + sim::kUs, [&] { nic.ingest(wire(1, 4, web_request())); });
  sched.run();
  std::map<std::uint64_t, Outcome> by_id;
  for (const auto& r : nic.trace()) by_id[r.request_id] = r.outcome;
  CHECK(by_id[1] == Outcome::kDroppedDowntime);
  CHECK(by_id[2] == Outcome::kCompleted);
  CHECK(by_id[3] == Outcome::kDroppedDowntime);
  CHECK(by_id[4] == Outcome::kCompleted);
  CHECK(nic.firmware_loads() == 2);
}

TEST_CASE("factory install has no downtime") {
  sim::Scheduler sched;
  emu::NicEmulator nic(sched, NicSpec{}, 3);
  nic.install_firmware(web_firmware());
  nic.ingest(wire(1, 1, web_request()));
  sched.run();
  REQUIRE(nic.trace().size() == 1);
  CHECK(nic.trace()[0].outcome == Outcome::kCompleted);
}

TEST_CASE("out-of-order reassembly costs 30 instructions per packet") {
  const auto fw = web_firmware();
  Bytes payload = web_request();
  payload.resize(400, 0xAB);
  // single frame
  auto one = emu::run(fw, NicSpec{}, {{0, wire(1, 1, payload)}}, 5);
  // four 100-byte frames arriving 3,1,0,2
  std::vector<emu::ScheduledFrame> sched;
  const std::vector<int> order = {3, 1, 0, 2};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto k = static_cast<std::uint16_t>(order[i]);
    const Bytes part(payload.begin() + 100 * k, payload.begin() + 100 * (k + 1));
    sched.push_back({i * sim::kUs, encode_frame(LambdaFrame{0, 1, 2, k, 4, part})});
  }
  auto four = emu::run(fw, NicSpec{}, sched, 5);
  REQUIRE(one.trace.size() == 1);
  REQUIRE(four.trace.size() == 1);
  CHECK(four.trace[0].outcome == Outcome::kCompleted);
  CHECK(four.trace[0].frames == 4);
  CHECK(four.trace[0].instructions - one.trace[0].instructions == 120);
  REQUIRE(one.responses.size() == four.responses.size());
}

TEST_CASE("RDMA write lands in EMEM and triggers the lambda once") {
  bench::WorkloadParams p;
  p.image_width = 128;
  p.image_height = 128;
  const auto fw = build(bench::build_workload("imagexform", p));
  std::mt19937_64 rng(12);
  Bytes img(65536);
  for (auto& b : img) b = static_cast<std::uint8_t>(rng());
  sim::Scheduler sched;
  emu::NicEmulator nic(sched, NicSpec{}, 7);
  nic.install_firmware(fw);
  Bytes response;
  nic.on_response = [&](const LambdaFrame& f, std::uint32_t) {
    response.insert(response.end(), f.payload.begin(), f.payload.end());
  };
  auto frames = split_message(1, 77, img, frame_flags::kRdmaWrite);
  std::shuffle(frames.begin(), frames.end(), rng);
  for (const auto& f : frames) nic.ingest(f);
  sched.run();
  REQUIRE(nic.trace().size() == 1);
  const auto& r = nic.trace()[0];
  CHECK(r.outcome == Outcome::kCompleted);
  CHECK(r.frames == frames.size());
  Bytes stored(img.size());
  nic.memory().read(Tier::kEmem, r.rdma_base, stored);
  CHECK(stored == img);
  CHECK(r.rdma_base >= NicSpec{}.tier_capacity(Tier::kEmem) - NicSpec{}.rdma_pool_bytes);
  CHECK(response == oracle::gray(img));
}

TEST_CASE("web request cycles follow the copy cost model") {
  auto cycles = [](std::uint32_t content) {
    const auto fw = web_firmware(content);
    const auto res = emu::run(fw, NicSpec{}, {{0, wire(1, 1, web_request())}}, 1);
    REQUIRE(res.trace.size() == 1);
    return std::make_pair(res.trace[0].cycles, fw);
  };
  const auto [small, fw] = cycles(1024);
  const auto [large, fw2] = cycles(2048);
  const NicSpec nic;
  auto lat = [&](const fw::Firmware& f, const std::string& name) {
    for (const auto& reg : f.regions)
      if (reg.name == name) return nic.tier_latency(reg.tier);
    FAIL("no region " << name);
    return 0u;
  };
  // the 1 KiB hot object sits in LOCAL; 2 KiB likewise (LOCAL is 4 KiB)
  CHECK(lat(fw, "content") == lat(fw2, "content"));
  const std::uint64_t per_unit = 1 + oracle::ceil_div(lat(fw, "content"), 8) + oracle::ceil_div(lat(fw, "resp"), 8);
  CHECK(large - small == 128 * per_unit);
  // and the whole-request figure for 1 KiB: 128 copy units plus the fixed path
  const auto r = emu::run(fw, nic, {{0, wire(1, 1, web_request())}}, 1).trace[0];
  CHECK(r.t_complete - r.t_dispatch == sim::cycles_to_time(r.cycles, nic.clock_hz));
  CHECK(r.cycles >= 128 * per_unit);
}

TEST_CASE("runs are deterministic in firmware, schedule and seed") {
  const auto fw = web_firmware();
  std::vector<emu::ScheduledFrame> sched;
  std::mt19937_64 rng(3);
  for (std::uint64_t i = 0; i < 2000; ++i) sched.push_back({rng() % (100 * sim::kUs), wire(1, i + 1, web_request())});
  auto a = emu::run(fw, NicSpec{}, sched, 9);
  auto b = emu::run(fw, NicSpec{}, sched, 9);
  auto text = [](const emu::RunResult& r) {
    std::string s;
    for (const auto& t : r.trace) s += emu::trace_line(t) + "\n";
    return s;
  };
  CHECK(text(a) == text(b));
  auto c = emu::run(fw, NicSpec{}, sched, 10);
  CHECK(text(a) != text(c));  // thread choice depends on the seed
}

TEST_CASE("dispatch is uniform over cores") {
  const auto fw = web_firmware(64);
  const NicSpec nic;
  std::vector<emu::ScheduledFrame> sched;
  for (std::uint64_t i = 0; i < 10000; ++i) sched.push_back({i * 10 * sim::kUs, wire(1, i + 1, web_request())});
  const auto res = emu::run(fw, nic, sched, 17);
  std::vector<std::uint64_t> per_core(nic.cores(), 0);
  for (const auto& r : res.trace) {
    REQUIRE(r.thread >= 0);
    ++per_core[static_cast<std::size_t>(r.core(nic.threads_per_core))];
  }
  CHECK(oracle::chi_square_uniform_p(per_core) > 0.001);
}

TEST_CASE("WFQ shares threads 2:1 while both classes are backlogged") {
  const auto fw = build(twin_program());
  sim::Scheduler sched;
  NicSpec spec;
  emu::NicEmulator nic(sched, spec, 4);
  nic.install_firmware(fw);
  nic.set_weight(1, 2.0);
  nic.set_weight(2, 1.0);
  const std::uint64_t per_class = 6000;
  for (std::uint64_t i = 0; i < per_class; ++i) {
    nic.ingest(wire(1, 2 * i + 1, {}));
    nic.ingest(wire(2, 2 * i + 2, {}));
  }
  sched.run();
  std::vector<emu::TraceRecord> queued;
  for (const auto& r : nic.trace())
    if (r.t_dispatch > r.t_arrive) queued.push_back(r);
  // Threads free up in batches, so several requests share a dispatch time.
  // Within a batch the order is by virtual finish time: the n-th queued
  // request of a class with weight w finishes at (n+1)/w.
  std::sort(queued.begin(), queued.end(), [](const auto& x, const auto& y) { return x.request_id < y.request_id; });
  std::map<std::uint32_t, std::uint64_t> nth;
  std::vector<std::pair<std::pair<sim::Time, double>, std::uint32_t>> order;
  for (const auto& r : queued) {
    const double w = r.workload_id == 1 ? 2.0 : 1.0;
    order.push_back({{r.t_dispatch, static_cast<double>(++nth[r.workload_id]) / w}, r.workload_id});
  }
  std::sort(order.begin(), order.end());
  // FIFO within a class: dispatch times never decrease with arrival order
  for (std::uint32_t c : {1u, 2u}) {
    sim::Time last = 0;
    for (const auto& r : queued)
      if (r.workload_id == c) {
        CHECK(r.t_dispatch >= last);
        last = r.t_dispatch;
      }
  }
  // class 1 drains first at twice the rate; compare windows before that
  const std::size_t windows = 6;
  REQUIRE(queued.size() >= windows * 1000);
  for (std::size_t w = 0; w < windows; ++w) {
    std::size_t a = 0, b = 0;
    for (std::size_t i = w * 1000; i < (w + 1) * 1000; ++i) (order[i].second == 1 ? a : b)++;
    const double ratio = static_cast<double>(a) / static_cast<double>(b);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));
  }
}

TEST_CASE("unweighted classes share equally") {
  const auto fw = build(twin_program());
  sim::Scheduler sched;
  emu::NicEmulator nic(sched, NicSpec{}, 4);
  nic.install_firmware(fw);
  for (std::uint64_t i = 0; i < 3000; ++i) {
    nic.ingest(wire(1, 2 * i + 1, {}));
    nic.ingest(wire(2, 2 * i + 2, {}));
  }
  sched.run();
  std::size_t a = 0, b = 0;
  for (const auto& r : nic.trace())
    if (r.t_dispatch > r.t_arrive && r.t_dispatch < nic.trace().back().t_dispatch / 2) (r.workload_id == 1 ? a : b)++;
  CHECK(a > 0);
  CHECK(static_cast<double>(a) / b == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("web latency is the same alone and alongside KV at low load") {
  const auto fw = build(bench::build_multi());
  const auto web_id = *fw.workload_id("web");
  const auto kv_id = *fw.workload_id("kv");
  auto rpc = [](std::uint32_t, std::span<const std::uint8_t> req) {
    return emu::RpcReply{Bytes(req.begin(), req.end()), 20 * sim::kUs};
  };
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> gap(1.0 / 50.0);  // mean 50 us
  std::vector<emu::ScheduledFrame> alone, mixed;
  double t = 0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    t += gap(rng);
    const auto at = static_cast<sim::Time>(t * sim::kUs);
    alone.push_back({at, wire(web_id, 2 * i + 1, web_request())});
    mixed.push_back({at, wire(web_id, 2 * i + 1, web_request())});
    const Bytes key = {'k'};
    mixed.push_back({at + sim::kUs, wire(kv_id, 2 * i + 2, bench::kv_encode(bench::KvOp::kGet, key, {}))});
  }
  auto web_latencies = [&](const emu::RunResult& r) {
    std::vector<double> out;
    for (const auto& x : r.trace)
      if (x.workload_id == web_id) out.push_back(sim::to_us(x.latency()));
    return out;
  };
  const auto a = web_latencies(emu::run(fw, NicSpec{}, alone, 2, rpc));
  const auto b = web_latencies(emu::run(fw, NicSpec{}, mixed, 2, rpc));
  REQUIRE(a.size() == 2000);
  REQUIRE(b.size() == 2000);
  CHECK(oracle::ks_p_value(a, b) > 0.05);
  CHECK(oracle::nearest_rank(b, 99) == doctest::Approx(oracle::nearest_rank(a, 99)).epsilon(0.05));
}

TEST_CASE("every ingested frame is accounted for exactly once") {
  const auto fw = web_firmware();
  sim::Scheduler sched;
  NicSpec spec;
  emu::NicEmulator nic(sched, spec, 8);
  nic.install_firmware(fw);
  std::mt19937_64 rng(6);
  std::uint64_t rid = 1;
  for (int i = 0; i < 3000; ++i) {
    const sim::Time at = rng() % (50 * sim::kMs);
    const int kind = static_cast<int>(rng() % 6);
    Bytes payload = web_request();
    payload.resize(rng() % 4000 + 4, 7);
    const auto id = rid++;
    sched.at(at, [&nic, kind, payload, id, &rng] {
      if (kind == 0) {
        Bytes junk = {0x00, 0x01, 0x02};
        nic.ingest(junk);
      } else if (kind == 1) {
        // incomplete message: the reassembly timer expires
        auto frames = split_message(1, id, payload, 0, 1000);
        if (frames.size() > 1) frames.pop_back();
        else frames[0].total = 2;
        for (const auto& f : frames) nic.ingest(f);
      } else if (kind == 2) {
        auto frames = split_message(1, id, payload, 0, 700);
        frames.push_back(frames.front());  // duplicate
        std::shuffle(frames.begin(), frames.end(), rng);
        for (const auto& f : frames) nic.ingest(f);
      } else if (kind == 3) {
        nic.ingest(LambdaFrame{frame_flags::kResponse, 1, id, 0, 1, {}});
      } else {
        for (const auto& f : split_message(kind == 4 ? 1 : 99, id, payload, 0)) nic.ingest(f);
      }
    });
  }
  sched.at(20 * sim::kMs, [&] { nic.load_firmware(fw); });
  sched.run();
  std::uint64_t frames = 0;
  for (const auto& r : nic.trace()) frames += r.frames;
  CHECK(frames == nic.frames_ingested());
  const auto& t = nic.trace();
  CHECK(count(t, Outcome::kMalformed) > 0);
  CHECK(count(t, Outcome::kDroppedTimeout) > 0);
  CHECK(count(t, Outcome::kDroppedDowntime) > 0);
  CHECK(count(t, Outcome::kToHost) > 0);
  CHECK(count(t, Outcome::kCompleted) > 0);
}

TEST_CASE("no lambda touches another lambda's memory") {
  const NicSpec spec;
  std::uint64_t accesses = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto prog = fuzz::random_program(seed);
    const auto fw = build(prog, spec);
    sim::Scheduler sched;
    emu::NicEmulator nic(sched, spec, seed);
    nic.install_firmware(fw);
    nic.set_rpc([](std::uint32_t ep, std::span<const std::uint8_t> req) {
      return emu::RpcReply{fuzz::fuzz_rpc_reply(ep, req), sim::kUs};
    });
    std::uint64_t rid = 1;
    for (const auto& req : fuzz::random_requests(prog, seed, 50))
      for (const auto& f : split_message(req.workload_id, rid++, req.payload, 0)) nic.ingest(f, req.source);
    sched.run();
    CHECK(nic.tracker().cross_lambda() == 0);
    CHECK(nic.tracker().out_of_region() == 0);
    accesses += nic.tracker().accesses();
  }
  CHECK(accesses > 0);
}

TEST_CASE("empty schedule gives an empty trace") {
  const auto res = emu::run(web_firmware(), NicSpec{}, {}, 1);
  CHECK(res.trace.empty());
  CHECK(res.responses.empty());
}
