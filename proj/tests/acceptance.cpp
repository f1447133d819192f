// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "lnic/bench.hpp"
#include "lnic/compiler.hpp"
#include "lnic/fuzz.hpp"
#include "lnic/nic.hpp"
#include "oracles.hpp"

using namespace lnic;
using cp::Backend;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

Bytes wire(std::uint32_t wid, std::uint64_t rid, const Bytes& payload) {
  return encode_frame(LambdaFrame{0, wid, rid, 0, 1, payload});
}

cp::RequestResult call(bench::Testbed& tb, const std::string& name, const Bytes& payload, Backend b, bool rdma = false) {
  cp::RequestResult out;
  tb.gateway.route(name, payload, b, [&](const cp::RequestResult& r) { out = r; }, rdma);
  tb.sched.run();
  return out;
}

// 1 ------------------------------------------------------------------------
void differential(Verdict& v) {
  const auto batch = fuzz::run_batch_parallel(1, 1000, 8);
  v.detail << "programs=" << batch.programs() << " requests=" << batch.requests() << " traps=" << batch.traps()
           << " forwards=" << batch.forwards() << " disagreements=" << batch.disagreements();
  v.require(batch.programs() >= 1000, "at least 1000 programs");
  v.require(batch.disagreements() == 0, "interpreter == opt-0 == opt-1");
  for (const auto& c : batch.cases)
    if (!c.agree) {
      v.detail << " first mismatch seed " << c.seed << ": " << c.mismatch;
      break;
    }
}

// 2 ------------------------------------------------------------------------
void optimizer(Verdict& v) {
  const auto suite = bench::build_suite();
  const auto r0 = compiler::compile(suite, NicSpec{}, {0, true});
  const auto r1 = compiler::compile(suite, NicSpec{}, {1, true});
  const auto& passes = r1.report.passes;
  bool monotone = true;
  for (std::size_t i = 1; i < passes.size(); ++i) monotone = monotone && passes[i].instructions <= passes[i - 1].instructions;
  const double t0 = static_cast<double>(r0.firmware.total_instructions());
  const double t1 = static_cast<double>(r1.firmware.total_instructions());
  const double reduction = 100.0 * (1.0 - t1 / t0);
  v.detail << "opt0=" << t0 << " opt1=" << t1 << " reduction=" << reduction << "%";
  v.require(t1 < t0, "opt-1 < opt-0");
  v.require(monotone, "passes non-increasing");
  v.require(reduction >= 5.0, "reduction >= 5%");
  std::cout << "  " << r1.report.table();
}

// 3 ------------------------------------------------------------------------
void contention(Verdict& v) {
  const std::uint64_t n = 10000;
  const auto nic = bench::contention_experiment(Backend::kNic, n, 1);
  const double nic_dev = std::fabs(nic.multi.p99 / nic.isolation.p99 - 1.0);
  const auto host = bench::contention_experiment(Backend::kHost, n, 1);
  const double penalty = sim::to_seconds(cp::HostSpec{}.switch_penalty);
  // In strict rotation every request but the very first follows a different
  // lambda on its thread, so the expected excess is penalty * (n - 1) / n.
  const double expected = penalty * static_cast<double>(n - 1) / static_cast<double>(n);
  const double excess = host.multi.mean - host.isolation.mean;
  v.detail << "nic p99 multi/isolation=" << nic.multi.p99 * 1e6 << "/" << nic.isolation.p99 * 1e6
           << "us host excess=" << excess * 1e6 << "us expected=" << expected * 1e6 << "us";
  v.require(nic.multi.count == n && nic.isolation.count == n, "all NIC requests complete");
  v.require(nic_dev <= 0.05, "NIC p99 within 5%");
  v.require(std::fabs(excess / expected - 1.0) <= 0.01, "host excess within 1% of the penalty");
}

// 4 ------------------------------------------------------------------------
void reordering(Verdict& v) {
  const auto fw = compiler::compile(bench::build_workload("webserver"), NicSpec{}).firmware;
  Bytes payload = {1, 1, 0, 0};
  payload.resize(400, 0x5A);
  const auto one = emu::run(fw, NicSpec{}, {{0, wire(1, 1, payload)}}, 1);
  std::vector<emu::ScheduledFrame> frames;
  const int order[] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i) {
    const auto k = static_cast<std::uint16_t>(order[i]);
    frames.push_back({static_cast<sim::Time>(i) * sim::kUs,
                      encode_frame(LambdaFrame{0, 1, 2, k, 4, Bytes(payload.begin() + 100 * k, payload.begin() + 100 * (k + 1))})});
  }
  const auto four = emu::run(fw, NicSpec{}, frames, 1);
  const auto added = static_cast<std::int64_t>(four.trace.at(0).instructions) - static_cast<std::int64_t>(one.trace.at(0).instructions);
  v.detail << "added instructions=" << added;
  v.require(added == 120, "exactly 120");
}

// 5 ------------------------------------------------------------------------
void isolation(Verdict& v) {
  // `probe` takes a store/load offset from the request; `vault` and the web
  // server are its neighbours in the same firmware.
  const std::string src = bench::header_schemas() + bench::webserver_lambda("web", 256) +
                          ".lambda probe\n.global scratch 64 cold\n.func main\n.entry\n  LDMD r9, LEN\n  JLT r9, 4, short\n"
                          "  LDM r1, [payload+0]\n  CONST r2, 1515870810\n  STM [scratch+r1], r2\n"
                          "  LDM r3, [scratch+r1]\n  STM [resp+0], r3\n  HALT 16\nshort:\n  HALT 17\n.end\n"
                          ".lambda vault\n.global secret 64 cold pattern=99\n.func main\n.entry\n"
                          "  MEMCPY [resp+0], [secret+0], 64\n  HALT 16\n.end\n"
                          ".match\n  1 -> web\n  2 -> probe\n  3 -> vault\n.end\n";
  const auto prog = ir::parse_program(src);
  std::mt19937_64 rng(2024);
  std::vector<std::int32_t> offsets;
  for (int i = 0; i < 10000; ++i) {
    switch (rng() % 4) {
      case 0: offsets.push_back(static_cast<std::int32_t>(rng() % 61)); break;          // in bounds
      case 1: offsets.push_back(static_cast<std::int32_t>(61 + rng() % 4096)); break;   // past the end
      case 2: offsets.push_back(-static_cast<std::int32_t>(1 + rng() % 4096)); break;   // before the start
      default: offsets.push_back(static_cast<std::int32_t>(rng())); break;              // anywhere
    }
  }
  auto run = [&](bool guards, std::size_t& traps, std::size_t& expected_traps, Bytes& vault_after) {
    const auto fw = compiler::compile(prog, NicSpec{}, {1, guards}).firmware;
    sim::Scheduler sched;
    emu::NicEmulator nic(sched, NicSpec{}, 5);
    nic.install_firmware(fw);
    std::uint64_t rid = 1;
    for (const auto off : offsets) {
      Bytes p;
      oracle::put(p, static_cast<std::uint32_t>(off), 4);
      nic.ingest(wire(2, rid++, p));
      expected_traps += off < 0 || off > 60;
    }
    sched.run();
    nic.on_response = [&](const LambdaFrame& f, std::uint32_t) { vault_after = f.payload; };
    nic.ingest(wire(3, rid++, {}));
    sched.run();
    traps = 0;
    for (const auto& r : nic.trace()) traps += r.outcome == emu::Outcome::kTrapped;
    return nic.tracker().cross_lambda();
  };
  std::size_t traps = 0, expected = 0;
  Bytes vault;
  const auto cross = run(true, traps, expected, vault);
  Bytes vault_ref;
  std::uint32_t x = 99;
  for (int i = 0; i < 64; ++i) {
    x = x * 1664525u + 1013904223u;
    vault_ref.push_back(static_cast<std::uint8_t>('a' + (x >> 24) % 26));
  }
  std::size_t traps_off = 0, expected_off = 0;
  Bytes vault_off;
  const auto cross_off = run(false, traps_off, expected_off, vault_off);
  v.detail << "requests=" << offsets.size() << " violations=" << expected << " traps=" << traps
           << " cross-region=" << cross << " (unguarded control: cross-region=" << cross_off << ")";
  v.require(cross == 0, "zero cross-region accesses");
  v.require(traps == expected, "every violation traps, nothing else does");
  v.require(vault == vault_ref, "neighbour memory intact");
  v.require(cross_off > 0, "tracker detects unguarded violations");
}

// 6 ------------------------------------------------------------------------
void wfq(Verdict& v) {
  // Two lambdas doing the same loop. The second sits one compare deeper in
  // the dispatch chain, so the first is padded until both cost the same.
  auto firmware = [](int pad) {
    const std::string body = ".func main\n.entry\n  CONST r1, 0\nl:\n  ADD r1, r1, 1\n  JLT r1, 50, l\n";
    std::string a = ".lambda a\n" + body;
    for (int i = 0; i < pad; ++i) a += "  ADD r2, r2, 1\n";
    return compiler::compile(ir::parse_program(a + "  HALT 16\n.end\n.lambda b\n" + body +
                                               "  HALT 16\n.end\n.match\n  1 -> a\n  2 -> b\n.end\n"),
                             NicSpec{})
        .firmware;
  };
  auto cost = [](const fw::Firmware& f, std::uint32_t wid) {
    return emu::run(f, NicSpec{}, {{0, wire(wid, 1, {})}}, 1).trace.at(0).cycles;
  };
  const auto plain = firmware(0);
  const auto gap = static_cast<int>(cost(plain, 2)) - static_cast<int>(cost(plain, 1));
  const auto fw = firmware(std::max(gap, 0));
  v.require(cost(fw, 1) == cost(fw, 2), "equal-cost lambdas");
  sim::Scheduler sched;
  emu::NicEmulator nic(sched, NicSpec{}, 11);
  nic.install_firmware(fw);
  nic.set_weight(1, 2.0);
  nic.set_weight(2, 1.0);
  std::vector<std::uint32_t> completions;
  nic.on_trace = [&](const emu::TraceRecord& r) {
    if (r.t_dispatch > r.t_arrive) completions.push_back(r.workload_id);
  };
  const std::uint64_t per_class = 12000;
  for (std::uint64_t i = 0; i < per_class; ++i) {
    nic.ingest(wire(1, 2 * i + 1, {}));
    nic.ingest(wire(2, 2 * i + 2, {}));
  }
  sched.run();
  // windows while both classes are still backlogged: class 1 drains after
  // about 1.5x its own backlog in total completions
  const std::size_t backlogged = static_cast<std::size_t>((per_class - NicSpec{}.threads()) * 1.5);
  double worst = 0;
  std::size_t windows = 0;
  for (std::size_t start = 0; start + 1000 <= backlogged - 1000; start += 1000, ++windows) {
    std::size_t a = 0, b = 0;
    for (std::size_t i = start; i < start + 1000; ++i) (completions[i] == 1 ? a : b)++;
    worst = std::max(worst, std::fabs(static_cast<double>(a) / static_cast<double>(b) / 2.0 - 1.0));
  }
  v.detail << "windows=" << windows << " worst deviation from 2:1=" << worst * 100 << "%";
  v.require(windows >= 10, "enough windows");
  v.require(worst <= 0.05, "every window within 5%");
}

// 7 ------------------------------------------------------------------------
void reliability(Verdict& v) {
  bench::TestbedConfig cfg;
  cfg.gateway.drop_rate = 0.2;
  cfg.gateway.max_retries = 10;
  cfg.gateway.seed = 7;
  bench::Testbed tb(cfg);
  tb.deploy(bench::build_workload("kvclient"));
  std::map<std::uint64_t, Bytes> expected_value;
  std::map<std::uint64_t, std::vector<cp::RequestResult>> results;
  for (int i = 0; i < 1000; ++i) {
    tb.sched.at(static_cast<sim::Time>(i) * 30 * sim::kUs, [&, i] {
      const Bytes key = {'r', static_cast<std::uint8_t>(i >> 8), static_cast<std::uint8_t>(i)};
      const Bytes val = {static_cast<std::uint8_t>(i * 13), static_cast<std::uint8_t>(i), 0x42};
      const auto id = tb.gateway.route("kv", bench::kv_encode(bench::KvOp::kSet, key, val), Backend::kNic,
                                       [&](const cp::RequestResult& r) { results[r.request_id].push_back(r); });
      expected_value[id] = bench::kv_encode(bench::KvOp::kSet, key, val);
    });
  }
  tb.sched.run();
  std::size_t ok = 0, retried = 0, exact = 0;
  for (const auto& [id, rs] : results) {
    if (rs.size() != 1) continue;
    ok += rs[0].ok;
    retried += rs[0].attempts > 1;
    exact += rs[0].response == expected_value[id];
  }
  v.detail << "completed=" << ok << " retried=" << retried << " retransmissions=" << tb.gateway.retransmissions()
           << " duplicate frames=" << tb.gateway.duplicate_frames() << " exact payloads=" << exact;
  v.require(results.size() == 1000 && ok == 1000, "all 1000 complete exactly once");
  v.require(exact == 1000, "each response belongs to its own request");
  v.require(retried > 0, "retransmission exercised");
}

// 8 ------------------------------------------------------------------------
void determinism(Verdict& v) {
  const auto root = std::filesystem::temp_directory_path() / ("lnic_accept_" + std::to_string(::getpid()));
  std::size_t runs = 0, identical = 0;
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  };
  for (const std::string workload : {"webserver", "kvclient", "imagexform"})
    for (const auto backend : {Backend::kNic, Backend::kHost})
      for (const auto mode : {bench::Mode::kClosed, bench::Mode::kPar56, bench::Mode::kRrMulti}) {
        bench::BenchSpec spec;
        spec.workload = workload;
        spec.backend = backend;
        spec.mode = mode;
        spec.n = 300;
        spec.seed = 1234;
        bench::write_outputs((root / "a").string(), spec, bench::run_benchmark(spec));
        bench::write_outputs((root / "b").string(), spec, bench::run_benchmark(spec));
        ++runs;
        bool same = true;
        for (const auto& e : std::filesystem::directory_iterator(root / "a"))
          same = same && slurp(e.path()) == slurp(root / "b" / e.path().filename());
        identical += same;
        std::filesystem::remove_all(root);
      }
  v.detail << "configurations=" << runs << " byte-identical=" << identical;
  v.require(identical == runs, "identical output files");
}

// 9 ------------------------------------------------------------------------
void oracles(Verdict& v) {
  bench::Testbed tb(bench::TestbedConfig{});
  bench::WorkloadParams p;
  p.image_width = 64;
  p.image_height = 64;
  auto prog = bench::build_multi(p);
  tb.deploy(prog);
  std::mt19937_64 rng(99);
  std::size_t images_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const std::uint32_t w = 1 + static_cast<std::uint32_t>(rng() % 64), h = 1 + static_cast<std::uint32_t>(rng() % 64);
    Bytes img(w * h * 4);
    for (auto& b : img) b = static_cast<std::uint8_t>(rng());
    const auto r = call(tb, "image", img, i % 2 ? Backend::kHost : Backend::kNic, true);
    images_ok += r.ok && r.response == oracle::gray(img);
  }
  std::map<Bytes, Bytes> model;
  std::size_t kv_ok = 0, kv_total = 0;
  for (int i = 0; i < 1000; ++i) {
    const Bytes key = {'k', static_cast<std::uint8_t>(rng() % 10)};
    const auto backend = rng() % 2 ? Backend::kNic : Backend::kHost;
    ++kv_total;
    if (rng() % 3 == 0) {
      Bytes val(rng() % 40);
      for (auto& b : val) b = static_cast<std::uint8_t>(rng());
      model[key] = val;
      kv_ok += bench::kv_decode(call(tb, "kv", bench::kv_encode(bench::KvOp::kSet, key, val), backend).response).value == val;
    } else {
      const auto it = model.find(key);
      kv_ok += bench::kv_decode(call(tb, "kv", bench::kv_encode(bench::KvOp::kGet, key, {}), backend).response).value ==
               (it == model.end() ? Bytes{} : it->second);
    }
  }
  // golden frame: response+rdma flags, id 0x01020304, request 0x1122334455667788, seq 1 of 3, "hi"
  const Bytes golden = {0xD4, 0x1C, 0x01, 0x03, 0x01, 0x02, 0x03, 0x04, 0x11, 0x22, 0x33, 0x44, 0x55,
                        0x66, 0x77, 0x88, 0x00, 0x01, 0x00, 0x03, 0x00, 0x02, 'h',  'i'};
  const bool golden_ok = encode_frame(LambdaFrame{0x03, 0x01020304, 0x1122334455667788ull, 1, 3, {'h', 'i'}}) == golden &&
                         decode_frame(golden) == LambdaFrame{0x03, 0x01020304, 0x1122334455667788ull, 1, 3, {'h', 'i'}};
  v.detail << "images " << images_ok << "/100, kv " << kv_ok << "/" << kv_total << ", golden bytes "
           << (golden_ok ? "match" : "differ");
  v.require(images_ok == 100, "grayscale pixel-exact");
  v.require(kv_ok == kv_total, "GET-after-SET");
  v.require(golden_ok, "golden bytes");
}

// 10 -----------------------------------------------------------------------
void lifecycle(Verdict& v) {
  const auto journal = std::filesystem::temp_directory_path() / ("lnic_accept_journal_" + std::to_string(::getpid()));
  std::filesystem::remove(journal);
  bench::TestbedConfig cfg;
  cfg.nic.downtime_ns = 1'000'000;  // 1 ms swap, under the 2 ms retransmit timeout
  cfg.registry_path = journal.string();
  std::set<std::uint64_t> retried, predicted;
  sim::Time t0 = 5 * sim::kMs, ready = 0;
  std::size_t completed = 0;
  {
    bench::Testbed tb(cfg);
    tb.deploy(bench::build_workload("webserver"));
    const sim::Time wire_latency = cfg.gateway.wire_latency;
    for (int i = 0; i < 500; ++i) {
      const sim::Time at = 7 * sim::kUs + static_cast<sim::Time>(i) * 20 * sim::kUs;
      tb.sched.at(at, [&, at] {
        const auto id = tb.gateway.route("web", {1, 1, 0, 0}, Backend::kNic, [&](const cp::RequestResult& r) {
          completed += r.ok;
          if (r.attempts > 1) retried.insert(r.request_id);
        });
        // a frame is lost iff it reaches the NIC while the swap is in progress
        if (at + wire_latency >= t0 && at + wire_latency < t0 + cfg.nic.downtime_ns * sim::kNs) predicted.insert(id);
      });
    }
    tb.sched.at(t0, [&] { ready = tb.deploy(bench::build_workload("kvclient"), false).ready_at; });
    tb.sched.run();
    // simulated crash: the process dies mid-append
    std::ofstream(journal, std::ios::binary | std::ios::app) << std::string("\x00\x00\x01\x00\x02partial", 12);
    const cp::Registry replayed(journal.string());
    v.detail << "downtime=[" << sim::to_us(t0) << "," << sim::to_us(ready) << ")us retried=" << retried.size()
             << " predicted=" << predicted.size() << " completed=" << completed
             << " journal replay " << (replayed == tb.registry ? "matches" : "differs")
             << " (discarded " << replayed.discarded_bytes() << " torn bytes)";
    v.require(replayed == tb.registry, "journal replay reproduces the registry");
    v.require(replayed.discarded_bytes() == 12, "torn record dropped");
  }
  v.require(!predicted.empty(), "traffic overlapped the swap");
  v.require(retried == predicted, "retries exactly during the downtime window");
  v.require(completed == 500, "every request completed");
  std::filesystem::remove(journal);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"differential semantics", differential}, {"optimizer effectiveness", optimizer},
      {"contention invariance", contention},    {"reordering cost", reordering},
      {"isolation soundness", isolation},       {"WFQ fairness", wfq},
      {"transport reliability", reliability},   {"determinism", determinism},
      {"workload oracles", oracles},            {"deployment lifecycle", lifecycle},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << v.detail.str() << " ("
              << std::fixed << std::setprecision(1) << secs << "s)" << std::endl;
    std::cout.unsetf(std::ios::fixed);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
