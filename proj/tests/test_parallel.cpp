#include "doctest.h"
#include "lnic/bench.hpp"
#include "lnic/fuzz.hpp"

using namespace lnic;

TEST_CASE("parallel fuzz batch equals the serial reference") {
  const auto serial = fuzz::run_batch_serial(500, 96);
  const auto parallel = fuzz::run_batch_parallel(500, 96);
  REQUIRE(serial.programs() == 96);
  REQUIRE(parallel.programs() == 96);
  for (std::size_t i = 0; i < serial.cases.size(); ++i) {
    const auto& a = serial.cases[i];
    const auto& b = parallel.cases[i];
    CHECK(a.seed == b.seed);
    CHECK(a.requests == b.requests);
    CHECK(a.traps == b.traps);
    CHECK(a.forwards == b.forwards);
    CHECK(a.agree == b.agree);
    CHECK(a.mismatch == b.mismatch);
  }
  CHECK(serial.disagreements() == 0);
  CHECK(serial.traps() > 0);
  CHECK(serial.forwards() > 0);
}

TEST_CASE("parallel seed sweep equals the serial loop") {
  bench::BenchSpec spec;
  spec.workload = "kvclient";
  spec.mode = bench::Mode::kPar56;
  spec.backend = cp::Backend::kHost;  // host jitter makes seeds distinguishable
  spec.n = 300;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6};
  const auto serial = bench::seed_sweep(spec, seeds, false);
  const auto parallel = bench::seed_sweep(spec, seeds, true);
  REQUIRE(serial.size() == seeds.size());
  REQUIRE(parallel.size() == seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(serial[i].latencies == parallel[i].latencies);
    CHECK(serial[i].throughput == parallel[i].throughput);
  }
  CHECK(serial[0].latencies != serial[1].latencies);
}

TEST_CASE("generated programs are reproducible from their seed") {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    CHECK(fuzz::random_program_text(s) == fuzz::random_program_text(s));
    CHECK(ir::to_text(fuzz::random_program(s)) == ir::to_text(fuzz::random_program(s)));
  }
  CHECK(fuzz::random_program_text(1) != fuzz::random_program_text(2));
}
