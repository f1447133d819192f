#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lnic/testbed.hpp"

namespace lnic::bench {

enum class Mode : std::uint8_t { kClosed, kPar56, kRrMulti };
Mode parse_mode(std::string_view s);
std::string_view mode_name(Mode m);

struct BenchSpec {
  std::string workload = "webserver";  // ignored by rrmulti, which drives all three
  cp::Backend backend = cp::Backend::kNic;
  Mode mode = Mode::kClosed;
  std::uint64_t n = 1000;
  std::uint64_t seed = 1;
  WorkloadParams params;
  std::uint32_t parallel = 56;
  TestbedConfig testbed;
};

/// One request as seen by the load generator.
struct Sample {
  std::uint64_t request_id = 0;
  std::string lambda;
  sim::Time sent = 0;
  sim::Time completed = 0;
  std::uint32_t attempts = 0;
  bool ok = false;
  sim::Time latency() const { return completed - sent; }
};

struct Metrics {
  std::string label;
  std::size_t count = 0;      // completed requests
  std::size_t failures = 0;
  std::uint64_t retries = 0;
  double mean = 0, p50 = 0, p90 = 0, p99 = 0;  // seconds
  double throughput = 0;                        // completed per virtual second
  std::vector<double> latencies;                // sorted, seconds
};

/// Nearest-rank percentile of an ascending sample; 0 for an empty one.
double percentile(const std::vector<double>& sorted, double p);
Metrics compute_metrics(const std::string& label, const std::vector<Sample>& samples);

/// `latency_s,fraction` rows.
std::string ecdf_text(const Metrics& m);
/// Comparison table plus ratios against the first row.
std::string report_table(const std::vector<Metrics>& rows);

/// Deterministic request payloads for each lambda kind; one independent
/// stream per lambda so matched runs see identical requests.
class RequestSource {
 public:
  RequestSource(const WorkloadParams& params, std::uint64_t seed);
  /// Payload for the next request to `kind`; sets `rdma` for image payloads.
  Bytes next(const std::string& kind, bool& rdma);

 private:
  WorkloadParams params_;
  std::uint64_t seed_;
  std::map<std::string, std::mt19937_64> streams_;
  std::map<std::string, std::uint64_t> counts_;
};

struct BenchResult {
  std::vector<Sample> samples;
  Metrics metrics;
  std::string trace;  // backend trace records
  std::uint64_t dropped_frames = 0;
};

/// Builds a testbed, deploys the workload and drives it to completion.
BenchResult run_benchmark(const BenchSpec& spec);

/// Drives `kinds` in strict rotation (closed loop) on an already deployed
/// testbed; `names` maps each kind to its deployed lambda name.
std::vector<Sample> drive(Testbed& tb, cp::Backend backend, const std::vector<std::string>& kinds,
                          const std::map<std::string, std::string>& names, std::uint64_t n, std::uint32_t parallel,
                          RequestSource& source);

/// Writes trace.csv, samples.csv, ecdf_<backend>.csv and summary.tsv into `dir`.
void write_outputs(const std::string& dir, const BenchSpec& spec, const BenchResult& result);

struct ContentionResult {
  Metrics multi;      // three lambdas in rotation
  Metrics isolation;  // each lambda alone, same per-lambda requests, pooled
};
/// Round-robin over web/kv/image vs each lambda alone at matched load.
ContentionResult contention_experiment(cp::Backend backend, std::uint64_t n, std::uint64_t seed,
                                       const TestbedConfig& testbed = {}, const WorkloadParams& params = {});

std::string lambda_kind_name(const std::string& kind);

/// Runs `spec` once per seed. Each run owns its testbed, so the parallel form
/// (OpenMP over seeds) returns exactly what the serial loop returns.
std::vector<Metrics> seed_sweep(const BenchSpec& spec, const std::vector<std::uint64_t>& seeds, bool parallel);

}  // namespace lnic::bench
