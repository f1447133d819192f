#include "lnic/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace lnic::bench {

Mode parse_mode(std::string_view s) {
  if (s == "closed") return Mode::kClosed;
  if (s == "par56") return Mode::kPar56;
  if (s == "rrmulti") return Mode::kRrMulti;
  throw std::invalid_argument("mode must be closed, par56 or rrmulti, got '" + std::string(s) + "'");
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kClosed: return "closed";
    case Mode::kPar56: return "par56";
    case Mode::kRrMulti: return "rrmulti";
  }
  return "?";
}

std::string lambda_kind_name(const std::string& kind) {
  if (kind == "webserver") return "web";
  if (kind == "kvclient") return "kv";
  if (kind == "imagexform") return "image";
  throw WorkloadError("unknown workload '" + kind + "'");
}

double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0;
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

Metrics compute_metrics(const std::string& label, const std::vector<Sample>& samples) {
  Metrics m;
  m.label = label;
  sim::Time first = UINT64_MAX, last = 0;
  for (const auto& s : samples) {
    m.retries += s.attempts > 0 ? s.attempts - 1 : 0;
    if (!s.ok) {
      ++m.failures;
      continue;
    }
    m.latencies.push_back(sim::to_seconds(s.latency()));
    first = std::min(first, s.sent);
    last = std::max(last, s.completed);
  }
  std::sort(m.latencies.begin(), m.latencies.end());
  m.count = m.latencies.size();
  if (m.count == 0) return m;
  m.mean = std::accumulate(m.latencies.begin(), m.latencies.end(), 0.0) / static_cast<double>(m.count);
  m.p50 = percentile(m.latencies, 50);
  m.p90 = percentile(m.latencies, 90);
  m.p99 = percentile(m.latencies, 99);
  const double span = sim::to_seconds(last - first);
  m.throughput = span > 0 ? static_cast<double>(m.count) / span : 0;
  return m;
}

std::string ecdf_text(const Metrics& m) {
  std::ostringstream os;
  os << "latency_s,fraction\n";
  if (m.latencies.empty()) {
    os << "# empty sample\n";
    return os.str();
  }
  os << std::setprecision(9);
  const auto n = static_cast<double>(m.latencies.size());
  for (std::size_t i = 0; i < m.latencies.size(); ++i)
    os << m.latencies[i] << ',' << static_cast<double>(i + 1) / n << '\n';
  return os.str();
}

std::string report_table(const std::vector<Metrics>& rows) {
  std::ostringstream os;
  os << "label\tcount\tmean_us\tp50_us\tp90_us\tp99_us\tthroughput_rps\tretries\tfailures\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& m : rows) {
    if (m.count == 0) {
      os << m.label << "\tEMPTY\t-\t-\t-\t-\t-\t" << m.retries << '\t' << m.failures << '\n';
      continue;
    }
    os << m.label << '\t' << m.count << '\t' << m.mean * 1e6 << '\t' << m.p50 * 1e6 << '\t' << m.p90 * 1e6 << '\t'
       << m.p99 * 1e6 << '\t' << m.throughput << '\t' << m.retries << '\t' << m.failures << '\n';
  }
  if (rows.size() > 1) {
    const Metrics& base = rows.front();
    auto ratio = [](double a, double b) {
      if (b == 0) return std::string("n/a");
      std::ostringstream r;
      r << std::fixed << std::setprecision(4) << a / b;
      return r.str();
    };
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const Metrics& m = rows[i];
      os << "ratio " << m.label << '/' << base.label << "\tmean=" << ratio(m.mean, base.mean)
         << "\tp50=" << ratio(m.p50, base.p50) << "\tp99=" << ratio(m.p99, base.p99)
         << "\tthroughput=" << ratio(m.throughput, base.throughput) << '\n';
    }
  }
  return os.str();
}

RequestSource::RequestSource(const WorkloadParams& params, std::uint64_t seed) : params_(params), seed_(seed) {}

Bytes RequestSource::next(const std::string& kind, bool& rdma) {
  auto it = streams_.find(kind);
  if (it == streams_.end()) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : kind) h = (h ^ c) * 1099511628211ull;
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    it = streams_.emplace(kind, std::mt19937_64(seq)).first;
  }
  auto& rng = it->second;
  ++counts_[kind];
  rdma = false;
  if (kind == "webserver") {
    Bytes b(4);
    b[0] = 1;  // GET
    b[1] = 1;
    store_be(b, 2, 2, rng() % 16);
    return b;
  }
  if (kind == "kvclient") {
    std::string key = "key-" + std::to_string(rng() % 32);
    key.resize(params_.key_size, '.');
    const Bytes k(key.begin(), key.end());
    std::uniform_real_distribution<double> u(0, 1);
    if (u(rng) < params_.get_ratio) return kv_encode(KvOp::kGet, k, {});
    Bytes v(params_.value_size);
    for (auto& c : v) c = static_cast<std::uint8_t>('A' + rng() % 26);
    return kv_encode(KvOp::kSet, k, v);
  }
  if (kind == "imagexform") {
    rdma = true;
    Bytes img(static_cast<std::size_t>(params_.image_width) * params_.image_height * 4);
    for (std::size_t i = 0; i < img.size(); i += 8) {
      const std::uint64_t r = rng();
      for (std::size_t j = 0; j < 8 && i + j < img.size(); ++j) img[i + j] = static_cast<std::uint8_t>(r >> (8 * j));
    }
    return img;
  }
  throw WorkloadError("unknown workload '" + kind + "'");
}

std::vector<Sample> drive(Testbed& tb, cp::Backend backend, const std::vector<std::string>& kinds,
                          const std::map<std::string, std::string>& names, std::uint64_t n, std::uint32_t parallel,
                          RequestSource& source) {
  if (kinds.empty()) throw std::invalid_argument("drive needs at least one workload");
  for (const auto& k : kinds)
    if (!tb.gateway.mapping().contains(names.at(k))) throw std::runtime_error("workload " + k + " is not deployed");
  std::vector<Sample> samples(n);
  std::uint64_t issued = 0;
  std::function<void()> issue = [&] {
    if (issued >= n) return;
    const std::uint64_t i = issued++;
    const std::string& kind = kinds[i % kinds.size()];
    bool rdma = false;
    Bytes payload = source.next(kind, rdma);
    samples[i].lambda = names.at(kind);
    samples[i].sent = tb.sched.now();
    samples[i].request_id = tb.gateway.route(
        names.at(kind), std::move(payload), backend,
        [&, i](const cp::RequestResult& r) {
          samples[i].completed = r.completed;
          samples[i].attempts = r.attempts;
          samples[i].ok = r.ok;
          issue();
        },
        rdma);
  };
  for (std::uint32_t k = 0; k < std::max<std::uint32_t>(parallel, 1); ++k) issue();
  tb.sched.run();
  return samples;
}

namespace {

bool uses_image(const BenchSpec& spec) { return spec.mode == Mode::kRrMulti || spec.workload == "imagexform"; }

TestbedConfig bench_testbed(const BenchSpec& spec) {
  TestbedConfig cfg = spec.testbed;
  cfg.seed = spec.seed;
  cfg.gateway.seed = spec.seed;
  // image requests run for over a millisecond; keep the retransmit timer clear of them
  if (uses_image(spec)) cfg.gateway.timeout = std::max(cfg.gateway.timeout, 20 * sim::kMs);
  return cfg;
}

std::string host_trace_text(const cp::HostBackend& host) {
  std::string out = emu::trace_header() + "\n";
  for (const auto& r : host.trace()) out += emu::trace_line(r) + "\n";
  return out;
}

}  // namespace

BenchResult run_benchmark(const BenchSpec& spec) {
  if (spec.n == 0) throw std::invalid_argument("request count must be positive");
  Testbed tb(bench_testbed(spec));
  std::vector<std::string> kinds;
  if (spec.mode == Mode::kRrMulti) {
    tb.deploy(build_multi(spec.params));
    kinds = {"webserver", "kvclient", "imagexform"};
  } else {
    tb.deploy(build_workload(spec.workload, spec.params));
    kinds = {spec.workload};
  }
  std::map<std::string, std::string> names;
  for (const auto& k : kinds) names[k] = lambda_kind_name(k);
  RequestSource source(spec.params, spec.seed);
  BenchResult out;
  out.samples = drive(tb, spec.backend, kinds, names, spec.n, spec.mode == Mode::kPar56 ? spec.parallel : 1, source);
  const std::string label = std::string(cp::backend_name(spec.backend)) + "/" + std::string(mode_name(spec.mode)) +
                            (spec.mode == Mode::kRrMulti ? "" : "/" + spec.workload);
  out.metrics = compute_metrics(label, out.samples);
  out.trace = spec.backend == cp::Backend::kNic ? tb.nics.front()->trace_text() : host_trace_text(*tb.host);
  out.dropped_frames = tb.gateway.dropped_frames();
  return out;
}

void write_outputs(const std::string& dir, const BenchSpec& spec, const BenchResult& result) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (std::filesystem::path(dir) / name).string());
    f << text;
  };
  write("trace.csv", result.trace);
  std::ostringstream s;
  s << "request_id,lambda,sent_ps,completed_ps,latency_ps,attempts,ok\n";
  for (const auto& x : result.samples)
    s << x.request_id << ',' << x.lambda << ',' << x.sent << ',' << x.completed << ',' << (x.ok ? x.latency() : 0) << ','
      << x.attempts << ',' << (x.ok ? 1 : 0) << '\n';
  write("samples.csv", s.str());
  write("ecdf_" + std::string(cp::backend_name(spec.backend)) + ".csv", ecdf_text(result.metrics));
  write("summary.tsv", report_table({result.metrics}));
}

ContentionResult contention_experiment(cp::Backend backend, std::uint64_t n, std::uint64_t seed,
                                       const TestbedConfig& testbed, const WorkloadParams& params) {
  const std::vector<std::string> kinds = {"webserver", "kvclient", "imagexform"};
  std::map<std::string, std::string> names;
  for (const auto& k : kinds) names[k] = lambda_kind_name(k);
  TestbedConfig cfg = testbed;
  cfg.seed = seed;
  cfg.gateway.seed = seed;
  cfg.gateway.timeout = std::max(cfg.gateway.timeout, 20 * sim::kMs);

  ContentionResult out;
  {
    Testbed tb(cfg);
    tb.deploy(build_multi(params));
    RequestSource source(params, seed);
    out.multi = compute_metrics("multi", drive(tb, backend, kinds, names, n, 1, source));
  }
  std::vector<Sample> pooled;
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    const std::uint64_t count = n > j ? (n - j + kinds.size() - 1) / kinds.size() : 0;
    if (count == 0) continue;
    Testbed tb(cfg);
    tb.deploy(build_workload(kinds[j], params));
    RequestSource source(params, seed);
    auto s = drive(tb, backend, {kinds[j]}, names, count, 1, source);
    // lay the isolation runs end to end so pooled throughput spans all of them
    const sim::Time shift = pooled.empty() ? 0 : pooled.back().completed;
    for (auto& x : s) {
      x.sent += shift;
      x.completed += shift;
    }
    pooled.insert(pooled.end(), s.begin(), s.end());
  }
  out.isolation = compute_metrics("isolation", pooled);
  return out;
}

std::vector<Metrics> seed_sweep(const BenchSpec& spec, const std::vector<std::uint64_t>& seeds, bool parallel) {
  std::vector<Metrics> out(seeds.size());
  std::vector<std::string> errors(seeds.size());
  const auto n = static_cast<std::int64_t>(seeds.size());
  auto one = [&](std::int64_t i) {
    try {
      BenchSpec s = spec;
      s.seed = seeds[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = run_benchmark(s).metrics;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("seed sweep: " + e);
  return out;
}

}  // namespace lnic::bench
