#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnic/compiler.hpp"
#include "lnic/interp.hpp"
#include "lnic/nic.hpp"
#include "lnic/sim.hpp"

namespace lnic::cp {

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DeployError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Registry: workload name -> id, persisted as an append-only journal of
// length-prefixed records.

struct RegistryEntry {
  std::string name;
  std::uint32_t workload_id = 0;
  std::uint64_t digest = 0;
  std::vector<std::string> nodes;
  std::string status;  // "assigned" until the first deploy, then "deployed"
  std::string source;  // program file the lambda came from, if any
  bool operator==(const RegistryEntry&) const = default;
};

class Registry {
 public:
  /// In-memory only.
  Registry() = default;
  /// Replays the journal at `path` (created if missing). A torn trailing
  /// record is discarded.
  explicit Registry(std::string path);

  std::optional<RegistryEntry> find(const std::string& name) const;
  std::optional<std::string> name_of(std::uint32_t workload_id) const;
  const std::map<std::string, RegistryEntry>& entries() const { return entries_; }
  std::uint32_t next_id() const { return next_id_; }

  /// Returns the existing id or allocates the next one; ids are never reused.
  std::uint32_t assign(const std::string& name);
  void record_deploy(const std::string& name, std::uint64_t digest, const std::vector<std::string>& nodes,
                     const std::string& source);

  std::map<std::string, std::uint32_t> mapping() const;
  std::string listing() const;
  bool operator==(const Registry& o) const { return entries_ == o.entries_ && next_id_ == o.next_id_; }

  const std::string& path() const { return path_; }
  std::size_t discarded_bytes() const { return discarded_; }
  /// While off, updates apply in memory only (used to rebuild runtime state
  /// from the journal without re-recording it).
  void set_journaling(bool on) { journaling_ = on; }

 private:
  enum Op : std::uint8_t { kAssign = 1, kDeploy = 2 };
  void apply(Op op, const RegistryEntry& e);
  void append(Op op, const RegistryEntry& e);

  std::string path_;
  std::map<std::string, RegistryEntry> entries_;
  std::uint32_t next_id_ = 1;
  std::size_t discarded_ = 0;
  bool journaling_ = true;
};

// ---------------------------------------------------------------------------
// Host (bare-metal) backend: a thread pool running the same lambdas through
// the reference interpreter.

struct HostSpec {
  std::uint32_t threads = 56;
  std::uint64_t clock_hz = 2'000'000'000;
  sim::Time overhead = 10 * sim::kUs;
  sim::Time switch_penalty = 5 * sim::kUs;
  sim::Time jitter_mean = 2 * sim::kUs;  // exponential OS noise; 0 disables
  std::uint64_t budget = ir::kDefaultInstructionBudget;
  std::uint32_t mtu = 1500;
};

class HostBackend {
 public:
  HostBackend(sim::Scheduler& sched, HostSpec spec, std::uint64_t seed, std::uint32_t endpoint = 100);

  /// Installs every lambda of `prog` under its match-rule workload id.
  void deploy(const ir::MLProgram& prog);
  void ingest(const LambdaFrame& frame, std::uint32_t source = 0);
  void set_rpc(emu::RpcService rpc) { rpc_ = std::move(rpc); }

  std::function<void(const LambdaFrame&)> on_response;
  std::function<void(const emu::TraceRecord&)> on_trace;

  const std::vector<emu::TraceRecord>& trace() const { return trace_; }
  const HostSpec& spec() const { return spec_; }
  std::size_t queued() const { return queue_.size(); }
  std::uint64_t queued_total() const { return queued_total_; }
  std::uint64_t switches() const { return switches_; }
  std::uint32_t endpoint() const { return endpoint_; }

  /// Exponential jitter sample shared across runs with the same seed:
  /// keyed by (seed, lambda name, per-lambda request index), so matched
  /// experiments see common random numbers whatever ids were assigned.
  sim::Time jitter(const std::string& lambda, std::uint64_t index) const;

 private:
  struct Lambda {
    ir::LambdaProgram program;
    std::unique_ptr<ir::Interpreter> interp;
    std::unique_ptr<ir::FlatMemory> memory;
  };
  struct Job {
    Message msg;
    std::uint32_t source = 0;
    std::uint32_t frames = 0;
    sim::Time arrive = 0;
  };
  void start(std::size_t thread, Job job);
  void finish(std::size_t thread);

  sim::Scheduler& sched_;
  HostSpec spec_;
  std::uint64_t seed_;
  std::uint32_t endpoint_;
  emu::RpcService rpc_;
  std::map<std::uint32_t, Lambda> lambdas_;
  std::map<std::string, std::uint64_t> served_;  // per-lambda request counter
  std::vector<bool> busy_;
  std::vector<std::int64_t> last_lambda_;
  std::deque<Job> queue_;  // FIFO
  struct Partial {
    Reassembler frames;
    sim::Time arrive = 0;
    std::uint32_t count = 0;
  };
  std::map<std::uint64_t, Partial> partial_;
  std::vector<emu::TraceRecord> trace_;
  std::uint64_t queued_total_ = 0, switches_ = 0;
};

// ---------------------------------------------------------------------------
// Gateway: workload-id header injection, round-robin routing and sender-side
// retransmission over a lossy network.

enum class Backend : std::uint8_t { kNic, kHost };
std::string_view backend_name(Backend b);
Backend parse_backend(std::string_view s);

struct GatewayConfig {
  sim::Time timeout = 2 * sim::kMs;
  std::uint32_t max_retries = 5;
  std::uint32_t mtu = 1500;
  double drop_rate = 0.0;  // injected, each direction, per frame
  sim::Time wire_latency = 500 * sim::kNs;
  std::uint64_t seed = 1;
};

struct RequestResult {
  std::uint64_t request_id = 0;
  std::string name;
  bool ok = false;
  Bytes response;
  std::uint32_t attempts = 0;
  sim::Time sent = 0;       // first attempt
  sim::Time completed = 0;  // response assembled or failure declared
  std::string error;
  sim::Time latency() const { return completed - sent; }
};

class Gateway {
 public:
  using Deliver = std::function<void(const LambdaFrame&)>;
  using Done = std::function<void(const RequestResult&)>;

  Gateway(sim::Scheduler& sched, GatewayConfig config);

  void add_node(Backend kind, Deliver deliver);
  std::size_t nodes(Backend kind) const;
  /// Replaces the name -> workload id table in one step.
  void set_mapping(std::map<std::string, std::uint32_t> mapping);
  const std::map<std::string, std::uint32_t>& mapping() const { return mapping_; }

  /// Throws RoutingError for an unknown name or a backend without nodes;
  /// nothing is sent in that case. Returns the request id.
  std::uint64_t route(const std::string& name, Bytes payload, Backend backend, Done done, bool rdma = false);
  /// Response frames from the nodes; subject to injected drops.
  void receive(const LambdaFrame& frame);

  std::uint64_t retransmissions() const { return retransmissions_; }
  std::uint64_t duplicate_frames() const { return duplicates_; }
  std::uint64_t dropped_frames() const { return dropped_; }
  std::uint64_t failures() const { return failures_; }
  std::size_t in_flight() const { return pending_.size(); }
  const GatewayConfig& config() const { return config_; }

 private:
  struct Pending {
    RequestResult result;
    std::vector<LambdaFrame> frames;
    Backend backend;
    std::size_t node;
    Reassembler response;
    Done done;
  };
  void transmit(std::uint64_t id);
  void on_timeout(std::uint64_t id, std::uint32_t attempt);
  bool lose();

  sim::Scheduler& sched_;
  GatewayConfig config_;
  std::mt19937_64 rng_;
  std::map<Backend, std::vector<Deliver>> nodes_;
  std::map<Backend, std::size_t> next_node_;
  std::map<std::string, std::uint32_t> mapping_;
  std::map<std::uint64_t, Pending> pending_;
  std::uint64_t next_request_ = 1;
  std::uint64_t retransmissions_ = 0, duplicates_ = 0, dropped_ = 0, failures_ = 0;
};

// ---------------------------------------------------------------------------
// Workload manager: merges lambdas per node, assigns ids, compiles, loads
// firmware and publishes the mapping once the swap completes.

struct DeployResult {
  std::map<std::string, std::uint32_t> ids;
  std::uint64_t digest = 0;
  compiler::CompileReport report;
  sim::Time ready_at = 0;
};

class WorkloadManager {
 public:
  WorkloadManager(sim::Scheduler& sched, Registry& registry, Gateway& gateway, compiler::CompileOptions options = {});

  void add_node(const std::string& name, emu::NicEmulator* nic, HostBackend* host = nullptr);
  /// Throws DeployError (registry untouched) on validation, compile or load failure.
  DeployResult deploy(const ir::MLProgram& prog, const std::vector<std::string>& nodes, const std::string& source = "",
                      bool factory = false);
  /// Program currently assigned to `node`.
  const ir::MLProgram& program(const std::string& node) const;

 private:
  struct Node {
    emu::NicEmulator* nic = nullptr;
    HostBackend* host = nullptr;
    ir::MLProgram program;
  };
  sim::Scheduler& sched_;
  Registry& registry_;
  Gateway& gateway_;
  compiler::CompileOptions options_;
  std::map<std::string, Node> nodes_;
};

/// Merges `add` into `base`: same-name lambdas are replaced, headers are
/// unioned by name, match rules follow the lambdas. Throws DeployError on
/// conflicting header schemas.
ir::MLProgram merge_programs(const ir::MLProgram& base, const ir::MLProgram& add);

}  // namespace lnic::cp
