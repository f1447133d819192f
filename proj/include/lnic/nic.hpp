#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lnic/firmware.hpp"
#include "lnic/machine.hpp"
#include "lnic/sim.hpp"

namespace lnic::emu {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Outcome : std::uint8_t {
  kCompleted,        // lambda returned FORWARD, response sent
  kDropped,          // lambda returned DROP or another non-forward code
  kTrapped,          // runtime trap
  kToHost,           // send-to-host default or lambda returned TO_HOST
  kDroppedDowntime,  // arrived during a firmware swap
  kDroppedTimeout,   // reassembly never completed
  kMalformed,        // frame failed to decode or contradicted its message
};
std::string_view outcome_name(Outcome o);

struct TraceRecord {
  std::uint64_t request_id = 0;
  std::uint32_t workload_id = 0;
  sim::Time t_arrive = 0;    // first frame
  sim::Time t_dispatch = 0;  // thread assigned
  sim::Time t_complete = 0;
  std::uint64_t cycles = 0;
  std::uint64_t instructions = 0;
  Outcome outcome = Outcome::kCompleted;
  std::int32_t rc = 0;
  int thread = -1;
  std::uint32_t frames = 0;  // ingested frames this record accounts for
  std::uint32_t payload_len = 0;
  std::uint64_t rdma_base = 0;  // EMEM address of an RDMA-delivered payload

  int core(std::uint32_t threads_per_core) const { return thread < 0 ? -1 : thread / static_cast<int>(threads_per_core); }
  sim::Time latency() const { return t_complete - t_arrive; }
};

/// `request_id,workload_id,t_arrive_ps,t_dispatch_ps,t_complete_ps,cycles,instructions,outcome,rc,thread,frames`
std::string trace_header();
std::string trace_line(const TraceRecord& r);

/// Discrete-event model of one SmartNIC: uniform random dispatch over free
/// threads, NIC-wide WFQ admission when all threads are busy, run-to-completion
/// execution, reassembly and the RDMA write path.
class NicEmulator {
 public:
  NicEmulator(sim::Scheduler& sched, NicSpec spec, std::uint64_t seed, std::uint32_t endpoint = 0);

  /// Swaps in new firmware; the NIC drops traffic for the configured downtime.
  void load_firmware(fw::Firmware firmware);
  /// Factory programming before any traffic: no downtime.
  void install_firmware(fw::Firmware firmware);

  void ingest(const Bytes& wire, std::uint32_t source = 0);
  void ingest(const LambdaFrame& frame, std::uint32_t source = 0);

  void set_weight(std::uint32_t workload_id, double weight);
  void set_rpc(RpcService rpc) { rpc_ = std::move(rpc); }
  void set_tracking(bool on) { tracking_ = on; }

  /// Response frames leave at completion time, one call per frame.
  std::function<void(const LambdaFrame&, std::uint32_t port)> on_response;
  /// Requests the firmware sent to the host.
  std::function<void(const Message&)> on_to_host;
  /// Every finished record, in completion order.
  std::function<void(const TraceRecord&)> on_trace;

  bool loaded() const { return firmware_.has_value(); }
  bool in_downtime() const { return sched_.now() < ready_at_; }
  sim::Time ready_at() const { return ready_at_; }
  const fw::Firmware& firmware() const { return *firmware_; }
  const NicSpec& spec() const { return spec_; }
  std::uint32_t endpoint() const { return endpoint_; }

  const std::vector<TraceRecord>& trace() const { return trace_; }
  std::string trace_text() const;
  std::uint64_t frames_ingested() const { return frames_ingested_; }
  std::size_t busy_threads() const { return spec_.threads() - free_.size(); }
  std::size_t queued() const;
  const RegionTracker& tracker() const { return tracker_; }
  const PhysicalMemory& memory() const { return memory_; }
  std::uint64_t firmware_loads() const { return loads_; }

 private:
  struct Request {
    LambdaFrame header;
    Bytes payload;
    bool rdma = false;
    std::uint64_t rdma_base = 0;
    std::uint32_t reorder_instructions = 0;
    std::uint32_t source = 0;
    std::uint32_t frames = 0;
    sim::Time arrive = 0;
    double finish_tag = 0;
    std::uint64_t seq = 0;
  };
  struct Partial {
    Reassembler frames;
    sim::Time arrive = 0;
    std::uint32_t count = 0;
    std::uint32_t source = 0;
    bool rdma = false;
    std::uint64_t rdma_base = 0;
    std::uint64_t epoch = 0;
  };

  void reset_runtime();
  void record(TraceRecord r);
  void admit(Request req);
  void try_dispatch();
  void run_on(int thread, Request req);
  void expire(std::uint64_t key, std::uint64_t epoch);
  std::uint64_t rdma_alloc(std::uint64_t len);

  sim::Scheduler& sched_;
  NicSpec spec_;
  std::mt19937_64 rng_;
  std::uint32_t endpoint_;
  std::optional<fw::Firmware> firmware_;
  sim::Time ready_at_ = 0;
  std::uint64_t loads_ = 0;
  PhysicalMemory memory_;
  RegionTracker tracker_;
  bool tracking_ = true;
  RpcService rpc_;

  std::vector<int> free_;
  std::map<std::uint32_t, double> weights_;
  std::map<std::uint32_t, double> last_finish_;
  double virtual_time_ = 0;
  std::map<std::pair<double, std::uint64_t>, Request> backlog_;
  std::uint64_t admit_seq_ = 0;

  std::map<std::uint64_t, Partial> partial_;  // by request id
  std::uint64_t epoch_ = 0;
  std::uint64_t rdma_next_ = 0;

  std::vector<TraceRecord> trace_;
  std::uint64_t frames_ingested_ = 0;
};

/// Convenience driver: installs `firmware`, feeds the timed wire frames and
/// runs to quiescence. Deterministic in (firmware, schedule, seed).
struct ScheduledFrame {
  sim::Time at = 0;
  Bytes wire;
};
struct RunResult {
  std::vector<TraceRecord> trace;
  std::vector<std::pair<LambdaFrame, std::uint32_t>> responses;
};
RunResult run(const fw::Firmware& firmware, const NicSpec& spec, const std::vector<ScheduledFrame>& schedule,
              std::uint64_t seed, RpcService rpc = {});

}  // namespace lnic::emu
