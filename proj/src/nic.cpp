#include "lnic/nic.hpp"

#include <sstream>

namespace lnic::emu {

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kCompleted: return "completed";
    case Outcome::kDropped: return "dropped";
    case Outcome::kTrapped: return "trapped";
    case Outcome::kToHost: return "to_host";
    case Outcome::kDroppedDowntime: return "dropped_downtime";
    case Outcome::kDroppedTimeout: return "dropped_timeout";
    case Outcome::kMalformed: return "malformed";
  }
  return "?";
}

std::string trace_header() {
  return "request_id,workload_id,t_arrive_ps,t_dispatch_ps,t_complete_ps,cycles,instructions,outcome,rc,thread,frames";
}

std::string trace_line(const TraceRecord& r) {
  std::ostringstream os;
  os << r.request_id << ',' << r.workload_id << ',' << r.t_arrive << ',' << r.t_dispatch << ',' << r.t_complete << ','
     << r.cycles << ',' << r.instructions << ',' << outcome_name(r.outcome) << ',' << r.rc << ',' << r.thread << ','
     << r.frames;
  return os.str();
}

NicEmulator::NicEmulator(sim::Scheduler& sched, NicSpec spec, std::uint64_t seed, std::uint32_t endpoint)
    : sched_(sched), spec_(std::move(spec)), rng_(seed), endpoint_(endpoint) {
  spec_.check();
  reset_runtime();
}

void NicEmulator::reset_runtime() {
  free_.clear();
  for (std::uint32_t t = 0; t < spec_.threads(); ++t) free_.push_back(static_cast<int>(t));
}

void NicEmulator::install_firmware(fw::Firmware firmware) {
  if (firmware.total_instructions() > spec_.instruction_store)
    throw LoadError("firmware has " + std::to_string(firmware.total_instructions()) +
                    " instructions; instruction store holds " + std::to_string(spec_.instruction_store));
  for (std::size_t t = 0; t < kNumTiers; ++t) {
    const auto tier = static_cast<Tier>(t);
    const std::uint64_t cap = tier == Tier::kEmem ? spec_.emem_object_capacity() : spec_.tier_capacity(tier);
    if (firmware.placement.used(tier) > cap)
      throw LoadError(std::string("placement exceeds ") + std::string(tier_name(tier)) + " capacity");
  }
  // Queued and partially reassembled requests die with the old image.
  for (auto& [key, req] : backlog_) {
    TraceRecord r;
    r.request_id = req.header.request_id;
    r.workload_id = req.header.workload_id;
    r.t_arrive = req.arrive;
    r.t_dispatch = r.t_complete = sched_.now();
    r.outcome = Outcome::kDroppedDowntime;
    r.frames = req.frames;
    record(r);
  }
  backlog_.clear();
  for (auto& [id, p] : partial_) {
    TraceRecord r;
    r.request_id = id;
    r.t_arrive = p.arrive;
    r.t_dispatch = r.t_complete = sched_.now();
    r.outcome = Outcome::kDroppedDowntime;
    r.frames = p.count;
    record(r);
  }
  partial_.clear();
  last_finish_.clear();
  virtual_time_ = 0;
  memory_.clear();
  initialize_memory(firmware, memory_);
  tracker_.reset(firmware);
  firmware_ = std::move(firmware);
  ++loads_;
}

void NicEmulator::load_firmware(fw::Firmware firmware) {
  install_firmware(std::move(firmware));
  ready_at_ = sched_.now() + spec_.downtime_ns * sim::kNs;
  sched_.at(ready_at_, [this] { try_dispatch(); });
}

void NicEmulator::set_weight(std::uint32_t workload_id, double weight) {
  if (!(weight > 0)) throw std::invalid_argument("WFQ weight must be positive");
  weights_[workload_id] = weight;
}

std::size_t NicEmulator::queued() const { return backlog_.size(); }

void NicEmulator::record(TraceRecord r) {
  trace_.push_back(r);
  if (on_trace) on_trace(trace_.back());
}

std::string NicEmulator::trace_text() const {
  std::string out = trace_header() + "\n";
  for (const auto& r : trace_) out += trace_line(r) + "\n";
  return out;
}

void NicEmulator::ingest(const Bytes& wire, std::uint32_t source) {
  LambdaFrame f;
  try {
    f = decode_frame(wire);
  } catch (const FrameError&) {
    ++frames_ingested_;
    TraceRecord r;
    r.t_arrive = r.t_dispatch = r.t_complete = sched_.now();
    r.outcome = Outcome::kMalformed;
    r.frames = 1;
    record(r);
    return;
  }
  ingest(f, source);
}

void NicEmulator::ingest(const LambdaFrame& frame, std::uint32_t source) {
  ++frames_ingested_;
  const sim::Time now = sched_.now();
  auto drop = [&](Outcome why) {
    TraceRecord r;
    r.request_id = frame.request_id;
    r.workload_id = frame.workload_id;
    r.t_arrive = r.t_dispatch = r.t_complete = now;
    r.outcome = why;
    r.frames = 1;
    record(r);
  };
  if (!loaded() || in_downtime()) return drop(Outcome::kDroppedDowntime);
  if (frame.is_response() || frame.total == 0 || frame.seq >= frame.total) return drop(Outcome::kMalformed);

  if (frame.total == 1 && !frame.is_rdma_write()) {
    Request req;
    req.header = frame;
    req.header.payload.clear();
    req.payload = frame.payload;
    req.source = source;
    req.frames = 1;
    req.arrive = now;
    admit(std::move(req));
    return;
  }

  auto it = partial_.find(frame.request_id);
  if (it == partial_.end()) {
    Partial p;
    p.arrive = now;
    p.source = source;
    p.rdma = frame.is_rdma_write();
    p.epoch = ++epoch_;
    if (p.rdma) {
      const std::uint64_t chunk = spec_.mtu - kFrameHeaderSize;
      const std::uint64_t len = chunk * frame.total;
      if (len > spec_.rdma_pool_bytes) return drop(Outcome::kMalformed);
      p.rdma_base = rdma_alloc(len);
    }
    it = partial_.emplace(frame.request_id, std::move(p)).first;
    const auto key = frame.request_id;
    const auto epoch = it->second.epoch;
    sched_.after(spec_.reassembly_timeout_ns * sim::kNs, [this, key, epoch] { expire(key, epoch); });
  }
  Partial& p = it->second;
  if (p.rdma != frame.is_rdma_write()) return drop(Outcome::kMalformed);
  if (p.rdma) {
    const std::uint64_t chunk = spec_.mtu - kFrameHeaderSize;
    const bool last = frame.seq + 1 == frame.total;
    if (frame.payload.size() > chunk || (!last && frame.payload.size() != chunk)) return drop(Outcome::kMalformed);
  }
  bool fresh = false;
  try {
    fresh = p.frames.add(frame);
  } catch (const FrameError&) {
    return drop(Outcome::kMalformed);
  }
  ++p.count;
  if (p.rdma && fresh) {
    // the RDMA engine commits each fragment straight to EMEM
    const std::uint64_t chunk = spec_.mtu - kFrameHeaderSize;
    memory_.write(Tier::kEmem, p.rdma_base + frame.seq * chunk, frame.payload);
  }
  if (!p.frames.complete()) return;

  auto msg = p.frames.take();
  Request req;
  req.header = msg->frames.front();
  req.header.payload.clear();
  req.header.seq = 0;
  req.rdma = p.rdma;
  req.rdma_base = p.rdma_base;
  req.source = p.source;
  req.frames = p.count;
  req.arrive = p.arrive;
  if (p.rdma) {
    req.payload.resize(msg->payload.size());
    memory_.read(Tier::kEmem, p.rdma_base, req.payload);
  } else {
    req.payload = std::move(msg->payload);
    req.reorder_instructions = spec_.reorder_instructions_per_packet * frame.total;
  }
  partial_.erase(it);
  admit(std::move(req));
}

std::uint64_t NicEmulator::rdma_alloc(std::uint64_t len) {
  const std::uint64_t pool_base = spec_.tier_capacity(Tier::kEmem) - spec_.rdma_pool_bytes;
  len = (len + 7) / 8 * 8;
  if (rdma_next_ + len > spec_.rdma_pool_bytes) rdma_next_ = 0;
  const std::uint64_t base = pool_base + rdma_next_;
  rdma_next_ += len;
  return base;
}

void NicEmulator::expire(std::uint64_t key, std::uint64_t epoch) {
  const auto it = partial_.find(key);
  if (it == partial_.end() || it->second.epoch != epoch) return;
  TraceRecord r;
  r.request_id = key;
  r.t_arrive = it->second.arrive;
  r.t_dispatch = r.t_complete = sched_.now();
  r.outcome = Outcome::kDroppedTimeout;
  r.frames = it->second.count;
  record(r);
  partial_.erase(it);
}

void NicEmulator::admit(Request req) {
  req.seq = admit_seq_++;
  if (!free_.empty() && backlog_.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, free_.size() - 1);
    const std::size_t i = pick(rng_);
    const int thread = free_[i];
    free_[i] = free_.back();
    free_.pop_back();
    run_on(thread, std::move(req));
    return;
  }
  const auto w = weights_.find(req.header.workload_id);
  const double weight = w == weights_.end() ? 1.0 : w->second;
  double& last = last_finish_[req.header.workload_id];
  const double start = std::max(virtual_time_, last);
  req.finish_tag = start + 1.0 / weight;
  last = req.finish_tag;
  const auto key = std::make_pair(req.finish_tag, req.seq);
  backlog_.emplace(key, std::move(req));
  try_dispatch();
}

void NicEmulator::try_dispatch() {
  if (in_downtime()) return;
  while (!free_.empty() && !backlog_.empty()) {
    auto node = backlog_.extract(backlog_.begin());
    Request req = std::move(node.mapped());
    virtual_time_ = req.finish_tag;
    std::uniform_int_distribution<std::size_t> pick(0, free_.size() - 1);
    const std::size_t i = pick(rng_);
    const int thread = free_[i];
    free_[i] = free_.back();
    free_.pop_back();
    run_on(thread, std::move(req));
  }
}

void NicEmulator::run_on(int thread, Request req) {
  const sim::Time now = sched_.now();
  MachineRequest mreq;
  mreq.header = req.header;
  mreq.payload = &req.payload;
  mreq.payload_in_emem = req.rdma;
  mreq.match = MatchData{req.source, req.arrive / sim::kNs, static_cast<std::uint32_t>(req.payload.size())};
  MachineEnv env;
  env.nic = &spec_;
  env.memory = &memory_;
  env.tracker = tracking_ ? &tracker_ : nullptr;
  env.rpc = rpc_;
  MachineResult res = execute(*firmware_, mreq, env);
  res.instructions += req.reorder_instructions;
  res.cycles += req.reorder_instructions;

  TraceRecord r;
  r.request_id = req.header.request_id;
  r.workload_id = req.header.workload_id;
  r.t_arrive = req.arrive;
  r.t_dispatch = now;
  r.t_complete = now + sim::cycles_to_time(res.cycles, spec_.clock_hz);
  r.cycles = res.cycles;
  r.instructions = res.instructions;
  r.rc = res.rc;
  r.thread = thread;
  r.frames = req.frames;
  r.payload_len = static_cast<std::uint32_t>(req.payload.size());
  r.rdma_base = req.rdma ? req.rdma_base : 0;
  if (res.to_host || (res.lambda >= 0 && res.rc == ir::kToHost)) r.outcome = Outcome::kToHost;
  else if (!res.trap.empty()) r.outcome = Outcome::kTrapped;
  else if (res.rc == ir::kForward) r.outcome = Outcome::kCompleted;
  else r.outcome = Outcome::kDropped;

  sched_.at(r.t_complete, [this, thread, r, res = std::move(res), req = std::move(req)]() mutable {
    free_.push_back(thread);
    record(r);
    if (r.outcome == Outcome::kCompleted && on_response) {
      for (auto& f : split_message(r.workload_id, r.request_id, res.response, frame_flags::kResponse, spec_.mtu))
        on_response(f, res.port);
    } else if (r.outcome == Outcome::kToHost && on_to_host) {
      Message m;
      m.request_id = r.request_id;
      m.workload_id = r.workload_id;
      m.payload = std::move(req.payload);
      on_to_host(m);
    }
    try_dispatch();
  });
}

RunResult run(const fw::Firmware& firmware, const NicSpec& spec, const std::vector<ScheduledFrame>& schedule,
              std::uint64_t seed, RpcService rpc) {
  sim::Scheduler sched;
  NicEmulator nic(sched, spec, seed);
  nic.install_firmware(firmware);
  nic.set_rpc(std::move(rpc));
  RunResult out;
  nic.on_response = [&out](const LambdaFrame& f, std::uint32_t port) { out.responses.emplace_back(f, port); };
  for (const auto& s : schedule) sched.at(s.at, [&nic, &s] { nic.ingest(s.wire); });
  sched.run();
  out.trace = nic.trace();
  return out;
}

}  // namespace lnic::emu
