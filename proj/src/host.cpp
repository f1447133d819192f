#include <cmath>

#include "lnic/control.hpp"

namespace lnic::cp {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

HostBackend::HostBackend(sim::Scheduler& sched, HostSpec spec, std::uint64_t seed, std::uint32_t endpoint)
    : sched_(sched), spec_(spec), seed_(seed), endpoint_(endpoint), busy_(spec.threads, false),
      last_lambda_(spec.threads, -1) {
  if (spec.threads == 0 || spec.clock_hz == 0) throw std::invalid_argument("host needs threads and a clock");
}

void HostBackend::deploy(const ir::MLProgram& input) {
  ir::MLProgram prog = input;
  prog.finalize();
  lambdas_.clear();
  for (const auto& rule : prog.match.rules) {
    const auto* l = prog.find_lambda(rule.lambda);
    if (!l) throw DeployError("match rule references unknown lambda " + rule.lambda);
    Lambda entry;
    entry.program = l->has_float_ops() ? compiler::lower_fixed_point(*l) : *l;
    entry.interp = std::make_unique<ir::Interpreter>(entry.program);
    entry.memory = std::make_unique<ir::FlatMemory>(entry.program);
    lambdas_[*rule.workload_id] = std::move(entry);
  }
}

sim::Time HostBackend::jitter(const std::string& lambda, std::uint64_t index) const {
  if (spec_.jitter_mean == 0) return 0;
  std::uint64_t name_hash = 1469598103934665603ull;
  for (unsigned char c : lambda) name_hash = (name_hash ^ c) * 1099511628211ull;
  const std::uint64_t h = splitmix(seed_ ^ splitmix(name_hash ^ splitmix(index)));
  const double u = (static_cast<double>(h >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  return static_cast<sim::Time>(std::llround(-static_cast<double>(spec_.jitter_mean) * std::log1p(-u)));
}

void HostBackend::ingest(const LambdaFrame& frame, std::uint32_t source) {
  if (frame.is_response()) return;
  Job job;
  job.source = source;
  if (frame.total == 1) {
    job.msg.request_id = frame.request_id;
    job.msg.workload_id = frame.workload_id;
    job.msg.payload = frame.payload;
    job.frames = 1;
    job.arrive = sched_.now();
  } else {
    auto& p = partial_[frame.request_id];
    if (p.count == 0) p.arrive = sched_.now();
    ++p.count;
    try {
      p.frames.add(frame);
    } catch (const FrameError&) {
      return;
    }
    if (!p.frames.complete()) return;
    job.msg = *p.frames.take();
    job.frames = p.count;
    job.arrive = p.arrive;
    partial_.erase(frame.request_id);
  }
  for (std::size_t t = 0; t < busy_.size(); ++t) {
    if (!busy_[t]) {
      start(t, std::move(job));
      return;
    }
  }
  ++queued_total_;
  queue_.push_back(std::move(job));
}

void HostBackend::start(std::size_t thread, Job job) {
  busy_[thread] = true;
  const sim::Time now = sched_.now();
  emu::TraceRecord r;
  r.request_id = job.msg.request_id;
  r.workload_id = job.msg.workload_id;
  r.t_arrive = job.arrive;
  r.t_dispatch = now;
  r.thread = static_cast<int>(thread);
  r.frames = job.frames;
  r.payload_len = static_cast<std::uint32_t>(job.msg.payload.size());

  sim::Time service = spec_.overhead;
  Bytes response;
  const auto it = lambdas_.find(job.msg.workload_id);
  if (it == lambdas_.end()) {
    r.outcome = emu::Outcome::kDropped;
  } else {
    sim::Time rpc_time = 0;
    ir::InterpOptions opts;
    opts.budget = spec_.budget;
    if (rpc_) {
      opts.rpc = [&](std::uint32_t ep, std::span<const std::uint8_t> req) {
        auto reply = rpc_(ep, req);
        rpc_time += reply.latency;
        return reply.reply;
      };
    }
    const MatchData md{job.source, job.arrive / sim::kNs, static_cast<std::uint32_t>(job.msg.payload.size())};
    const auto res = it->second.interp->run(job.msg, md, *it->second.memory, opts);
    const auto wid = static_cast<std::int64_t>(job.msg.workload_id);
    if (last_lambda_[thread] >= 0 && last_lambda_[thread] != wid) {
      service += spec_.switch_penalty;
      ++switches_;
    }
    last_lambda_[thread] = wid;
    service += sim::cycles_to_time(res.instructions, spec_.clock_hz) + rpc_time +
               jitter(it->second.program.name, served_[it->second.program.name]++);
    r.instructions = res.instructions;
    r.rc = res.rc;
    if (!res.trap.empty()) r.outcome = emu::Outcome::kTrapped;
    else if (res.rc == ir::kForward) r.outcome = emu::Outcome::kCompleted;
    else r.outcome = emu::Outcome::kDropped;
    response = res.response;
  }
  r.cycles = sim::time_to_cycles(service, spec_.clock_hz);
  r.t_complete = now + service;
  sched_.at(r.t_complete, [this, thread, r, response = std::move(response)] {
    trace_.push_back(r);
    if (on_trace) on_trace(r);
    if (r.outcome == emu::Outcome::kCompleted && on_response)
      for (const auto& f : split_message(r.workload_id, r.request_id, response, frame_flags::kResponse, spec_.mtu))
        on_response(f);
    finish(thread);
  });
}

void HostBackend::finish(std::size_t thread) {
  busy_[thread] = false;
  if (queue_.empty()) return;
  Job next = std::move(queue_.front());
  queue_.pop_front();
  start(thread, std::move(next));
}

}  // namespace lnic::cp
