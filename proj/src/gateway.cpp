#include "lnic/control.hpp"

namespace lnic::cp {

std::string_view backend_name(Backend b) { return b == Backend::kNic ? "nic" : "host"; }

Backend parse_backend(std::string_view s) {
  if (s == "nic") return Backend::kNic;
  if (s == "host") return Backend::kHost;
  throw std::invalid_argument("backend must be nic or host, got '" + std::string(s) + "'");
}

Gateway::Gateway(sim::Scheduler& sched, GatewayConfig config) : sched_(sched), config_(config), rng_(config.seed) {
  if (config_.drop_rate < 0 || config_.drop_rate >= 1) throw std::invalid_argument("drop rate must be in [0, 1)");
}

void Gateway::add_node(Backend kind, Deliver deliver) { nodes_[kind].push_back(std::move(deliver)); }

std::size_t Gateway::nodes(Backend kind) const {
  const auto it = nodes_.find(kind);
  return it == nodes_.end() ? 0 : it->second.size();
}

void Gateway::set_mapping(std::map<std::string, std::uint32_t> mapping) { mapping_ = std::move(mapping); }

bool Gateway::lose() {
  if (config_.drop_rate <= 0) return false;
  std::bernoulli_distribution d(config_.drop_rate);
  if (!d(rng_)) return false;
  ++dropped_;
  return true;
}

std::uint64_t Gateway::route(const std::string& name, Bytes payload, Backend backend, Done done, bool rdma) {
  const auto m = mapping_.find(name);
  if (m == mapping_.end()) throw RoutingError("unknown workload '" + name + "'");
  const std::size_t n = nodes(backend);
  if (n == 0) throw RoutingError("no " + std::string(backend_name(backend)) + " nodes registered");
  const std::uint64_t id = next_request_++;
  Pending p;
  p.result.request_id = id;
  p.result.name = name;
  p.result.sent = sched_.now();
  p.backend = backend;
  p.node = next_node_[backend]++ % n;
  const std::uint8_t flags = rdma ? frame_flags::kRdmaWrite : 0;
  p.frames = split_message(m->second, id, payload, flags, config_.mtu);
  if (rdma) p.frames.back().flags |= frame_flags::kEventTrigger;
  p.done = std::move(done);
  pending_.emplace(id, std::move(p));
  transmit(id);
  return id;
}

void Gateway::transmit(std::uint64_t id) {
  auto& p = pending_.at(id);
  ++p.result.attempts;
  const auto& deliver = nodes_.at(p.backend)[p.node];
  for (const auto& f : p.frames) {
    if (lose()) continue;
    sched_.after(config_.wire_latency, [deliver, f] { deliver(f); });
  }
  const std::uint32_t attempt = p.result.attempts;
  sched_.after(config_.timeout, [this, id, attempt] { on_timeout(id, attempt); });
}

void Gateway::on_timeout(std::uint64_t id, std::uint32_t attempt) {
  const auto it = pending_.find(id);
  if (it == pending_.end() || it->second.result.attempts != attempt) return;
  if (attempt <= config_.max_retries) {
    ++retransmissions_;
    transmit(id);
    return;
  }
  Pending p = std::move(it->second);
  pending_.erase(it);
  ++failures_;
  p.result.ok = false;
  p.result.completed = sched_.now();
  p.result.error = "no response after " + std::to_string(p.result.attempts) + " attempts";
  if (p.done) p.done(p.result);
}

void Gateway::receive(const LambdaFrame& frame) {
  if (lose()) return;
  const auto it = pending_.find(frame.request_id);
  if (it == pending_.end() || !frame.is_response()) {
    ++duplicates_;
    return;
  }
  auto& p = it->second;
  try {
    if (!p.response.add(frame)) ++duplicates_;
  } catch (const FrameError&) {
    ++duplicates_;
    return;
  }
  if (!p.response.complete()) return;
  Pending done = std::move(p);
  pending_.erase(it);
  done.result.ok = true;
  done.result.completed = sched_.now();
  done.result.response = done.response.take()->payload;
  if (done.done) done.done(done.result);
}

}  // namespace lnic::cp
