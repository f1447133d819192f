#include "lnic/testbed.hpp"

#include <algorithm>
#include <filesystem>

namespace lnic::bench {

Testbed::Testbed(TestbedConfig cfg)
    : config(std::move(cfg)),
      kv(config.kv_latency),
      registry(config.registry_path.empty() ? cp::Registry() : cp::Registry(config.registry_path)),
      gateway(sched, config.gateway) {
  const sim::Time wire = config.gateway.wire_latency;
  auto service = [this](std::uint32_t ep, std::span<const std::uint8_t> req) { return rpc(ep, req); };
  manager = std::make_unique<cp::WorkloadManager>(sched, registry, gateway, compiler::CompileOptions{config.opt_level, true});
  host = std::make_unique<cp::HostBackend>(sched, config.host, config.seed ^ 0x5eed, 100);
  host->set_rpc(service);
  host->on_response = [this, wire](const LambdaFrame& f) { sched.after(wire, [this, f] { gateway.receive(f); }); };
  gateway.add_node(cp::Backend::kHost, [this](const LambdaFrame& f) { host->ingest(f, kGatewayEndpoint); });
  for (std::uint32_t i = 0; i < config.nic_nodes; ++i) {
    auto nic = std::make_unique<emu::NicEmulator>(sched, config.nic, config.seed + i, i);
    nic->set_rpc(service);
    nic->on_response = [this, wire](const LambdaFrame& f, std::uint32_t) {
      sched.after(wire, [this, f] { gateway.receive(f); });
    };
    emu::NicEmulator* raw = nic.get();
    gateway.add_node(cp::Backend::kNic, [raw](const LambdaFrame& f) { raw->ingest(f, kGatewayEndpoint); });
    node_names.push_back("nic" + std::to_string(i));
    manager->add_node(node_names.back(), raw, i == 0 ? host.get() : nullptr);
    nics.push_back(std::move(nic));
  }
}

emu::RpcReply Testbed::rpc(std::uint32_t endpoint, std::span<const std::uint8_t> request) {
  const sim::Time rtt = 2 * config.gateway.wire_latency;
  if (endpoint == kKvEndpoint) return {kv.handle(request), rtt + kv.service_latency()};
  return {{}, rtt};
}

cp::DeployResult Testbed::deploy(const ir::MLProgram& prog, bool factory, const std::string& source) {
  return manager->deploy(prog, node_names, source, factory);
}

std::vector<std::string> restore_deployments(Testbed& tb) {
  // group by source file, oldest id first, so merges happen in deploy order
  std::map<std::string, std::uint32_t> first_id;
  for (const auto& [name, e] : tb.registry.entries()) {
    if (e.status != "deployed" || e.source.empty()) continue;
    auto [it, fresh] = first_id.emplace(e.source, e.workload_id);
    if (!fresh) it->second = std::min(it->second, e.workload_id);
  }
  std::vector<std::pair<std::uint32_t, std::string>> order;
  for (const auto& [src, id] : first_id) order.emplace_back(id, src);
  std::sort(order.begin(), order.end());
  std::vector<std::string> missing;
  tb.registry.set_journaling(false);
  try {
    for (const auto& [id, src] : order) {
      if (!std::filesystem::exists(src)) {
        missing.push_back(src);
        continue;
      }
      tb.deploy(ir::load_program(src), true, src);
    }
  } catch (...) {
    tb.registry.set_journaling(true);
    throw;
  }
  tb.registry.set_journaling(true);
  tb.sched.run();
  return missing;
}

}  // namespace lnic::bench
