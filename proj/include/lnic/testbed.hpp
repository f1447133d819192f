#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lnic/control.hpp"
#include "lnic/nic.hpp"
#include "lnic/workloads.hpp"

namespace lnic::bench {

struct TestbedConfig {
  NicSpec nic;
  cp::HostSpec host;
  cp::GatewayConfig gateway;
  std::uint32_t nic_nodes = 1;
  int opt_level = 1;
  std::uint64_t seed = 1;
  sim::Time kv_latency = 20 * sim::kUs;
  std::string registry_path;  // empty: in-memory registry
};

/// A gateway, worker NICs, one host backend and the KV store wired onto a
/// single virtual clock.
class Testbed {
 public:
  static constexpr std::uint32_t kGatewayEndpoint = 1000;

  explicit Testbed(TestbedConfig config);

  /// Deploys on every NIC node and the host. `factory` skips the swap downtime.
  cp::DeployResult deploy(const ir::MLProgram& prog, bool factory = true, const std::string& source = "");

  TestbedConfig config;
  sim::Scheduler sched;
  KvStore kv;
  cp::Registry registry;
  cp::Gateway gateway;
  std::vector<std::unique_ptr<emu::NicEmulator>> nics;
  std::unique_ptr<cp::HostBackend> host;
  std::unique_ptr<cp::WorkloadManager> manager;
  std::vector<std::string> node_names;

 private:
  emu::RpcReply rpc(std::uint32_t endpoint, std::span<const std::uint8_t> request);
};

/// Re-deploys every program file recorded in the registry (factory mode,
/// without journaling) so a fresh process serves the same ids. Returns the
/// source paths that could not be loaded.
std::vector<std::string> restore_deployments(Testbed& tb);

}  // namespace lnic::bench
