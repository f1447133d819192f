// lnic: deploys lambdas, lists the registry, invokes lambdas and serves the
// gateway over UDP. State lives in a registry journal under --state.
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "lnic/loopback.hpp"
#include "lnic/testbed.hpp"

using namespace lnic;

namespace {

std::atomic<bool> g_stop{false};

Bytes parse_hex(const std::string& hex) {
  if (hex.size() % 2) throw std::invalid_argument("hex payload must have an even number of digits");
  Bytes out;
  for (std::size_t i = 0; i < hex.size(); i += 2) out.push_back(static_cast<std::uint8_t>(std::stoul(hex.substr(i, 2), nullptr, 16)));
  return out;
}

std::string render(const Bytes& b) {
  bool printable = !b.empty();
  for (auto c : b) printable = printable && (std::isprint(c) || c == '\n');
  if (printable) return std::string(b.begin(), b.end());
  std::ostringstream os;
  os << std::hex;
  for (auto c : b) os << (c < 16 ? "0" : "") << static_cast<int>(c);
  return os.str();
}

struct Common {
  std::string state = ".lnic";
  std::string nic;
  int opt = 1;
  std::uint32_t nodes = 1;
  std::uint64_t seed = 1;

  std::string journal() const { return (std::filesystem::path(state) / "registry.journal").string(); }

  std::unique_ptr<bench::Testbed> testbed() const {
    std::filesystem::create_directories(state);
    bench::TestbedConfig cfg;
    if (!nic.empty()) cfg.nic = NicSpec::load(nic);
    cfg.opt_level = opt;
    cfg.nic_nodes = nodes;
    cfg.seed = seed;
    cfg.registry_path = journal();
    auto tb = std::make_unique<bench::Testbed>(cfg);
    for (const auto& src : bench::restore_deployments(*tb))
      std::cerr << "lnic: warning: deployed program " << src << " is missing; its lambdas are not served\n";
    return tb;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lnic control plane"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--state", c.state, "state directory holding the registry journal");
  app.add_option("--nic", c.nic, "NIC config file")->check(CLI::ExistingFile);
  app.add_option("--opt", c.opt, "optimization level")->check(CLI::IsMember({0, 1}));
  app.add_option("--nodes", c.nodes, "worker NIC count")->check(CLI::Range(1, 64));
  app.add_option("--seed", c.seed, "emulator seed");

  std::string program;
  auto* deploy = app.add_subcommand("deploy", "compile and deploy a program onto every node");
  deploy->add_option("program", program, "program file (.mlp)")->required()->check(CLI::ExistingFile);

  auto* list = app.add_subcommand("list", "show the registry");

  std::string name, data, hex, file, remote, backend = "nic", out;
  bool rdma = false;
  int timeout_ms = 50, retries = 5;
  auto* invoke = app.add_subcommand("invoke", "send one request to a lambda");
  invoke->add_option("name", name, "lambda name")->required();
  auto* payload_group = invoke->add_option_group("payload");
  payload_group->add_option("--data", data, "payload as text");
  payload_group->add_option("--hex", hex, "payload as hex digits");
  payload_group->add_option("--file", file, "payload from a file")->check(CLI::ExistingFile);
  payload_group->require_option(0, 1);
  invoke->add_option("--backend", backend, "nic or host")->check(CLI::IsMember({"nic", "host"}));
  invoke->add_flag("--rdma", rdma, "deliver the payload by RDMA write");
  invoke->add_option("--remote", remote, "host:port of a running 'lnic serve' instead of an in-process testbed");
  invoke->add_option("--timeout-ms", timeout_ms, "remote retransmit timeout");
  invoke->add_option("--retries", retries, "remote max retries");
  invoke->add_option("--out", out, "write the raw response here");

  std::string bind = "127.0.0.1:9000", serve_backend = "nic";
  int workers = 4;
  double duration = 0;
  bool quiet = false;
  auto* serve = app.add_subcommand("serve", "answer lambda frames over UDP");
  serve->add_option("--bind", bind, "host:port to listen on");
  serve->add_option("--workers", workers, "receive threads")->check(CLI::Range(1, 256));
  serve->add_option("--backend", serve_backend, "nic or host")->check(CLI::IsMember({"nic", "host"}));
  serve->add_option("--duration", duration, "seconds to serve (0 = until interrupted)");
  serve->add_flag("--quiet", quiet, "no per-request log");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*deploy) {
      auto tb = c.testbed();
      const auto src = std::filesystem::absolute(program).string();
      const auto res = tb->deploy(ir::load_program(src), false, src);
      tb->sched.run();
      std::cout << "deployed " << src << " (digest " << std::hex << res.digest << std::dec << ", ready after "
                << sim::to_us(res.ready_at) / 1000.0 << " ms virtual)\n";
      for (const auto& [n, id] : res.ids) std::cout << "  " << n << " -> " << id << "\n";
      std::cout << res.report.summary();
    } else if (*list) {
      std::filesystem::create_directories(c.state);
      std::cout << cp::Registry(c.journal()).listing();
    } else if (*invoke) {
      Bytes payload(data.begin(), data.end());
      if (!hex.empty()) payload = parse_hex(hex);
      if (!file.empty()) {
        std::ifstream f(file, std::ios::binary);
        payload.assign(std::istreambuf_iterator<char>(f), {});
      }
      Bytes response;
      if (!remote.empty()) {
        std::filesystem::create_directories(c.state);
        const cp::Registry reg(c.journal());
        const auto entry = reg.find(name);
        if (!entry) throw cp::RoutingError("unknown lambda '" + name + "'");
        const auto [host, port] = net::parse_endpoint(remote);
        net::LoopbackClient client(host, port, timeout_ms, retries);
        const std::uint64_t request_id = static_cast<std::uint64_t>(std::random_device{}()) << 16 | 1;
        const auto reply = client.call(entry->workload_id, request_id, payload, rdma);
        response = reply.payload;
        std::cerr << "attempts=" << reply.attempts << "\n";
      } else {
        auto tb = c.testbed();
        std::optional<cp::RequestResult> result;
        tb->gateway.route(name, payload, cp::parse_backend(backend), [&](const cp::RequestResult& r) { result = r; }, rdma);
        tb->sched.run();
        if (!result || !result->ok) throw std::runtime_error("request failed: " + (result ? result->error : "no result"));
        response = result->response;
        std::cerr << "latency_us=" << sim::to_us(result->latency()) << " attempts=" << result->attempts << "\n";
      }
      if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        f.write(reinterpret_cast<const char*>(response.data()), static_cast<std::streamsize>(response.size()));
      } else {
        std::cout << render(response) << "\n";
      }
    } else if (*serve) {
      auto tb = c.testbed();
      const auto [host, port] = net::parse_endpoint(bind);
      net::LoopbackOptions opts;
      opts.host = host;
      opts.port = port;
      opts.workers = workers;
      opts.backend = cp::parse_backend(serve_backend);
      opts.log = quiet ? nullptr : &std::cout;
      net::LoopbackServer server(*tb, opts);
      server.start();
      std::cout << "serving " << tb->gateway.mapping().size() << " lambdas on " << host << ":" << server.port()
                << std::endl;
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      const auto start = std::chrono::steady_clock::now();
      while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        if (duration > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= duration)
          break;
      }
      server.stop();
      std::cout << "served=" << server.served() << " malformed=" << server.malformed() << " replays=" << server.replays()
                << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "lnic: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
