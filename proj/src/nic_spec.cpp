#include "lnic/nic_spec.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace lnic {

std::string_view tier_name(Tier t) {
  switch (t) {
    case Tier::kLocal: return "LOCAL";
    case Tier::kCtm: return "CTM";
    case Tier::kImem: return "IMEM";
    case Tier::kEmem: return "EMEM";
  }
  return "?";
}

void NicSpec::check() const {
  if (islands == 0 || cores_per_island == 0 || threads_per_core == 0 || instruction_store == 0 || clock_hz == 0)
    throw std::invalid_argument("nic spec: counts must be positive");
  for (std::size_t i = 1; i < kNumTiers; ++i) {
    if (capacity[i] <= capacity[i - 1]) throw std::invalid_argument("nic spec: tier capacities must increase");
    if (latency[i] <= latency[i - 1]) throw std::invalid_argument("nic spec: tier latencies must increase");
  }
  if (capacity[0] == 0 || latency[0] == 0) throw std::invalid_argument("nic spec: LOCAL tier must be non-empty");
  if (rdma_pool_bytes >= capacity[3]) throw std::invalid_argument("nic spec: RDMA pool exceeds EMEM");
  if (mtu <= 22) throw std::invalid_argument("nic spec: MTU too small");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  std::string digits = v;
  std::uint64_t mult = 1;
  if (!digits.empty()) {
    switch (digits.back()) {
      case 'K': mult = 1ull << 10; digits.pop_back(); break;
      case 'M': mult = 1ull << 20; digits.pop_back(); break;
      case 'G': mult = 1ull << 30; digits.pop_back(); break;
      default: break;
    }
  }
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
  if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty())
    throw std::invalid_argument("nic spec: bad value for " + key + ": '" + v + "'");
  return out * mult;
}

}  // namespace

NicSpec NicSpec::parse(std::string_view text) {
  NicSpec s;
  using Setter = std::function<void(std::uint64_t)>;
  auto u32 = [](std::uint32_t& f) { return Setter([&f](std::uint64_t v) { f = static_cast<std::uint32_t>(v); }); };
  auto u64 = [](std::uint64_t& f) { return Setter([&f](std::uint64_t v) { f = v; }); };
  const std::map<std::string, Setter> keys = {
      {"islands", u32(s.islands)},
      {"cores_per_island", u32(s.cores_per_island)},
      {"threads_per_core", u32(s.threads_per_core)},
      {"instruction_store", u32(s.instruction_store)},
      {"clock_hz", u64(s.clock_hz)},
      {"local_bytes", u64(s.capacity[0])},
      {"ctm_bytes", u64(s.capacity[1])},
      {"imem_bytes", u64(s.capacity[2])},
      {"emem_bytes", u64(s.capacity[3])},
      {"local_latency", u32(s.latency[0])},
      {"ctm_latency", u32(s.latency[1])},
      {"imem_latency", u32(s.latency[2])},
      {"emem_latency", u32(s.latency[3])},
      {"wire_latency_ns", u64(s.wire_latency_ns)},
      {"downtime_ns", u64(s.downtime_ns)},
      {"reassembly_timeout_ns", u64(s.reassembly_timeout_ns)},
      {"reorder_instructions_per_packet", u32(s.reorder_instructions_per_packet)},
      {"rdma_pool_bytes", u64(s.rdma_pool_bytes)},
      {"instruction_budget", u64(s.instruction_budget)},
      {"mtu", u32(s.mtu)},
      {"local_max_object", u32(s.local_max_object)},
      {"ctm_max_object", u32(s.ctm_max_object)},
      {"imem_max_object", u32(s.imem_max_object)},
  };
  std::istringstream in{std::string(text)};
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // section headers are cosmetic
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("nic spec line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const auto it = keys.find(key);
    if (it == keys.end()) throw std::invalid_argument("nic spec line " + std::to_string(no) + ": unknown key " + key);
    it->second(to_u64(key, value));
  }
  s.check();
  return s;
}

NicSpec NicSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open nic spec " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string NicSpec::to_text() const {
  std::ostringstream os;
  os << "islands = " << islands << "\n"
     << "cores_per_island = " << cores_per_island << "\n"
     << "threads_per_core = " << threads_per_core << "\n"
     << "instruction_store = " << instruction_store << "\n"
     << "clock_hz = " << clock_hz << "\n"
     << "local_bytes = " << capacity[0] << "\n"
     << "ctm_bytes = " << capacity[1] << "\n"
     << "imem_bytes = " << capacity[2] << "\n"
     << "emem_bytes = " << capacity[3] << "\n"
     << "local_latency = " << latency[0] << "\n"
     << "ctm_latency = " << latency[1] << "\n"
     << "imem_latency = " << latency[2] << "\n"
     << "emem_latency = " << latency[3] << "\n"
     << "wire_latency_ns = " << wire_latency_ns << "\n"
     << "downtime_ns = " << downtime_ns << "\n"
     << "reassembly_timeout_ns = " << reassembly_timeout_ns << "\n"
     << "reorder_instructions_per_packet = " << reorder_instructions_per_packet << "\n"
     << "rdma_pool_bytes = " << rdma_pool_bytes << "\n"
     << "instruction_budget = " << instruction_budget << "\n"
     << "mtu = " << mtu << "\n"
     << "local_max_object = " << local_max_object << "\n"
     << "ctm_max_object = " << ctm_max_object << "\n"
     << "imem_max_object = " << imem_max_object << "\n";
  return os.str();
}

}  // namespace lnic
