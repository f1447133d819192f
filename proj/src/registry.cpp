#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lnic/control.hpp"

namespace lnic::cp {

namespace {

void put(Bytes& b, std::uint64_t v, std::size_t width) {
  const std::size_t at = b.size();
  b.resize(at + width);
  store_be(b, at, width, v);
}

void put_str(Bytes& b, const std::string& s) {
  if (s.size() > 0xFFFF) throw RegistryError("registry string too long");
  put(b, s.size(), 2);
  b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
  std::span<const std::uint8_t> b;
  std::size_t at = 0;
  std::uint64_t num(std::size_t w) {
    if (at + w > b.size()) throw RegistryError("corrupt registry record");
    const auto v = load_be(b, at, w);
    at += w;
    return v;
  }
  std::string str() {
    const auto n = static_cast<std::size_t>(num(2));
    if (at + n > b.size()) throw RegistryError("corrupt registry record");
    std::string s(b.begin() + static_cast<std::ptrdiff_t>(at), b.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return s;
  }
};

}  // namespace

Registry::Registry(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::size_t at = 0;
  while (at < data.size()) {
    if (data.size() - at < 4) break;
    const auto len = static_cast<std::size_t>(load_be(data, at, 4));
    if (len == 0 || data.size() - at - 4 < len) break;
    Reader r{std::span<const std::uint8_t>(data).subspan(at + 4, len)};
    const auto op = static_cast<Op>(r.num(1));
    if (op != kAssign && op != kDeploy) throw RegistryError("unknown registry op " + std::to_string(op));
    RegistryEntry e;
    e.name = r.str();
    e.workload_id = static_cast<std::uint32_t>(r.num(4));
    e.digest = r.num(8);
    const auto n = r.num(2);
    for (std::uint64_t i = 0; i < n; ++i) e.nodes.push_back(r.str());
    e.source = r.str();
    apply(op, e);
    at += 4 + len;
  }
  if (at < data.size()) {
    // torn tail from a crash mid-append: drop it so later appends stay aligned
    discarded_ = data.size() - at;
    std::filesystem::resize_file(path_, at);
  }
}

void Registry::apply(Op op, const RegistryEntry& e) {
  if (op == kAssign) {
    RegistryEntry fresh;
    fresh.name = e.name;
    fresh.workload_id = e.workload_id;
    fresh.status = "assigned";
    entries_[e.name] = fresh;
    next_id_ = std::max(next_id_, e.workload_id + 1);
    return;
  }
  auto it = entries_.find(e.name);
  if (it == entries_.end()) throw RegistryError("deploy record for unassigned workload " + e.name);
  it->second.digest = e.digest;
  it->second.nodes = e.nodes;
  it->second.source = e.source;
  it->second.status = "deployed";
}

void Registry::append(Op op, const RegistryEntry& e) {
  if (path_.empty() || !journaling_) return;
  Bytes body;
  put(body, op, 1);
  put_str(body, e.name);
  put(body, e.workload_id, 4);
  put(body, e.digest, 8);
  put(body, e.nodes.size(), 2);
  for (const auto& n : e.nodes) put_str(body, n);
  put_str(body, e.source);
  Bytes rec;
  put(rec, body.size(), 4);
  rec.insert(rec.end(), body.begin(), body.end());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw RegistryError("cannot open registry journal " + path_);
  out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  out.flush();
  if (!out) throw RegistryError("failed to append to registry journal " + path_);
}

std::optional<RegistryEntry> Registry::find(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Registry::name_of(std::uint32_t workload_id) const {
  for (const auto& [name, e] : entries_)
    if (e.workload_id == workload_id) return name;
  return std::nullopt;
}

std::uint32_t Registry::assign(const std::string& name) {
  if (const auto it = entries_.find(name); it != entries_.end()) return it->second.workload_id;
  RegistryEntry e;
  e.name = name;
  e.workload_id = next_id_;
  append(kAssign, e);
  apply(kAssign, e);
  return e.workload_id;
}

void Registry::record_deploy(const std::string& name, std::uint64_t digest, const std::vector<std::string>& nodes,
                             const std::string& source) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw RegistryError("workload " + name + " has no id");
  RegistryEntry e = it->second;
  e.digest = digest;
  e.nodes = nodes;
  e.source = source;
  append(kDeploy, e);
  apply(kDeploy, e);
}

std::map<std::string, std::uint32_t> Registry::mapping() const {
  std::map<std::string, std::uint32_t> m;
  for (const auto& [name, e] : entries_) m[name] = e.workload_id;
  return m;
}

std::string Registry::listing() const {
  std::ostringstream os;
  os << "name\tid\tstatus\tdigest\tnodes\tsource\n";
  for (const auto& [name, e] : entries_) {
    os << name << '\t' << e.workload_id << '\t' << e.status << '\t' << std::hex << std::setw(16) << std::setfill('0')
       << e.digest << std::dec << std::setfill(' ') << '\t';
    for (std::size_t i = 0; i < e.nodes.size(); ++i) os << (i ? "," : "") << e.nodes[i];
    os << '\t' << e.source << '\n';
  }
  return os.str();
}

}  // namespace lnic::cp
