#include "lnic/loopback.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace lnic::net {

namespace {

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) throw SocketError("bad IPv4 address '" + host + "'");
  return a;
}

std::string peer_name(const sockaddr_in& a) {
  char buf[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &a.sin_addr, buf, sizeof buf);
  return std::string(buf) + ":" + std::to_string(ntohs(a.sin_port));
}

int open_udp() {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw SocketError(std::string("socket: ") + std::strerror(errno));
  return fd;
}

bool wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0 && (p.revents & POLLIN);
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

LoopbackServer::LoopbackServer(bench::Testbed& testbed, LoopbackOptions options)
    : tb_(testbed), options_(std::move(options)) {}

LoopbackServer::~LoopbackServer() { stop(); }

void LoopbackServer::start() {
  if (running_) return;
  fd_ = open_udp();
  const sockaddr_in addr = make_addr(options_.host, options_.port);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw SocketError("bind " + options_.host + ":" + std::to_string(options_.port) + ": " + err);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  running_ = true;
  for (int i = 0; i < std::max(1, options_.workers); ++i) threads_.emplace_back([this] { worker(); });
}

void LoopbackServer::stop() {
  if (!running_.exchange(false)) return;
  for (auto& t : threads_) t.join();
  threads_.clear();
  ::close(fd_);
  fd_ = -1;
}

void LoopbackServer::worker() {
  std::vector<std::uint8_t> buf(65536);
  while (running_) {
    if (!wait_readable(fd_, 20)) continue;
    sockaddr_in from{};
    socklen_t flen = sizeof from;
    const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&from), &flen);
    if (n < 0) continue;  // another worker took it
    LambdaFrame frame;
    try {
      frame = decode_frame(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
      if (frame.is_response()) throw FrameError("response frame sent to the gateway");
    } catch (const FrameError&) {
      ++malformed_;
      continue;
    }
    const std::string peer = peer_name(from);
    std::vector<Bytes> out;
    try {
      out = handle(peer, frame);
    } catch (const FrameError&) {
      ++malformed_;
      continue;
    }
    for (const auto& d : out) ::sendto(fd_, d.data(), d.size(), 0, reinterpret_cast<const sockaddr*>(&from), flen);
  }
}

std::vector<Bytes> LoopbackServer::handle(const std::string& peer, const LambdaFrame& frame) {
  const auto key = std::make_pair(peer, frame.request_id);
  std::unique_lock lock(mu_);
  if (auto it = answered_.find(key); it != answered_.end()) {
    ++replays_;
    return it->second;
  }
  Client& c = partial_[key];
  c.frames.add(frame);
  if (!c.frames.complete()) return {};
  Message msg = *c.frames.take();
  partial_.erase(key);

  const auto name = tb_.registry.name_of(msg.workload_id);
  if (!name || !tb_.gateway.mapping().contains(*name)) {
    ++malformed_;
    if (options_.log) *options_.log << "drop " << peer << " req=" << msg.request_id << " unknown workload id " << msg.workload_id << "\n";
    return {};
  }
  std::optional<cp::RequestResult> result;
  const auto wall0 = std::chrono::steady_clock::now();
  tb_.gateway.route(*name, msg.payload, options_.backend, [&](const cp::RequestResult& r) { result = r; },
                    frame.is_rdma_write());
  tb_.sched.run();
  const auto wall_us =
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - wall0).count();
  std::vector<Bytes> out;
  if (result && result->ok) {
    for (const auto& f : split_message(msg.workload_id, msg.request_id, result->response, frame_flags::kResponse))
      out.push_back(encode_frame(f));
    if (answered_.size() >= 65536) answered_.erase(answered_.begin());  // bounded replay cache
    answered_[key] = out;
    ++served_;
  }
  if (options_.log) {
    *options_.log << (result && result->ok ? "ok " : "fail ") << peer << " req=" << msg.request_id << " lambda=" << *name
                  << " frames=" << msg.frames.size() << " resp_bytes=" << (result ? result->response.size() : 0)
                  << " virtual_us=" << (result ? sim::to_us(result->latency()) : 0.0) << " wall_us=" << wall_us << "\n";
  }
  return out;
}

LoopbackClient::LoopbackClient(const std::string& host, std::uint16_t port, int timeout_ms, int max_retries)
    : timeout_ms_(timeout_ms), max_retries_(max_retries) {
  fd_ = open_udp();
  const sockaddr_in addr = make_addr(host, port);
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw SocketError("connect: " + err);
  }
}

LoopbackClient::~LoopbackClient() {
  if (fd_ >= 0) ::close(fd_);
}

void LoopbackClient::send_raw(const Bytes& datagram) {
  if (::send(fd_, datagram.data(), datagram.size(), 0) < 0) throw SocketError(std::string("send: ") + std::strerror(errno));
}

std::optional<Bytes> LoopbackClient::receive_raw(int timeout_ms) {
  if (!wait_readable(fd_, timeout_ms)) return std::nullopt;
  Bytes buf(65536);
  const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
  if (n < 0) return std::nullopt;
  buf.resize(static_cast<std::size_t>(n));
  return buf;
}

LoopbackClient::Reply LoopbackClient::call(std::uint32_t workload_id, std::uint64_t request_id, const Bytes& payload,
                                           bool rdma) {
  std::vector<Bytes> datagrams;
  for (const auto& f : split_message(workload_id, request_id, payload, rdma ? frame_flags::kRdmaWrite : 0))
    datagrams.push_back(encode_frame(f));
  Reassembler response;
  for (int attempt = 1; attempt <= max_retries_ + 1; ++attempt) {
    for (const auto& d : datagrams) send_raw(d);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
    for (;;) {
      const auto left =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) break;
      auto d = receive_raw(static_cast<int>(left));
      if (!d) break;
      LambdaFrame f;
      try {
        f = decode_frame(*d);
      } catch (const FrameError&) {
        continue;
      }
      if (!f.is_response() || f.request_id != request_id) continue;  // stale reply to an earlier call
      response.add(f);
      if (response.complete()) return {response.take()->payload, attempt};
    }
  }
  throw SocketError("no response for request " + std::to_string(request_id) + " after " +
                    std::to_string(max_retries_ + 1) + " attempts");
}

}  // namespace lnic::net
