#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "lnic/testbed.hpp"

namespace lnic::net {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoopbackOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  int workers = 4;
  cp::Backend backend = cp::Backend::kNic;
  std::ostream* log = nullptr;  // one line per answered request
};

/// UDP front end of the gateway. Each datagram is one lambda frame; complete
/// requests are routed through the testbed and answered with response frames
/// carrying the client's request id. The testbed is driven under one mutex;
/// socket I/O happens outside it.
class LoopbackServer {
 public:
  LoopbackServer(bench::Testbed& testbed, LoopbackOptions options = {});
  ~LoopbackServer();
  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  std::uint64_t malformed() const { return malformed_; }
  std::uint64_t served() const { return served_; }
  std::uint64_t replays() const { return replays_; }

 private:
  struct Client {
    Reassembler frames;
  };
  void worker();
  /// Returns the encoded response datagrams, empty while the request is incomplete.
  std::vector<Bytes> handle(const std::string& peer, const LambdaFrame& frame);

  bench::Testbed& tb_;
  LoopbackOptions options_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::vector<std::thread> threads_;

  std::mutex mu_;
  std::map<std::pair<std::string, std::uint64_t>, Client> partial_;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<Bytes>> answered_;  // replayed on retransmit
  std::atomic<std::uint64_t> malformed_{0}, served_{0}, replays_{0};
};

/// Blocking UDP client with sender-side retransmission.
class LoopbackClient {
 public:
  LoopbackClient(const std::string& host, std::uint16_t port, int timeout_ms = 50, int max_retries = 5);
  ~LoopbackClient();
  LoopbackClient(const LoopbackClient&) = delete;
  LoopbackClient& operator=(const LoopbackClient&) = delete;

  struct Reply {
    Bytes payload;
    int attempts = 0;
  };
  /// Sends the request frames, resending all of them on each timeout.
  /// Throws SocketError once retries are exhausted.
  Reply call(std::uint32_t workload_id, std::uint64_t request_id, const Bytes& payload, bool rdma = false);

  void send_raw(const Bytes& datagram);
  /// Waits up to `timeout_ms` for one datagram.
  std::optional<Bytes> receive_raw(int timeout_ms);

 private:
  int fd_ = -1;
  int timeout_ms_;
  int max_retries_;
};

/// Parses "host:port".
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

}  // namespace lnic::net
