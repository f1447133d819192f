#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "lnic/ir.hpp"
#include "lnic/sim.hpp"

namespace lnic::bench {

class WorkloadError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::uint32_t kKvEndpoint = 7;

struct WorkloadParams {
  std::uint32_t content_size = 1024;  // web server
  std::uint32_t key_size = 16;        // kv client
  std::uint32_t value_size = 64;
  double get_ratio = 0.9;             // GET:SET mix
  std::uint32_t image_width = 64;     // image transformer
  std::uint32_t image_height = 64;
};

/// Textual IR for one lambda (plus the headers it needs), no match stage.
std::string webserver_lambda(const std::string& name, std::uint32_t content_size);
std::string kvclient_lambda(const std::string& name, bool with_dead_code = false);
std::string imagexform_lambda(const std::string& name, std::uint32_t width, std::uint32_t height);
std::string header_schemas();

/// Complete program for one workload kind: "webserver", "kvclient" or "imagexform".
ir::MLProgram build_workload(const std::string& kind, const WorkloadParams& params = {});
/// Three distinct lambdas (web, kv, image) for the round-robin contention drive.
ir::MLProgram build_multi(const WorkloadParams& params = {});
/// The four-lambda optimizer suite: two KV clients sharing query logic,
/// a web server and an image transformer.
ir::MLProgram build_suite(const WorkloadParams& params = {});
std::string suite_text(const WorkloadParams& params = {});

/// Independent scalar reference for the grayscale transform.
Bytes grayscale_reference(std::span<const std::uint8_t> rgba);

// KV wire format: op(1: 0=GET, 1=SET), key_len(2), val_len(2), key, value.
enum class KvOp : std::uint8_t { kGet = 0, kSet = 1 };
Bytes kv_encode(KvOp op, std::span<const std::uint8_t> key, std::span<const std::uint8_t> value);
struct KvMessage {
  KvOp op = KvOp::kGet;
  Bytes key, value;
};
/// Throws WorkloadError on a truncated or malformed message.
KvMessage kv_decode(std::span<const std::uint8_t> bytes);

/// In-memory key-value store answering the KV wire format.
class KvStore {
 public:
  explicit KvStore(sim::Time service_latency = 20 * sim::kUs) : latency_(service_latency) {}
  /// GET returns the stored value (empty if absent); SET stores and echoes
  /// the value. Malformed requests get an empty reply.
  Bytes handle(std::span<const std::uint8_t> request);
  sim::Time service_latency() const { return latency_; }
  std::size_t size() const { return data_.size(); }
  std::uint64_t requests() const { return requests_; }

 private:
  sim::Time latency_;
  std::map<Bytes, Bytes> data_;
  std::uint64_t requests_ = 0;
};

}  // namespace lnic::bench
