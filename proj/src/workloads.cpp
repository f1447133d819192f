#include "lnic/workloads.hpp"

#include <sstream>

namespace lnic::bench {

std::string header_schemas() {
  return R"(.header serverHdr
  method 1
  version 1
  page 2
.end
.header kvHdr
  op 1
  key_len 2
  val_len 2
.end
)";
}

std::string webserver_lambda(const std::string& name, std::uint32_t content_size) {
  if (content_size == 0 || content_size > ir::kRespCapacity) throw WorkloadError("web content size out of range");
  std::ostringstream os;
  os << ".lambda " << name << "\n"
     << ".global content " << content_size << " hot pattern=" << content_size << "\n"
     << ".func main\n"
     << ".entry\n"
     << "  LDH r1, serverHdr.method\n"
     << "  MEMCPY [resp+0], [content+0], " << content_size << "\n"
     << "  HALT 16\n"
     << ".end\n";
  return os.str();
}

std::string kvclient_lambda(const std::string& name, bool with_dead_code) {
  std::ostringstream os;
  os << ".lambda " << name << "\n"
     << ".global hits 16\n"
     // Builds and sends the store query, copies the store reply to the response.
     << R"(.func emit_query
  LDMD r1, LEN
  JLT r1, 5, short
  LDB r5, [payload+1]
  SHL r5, r5, 8
  LDB r6, [payload+2]
  OR r5, r5, r6
  ADD r7, r5, 5
  JLT r1, r7, short
  EMITPKT r2, 7, [payload+0], r1
  MEMCPY [resp+0], [reply+0], r2
  CONST r0, 16
  RET
short:
  CONST r0, 17
  RET
.func main
.entry
  LDH r3, kvHdr.op
  JGE r3, 2, reject
  CALL emit_query
  LDM r4, [hits+0]
  ADD r4, r4, 1
  STM [hits+0], r4
  HALT r0
reject:
  HALT 17
)";
  if (with_dead_code) {
    // leftover debug helper, never called
    os << R"(.func dump_hits
  LDM r8, [hits+0]
  LDM r9, [hits+4]
  ADD r8, r8, r9
  STM [hits+8], r8
  LDM r9, [hits+12]
  ADD r9, r9, 1
  STM [hits+12], r9
  RET
)";
  }
  os << ".end\n";
  return os.str();
}

std::string imagexform_lambda(const std::string& name, std::uint32_t width, std::uint32_t height) {
  const std::uint64_t pixels = static_cast<std::uint64_t>(width) * height;
  if (width == 0 || height == 0) throw WorkloadError("image dimensions must be positive");
  if (pixels > ir::kRespCapacity) throw WorkloadError("image output exceeds the response buffer");
  std::ostringstream os;
  os << ".lambda " << name << "\n"
     << ".global img " << pixels * 4 << "\n"
     << R"(.func main
.entry
  LDMD r1, LEN
  MEMCPY [img+0], [payload+0], r1
  CONST r2, 0
  CONST r3, 0
loop:
  JGE r2, r1, done
  LDM r4, [img+r2]
  SHR r5, r4, 24
  MUL r5, r5, 77
  SHR r6, r4, 16
  AND r6, r6, 255
  MUL r6, r6, 150
  ADD r5, r5, r6
  SHR r6, r4, 8
  AND r6, r6, 255
  MUL r6, r6, 29
  ADD r5, r5, r6
  SHR r5, r5, 8
  STB [resp+r3], r5
  ADD r2, r2, 4
  ADD r3, r3, 1
  JMP loop
done:
  HALT 16
.end
)";
  return os.str();
}

namespace {

ir::MLProgram parse(const std::string& text) {
  auto p = ir::parse_program(text);
  p.finalize();
  return p;
}

}  // namespace

ir::MLProgram build_workload(const std::string& kind, const WorkloadParams& params) {
  std::string body;
  if (kind == "webserver") body = webserver_lambda("web", params.content_size);
  else if (kind == "kvclient") body = kvclient_lambda("kv");
  else if (kind == "imagexform") body = imagexform_lambda("image", params.image_width, params.image_height);
  else throw WorkloadError("unknown workload '" + kind + "'");
  const std::string lambda = kind == "webserver" ? "web" : kind == "kvclient" ? "kv" : "image";
  return parse(header_schemas() + body + ".match\n  1 -> " + lambda + " port=1\n.end\n");
}

ir::MLProgram build_multi(const WorkloadParams& params) {
  return parse(header_schemas() + webserver_lambda("web", params.content_size) + kvclient_lambda("kv") +
               imagexform_lambda("image", params.image_width, params.image_height) +
               ".match\n  1 -> web port=1\n  2 -> kv port=1\n  3 -> image port=1\n.end\n");
}

std::string suite_text(const WorkloadParams& params) {
  return header_schemas() + kvclient_lambda("kv_a") + kvclient_lambda("kv_b", true) +
         webserver_lambda("web", params.content_size) +
         imagexform_lambda("image", params.image_width, params.image_height) +
         ".match\n  1 -> kv_a port=1\n  2 -> kv_b port=1\n  3 -> web port=2\n  4 -> image port=3\n.end\n";
}

ir::MLProgram build_suite(const WorkloadParams& params) { return parse(suite_text(params)); }

Bytes grayscale_reference(std::span<const std::uint8_t> rgba) {
  Bytes out;
  out.reserve(rgba.size() / 4);
  for (std::size_t i = 0; i + 3 < rgba.size(); i += 4) {
    const unsigned r = rgba[i], g = rgba[i + 1], b = rgba[i + 2];
    out.push_back(static_cast<std::uint8_t>((77 * r + 150 * g + 29 * b) >> 8));
  }
  return out;
}

Bytes kv_encode(KvOp op, std::span<const std::uint8_t> key, std::span<const std::uint8_t> value) {
  if (key.size() > 0xFFFF || value.size() > 0xFFFF) throw WorkloadError("kv key or value too long");
  Bytes out(5 + key.size() + value.size());
  out[0] = static_cast<std::uint8_t>(op);
  store_be(out, 1, 2, key.size());
  store_be(out, 3, 2, value.size());
  std::copy(key.begin(), key.end(), out.begin() + 5);
  std::copy(value.begin(), value.end(), out.begin() + 5 + static_cast<std::ptrdiff_t>(key.size()));
  return out;
}

KvMessage kv_decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw WorkloadError("kv message shorter than its header");
  KvMessage m;
  if (bytes[0] > 1) throw WorkloadError("unknown kv op");
  m.op = static_cast<KvOp>(bytes[0]);
  const auto klen = load_be(bytes, 1, 2);
  const auto vlen = load_be(bytes, 3, 2);
  if (bytes.size() < 5 + klen + vlen) throw WorkloadError("kv message truncated");
  m.key.assign(bytes.begin() + 5, bytes.begin() + 5 + static_cast<std::ptrdiff_t>(klen));
  m.value.assign(bytes.begin() + 5 + static_cast<std::ptrdiff_t>(klen),
                 bytes.begin() + 5 + static_cast<std::ptrdiff_t>(klen + vlen));
  return m;
}

Bytes KvStore::handle(std::span<const std::uint8_t> request) {
  ++requests_;
  KvMessage m;
  try {
    m = kv_decode(request);
  } catch (const WorkloadError&) {
    return {};
  }
  if (m.op == KvOp::kSet) {
    data_[m.key] = m.value;
    return kv_encode(KvOp::kSet, m.key, m.value);
  }
  const auto it = data_.find(m.key);
  return kv_encode(KvOp::kGet, m.key, it == data_.end() ? Bytes{} : it->second);
}

}  // namespace lnic::bench
