#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lnic/frame.hpp"

namespace lnic::ir {

inline constexpr int kNumRegisters = 32;

// Lambda return codes.
inline constexpr std::int32_t kForward = 0x10;
inline constexpr std::int32_t kDrop = 0x11;
inline constexpr std::int32_t kToHost = 0x12;
// Trap codes reported in place of a return code.
inline constexpr std::int32_t kTrapBounds = 0xE1;
inline constexpr std::int32_t kTrapDivZero = 0xE2;
inline constexpr std::int32_t kTrapBudget = 0xE3;

inline bool is_trap(std::int32_t rc) { return rc == kTrapBounds || rc == kTrapDivZero || rc == kTrapBudget; }

// Pseudo-objects every lambda can address besides its globals.
inline constexpr std::string_view kPayload = "payload";  // assembled request payload, read-only
inline constexpr std::string_view kResp = "resp";        // response buffer
inline constexpr std::string_view kReply = "reply";      // last EMITPKT reply, read-only
inline constexpr std::uint32_t kRespCapacity = 65536;
inline constexpr std::uint32_t kReplyCapacity = 4096;

inline bool is_pseudo_object(std::string_view name) {
  return name == kPayload || name == kResp || name == kReply;
}

class IrError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Op : std::uint8_t {
  kConst, kMov,
  kAdd, kSub, kMul, kDiv, kAnd, kOr, kXor, kShl, kShr,
  kMulSh, kDivSh,  // (a*b)>>k and (a<<k)/b with a 64-bit intermediate
  kJmp, kJeq, kJne, kJlt, kJge,
  kLdh, kSth,
  kLdm, kStm, kLdb, kStb,
  kMemcpy, kEmitPkt, kLdmd,
  kGuard,  // bounds check of [object+offset, +extent); traps when outside
  kCall, kRet, kHalt,
  kFConst, kFAdd, kFSub, kFMul, kFDiv,
};

std::string_view op_name(Op op);
std::optional<Op> op_from_name(std::string_view name);
bool is_float_op(Op op);
bool is_branch(Op op);
bool is_binary_alu(Op op);

struct Operand {
  enum class Kind : std::uint8_t { kNone, kReg, kImm };
  Kind kind = Kind::kNone;
  std::int32_t value = 0;

  static Operand reg(int r) { return {Kind::kReg, r}; }
  static Operand imm(std::int32_t v) { return {Kind::kImm, v}; }
  bool is_reg() const { return kind == Kind::kReg; }
  bool is_imm() const { return kind == Kind::kImm; }
  bool operator==(const Operand&) const = default;
};

/// `[object + offset]`, or a header field used as a byte source
/// (`hdr.field + offset`) when `field` is non-empty.
struct MemRef {
  std::string object;
  std::string field;
  Operand offset = Operand::imm(0);

  bool is_header() const { return !field.empty(); }
  bool operator==(const MemRef&) const = default;
};

enum class MatchField : std::uint8_t { kPayloadLen = 0, kSource = 1, kArrival = 2 };

struct Instruction {
  Op op = Op::kHalt;
  int rd = 0;     // destination (or first compared register for branches)
  Operand a;      // first source / halt code / endpoint for EMITPKT
  Operand b;      // second source / shift amount / memcpy length
  std::string target;  // branch label or callee
  MemRef dst;     // STM/STB/MEMCPY destination, LDM/LDB/EMITPKT source
  MemRef src;     // MEMCPY source
  std::string header, field;  // LDH/STH
  double fimm = 0.0;
  int line = 0;

  bool operator==(const Instruction& o) const {
    return op == o.op && rd == o.rd && a == o.a && b == o.b && target == o.target && dst == o.dst &&
           src == o.src && header == o.header && field == o.field && fimm == o.fimm;
  }
};

struct Function {
  std::string name;
  std::vector<Instruction> body;
  /// label -> instruction index
  std::vector<std::pair<std::string, std::size_t>> labels;

  std::optional<std::size_t> label_index(const std::string& label) const;
  /// One past the highest register index referenced.
  int register_count() const;
  bool operator==(const Function&) const = default;
};

enum class Pragma : std::uint8_t { kNone, kHot, kCold, kReadonly };
std::string_view pragma_name(Pragma p);

struct GlobalObject {
  std::string name;
  std::uint32_t size = 0;
  Pragma pragma = Pragma::kNone;
  Bytes init;  // zero-extended to size

  bool operator==(const GlobalObject&) const = default;
};

struct LambdaProgram {
  std::string name;
  std::string entry;
  std::vector<Function> functions;
  std::vector<GlobalObject> globals;
  /// Header schemas this lambda touches, in payload layout order.
  std::vector<HeaderSchema> headers;

  const Function* find_function(const std::string& fn) const;
  Function* find_function(const std::string& fn);
  const GlobalObject* find_global(const std::string& obj) const;
  std::optional<std::uint32_t> header_offset(const std::string& header) const;
  const HeaderSchema* find_header(const std::string& header) const;
  std::size_t instruction_count() const;
  bool has_float_ops() const;
  std::vector<std::string> used_header_names() const { 
    std::vector<std::string> out;
    for (const auto& h : headers) out.push_back(h.name);
    return out;
  }
  bool operator==(const LambdaProgram&) const = default;
};

struct MatchRule {
  std::optional<std::uint32_t> workload_id;
  std::string lambda;
  /// Egress port from the lambda's route table; nullopt when the lambda has
  /// no route entry for this id.
  std::optional<std::uint32_t> port;
  bool operator==(const MatchRule&) const = default;
};

struct MatchStage {
  std::vector<MatchRule> rules;
  bool operator==(const MatchStage&) const = default;
};

struct MLProgram {
  std::vector<HeaderSchema> headers;
  std::vector<LambdaProgram> lambdas;
  MatchStage match;

  const LambdaProgram* find_lambda(const std::string& name) const;
  const HeaderSchema* find_header(const std::string& name) const;
  /// Assigns ids to rules without one (smallest unused, starting at 1) and
  /// recomputes each lambda's header layout.
  void finalize();
  bool operator==(const MLProgram&) const = default;
};

/// Schemas referenced by any LDH/STH/MEMCPY-from-header in `lambda`, in the
/// order they are declared in `schemas`.
std::vector<HeaderSchema> referenced_headers(const LambdaProgram& lambda,
                                             const std::vector<HeaderSchema>& schemas);

// Textual IR.
MLProgram parse_program(std::string_view text);
MLProgram load_program(const std::string& path);
std::string to_text(const MLProgram& prog);
std::string to_text(const Instruction& ins);

}  // namespace lnic::ir
