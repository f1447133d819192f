#include "lnic/ir.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace lnic::ir {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
};

constexpr std::array kOps = {
    OpInfo{Op::kConst, "CONST"},   OpInfo{Op::kMov, "MOV"},       OpInfo{Op::kAdd, "ADD"},
    OpInfo{Op::kSub, "SUB"},       OpInfo{Op::kMul, "MUL"},       OpInfo{Op::kDiv, "DIV"},
    OpInfo{Op::kAnd, "AND"},       OpInfo{Op::kOr, "OR"},         OpInfo{Op::kXor, "XOR"},
    OpInfo{Op::kShl, "SHL"},       OpInfo{Op::kShr, "SHR"},       OpInfo{Op::kMulSh, "MULSH"},
    OpInfo{Op::kDivSh, "DIVSH"},   OpInfo{Op::kJmp, "JMP"},       OpInfo{Op::kJeq, "JEQ"},
    OpInfo{Op::kJne, "JNE"},       OpInfo{Op::kJlt, "JLT"},       OpInfo{Op::kJge, "JGE"},
    OpInfo{Op::kLdh, "LDH"},       OpInfo{Op::kSth, "STH"},       OpInfo{Op::kLdm, "LDM"},
    OpInfo{Op::kStm, "STM"},       OpInfo{Op::kLdb, "LDB"},       OpInfo{Op::kStb, "STB"},
    OpInfo{Op::kMemcpy, "MEMCPY"}, OpInfo{Op::kEmitPkt, "EMITPKT"}, OpInfo{Op::kLdmd, "LDMD"},
    OpInfo{Op::kGuard, "GUARD"},
    OpInfo{Op::kCall, "CALL"},     OpInfo{Op::kRet, "RET"},       OpInfo{Op::kHalt, "HALT"},
    OpInfo{Op::kFConst, "FCONST"}, OpInfo{Op::kFAdd, "FADD"},     OpInfo{Op::kFSub, "FSUB"},
    OpInfo{Op::kFMul, "FMUL"},     OpInfo{Op::kFDiv, "FDIV"},
};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

bool is_ident(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '$'))
    return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
  });
}

std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (!quoted && (line[i] == '#' || line[i] == ';')) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

std::vector<std::string> split_operands(std::string_view s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  MLProgram run() {
    std::istringstream in{std::string(text_)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no_;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      handle(line);
    }
    close_lambda();
    if (mode_ == Mode::kHeader || mode_ == Mode::kMatch) fail("unterminated block");
    prog_.finalize();
    return std::move(prog_);
  }

 private:
  enum class Mode { kTop, kHeader, kLambda, kMatch };

  [[noreturn]] void fail(const std::string& msg) const {
    throw IrError("line " + std::to_string(line_no_) + ": " + msg);
  }

  std::vector<std::string> words(const std::string& line) const {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      if (!quoted && std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  std::int64_t parse_int(std::string_view tok) const {
    std::string t = trim(tok);
    const std::string u = upper(t);
    if (u == "FORWARD") return kForward;
    if (u == "DROP") return kDrop;
    if (u == "TO_HOST") return kToHost;
    bool neg = false;
    std::string_view v = t;
    if (!v.empty() && (v[0] == '-' || v[0] == '+')) {
      neg = v[0] == '-';
      v.remove_prefix(1);
    }
    int base = 10;
    if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
      base = 16;
      v.remove_prefix(2);
    }
    std::int64_t value = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), value, base);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) fail("bad integer '" + t + "'");
    return neg ? -value : value;
  }

  std::int32_t parse_imm32(std::string_view tok) const {
    const auto v = parse_int(tok);
    if (v < INT32_MIN || v > static_cast<std::int64_t>(UINT32_MAX)) fail("immediate out of 32-bit range");
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(v));
  }

  static bool looks_reg(std::string_view t) {
    return t.size() >= 2 && (t[0] == 'r' || t[0] == 'R') &&
           std::all_of(t.begin() + 1, t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  }

  int parse_reg(const std::string& t) const {
    if (!looks_reg(t)) fail("expected register, got '" + t + "'");
    const int r = std::stoi(t.substr(1));
    if (r >= kNumRegisters) fail("register " + t + " out of range");
    return r;
  }

  Operand parse_operand(const std::string& t) const {
    if (looks_reg(t)) return Operand::reg(parse_reg(t));
    return Operand::imm(parse_imm32(t));
  }

  MemRef parse_mem(const std::string& t) const {
    if (t.size() < 3 || t.front() != '[' || t.back() != ']') fail("expected [object+offset], got '" + t + "'");
    const std::string inner = trim(std::string_view(t).substr(1, t.size() - 2));
    MemRef m;
    std::string base = inner;
    const auto plus = inner.find('+');
    if (plus != std::string::npos) {
      base = trim(std::string_view(inner).substr(0, plus));
      m.offset = parse_operand(trim(std::string_view(inner).substr(plus + 1)));
    }
    const auto dot = base.find('.');
    if (dot != std::string::npos) {
      m.object = base.substr(0, dot);
      m.field = base.substr(dot + 1);
      if (!is_ident(m.field)) fail("bad header field '" + base + "'");
    } else {
      m.object = base;
    }
    if (!is_ident(m.object)) fail("bad object name '" + base + "'");
    return m;
  }

  void expect_count(const std::vector<std::string>& ops, std::size_t n, std::string_view mnemonic) const {
    if (ops.size() != n)
      fail(std::string(mnemonic) + " takes " + std::to_string(n) + " operands, got " + std::to_string(ops.size()));
  }

  Instruction parse_instruction(const std::string& line) const {
    const auto sp = line.find_first_of(" \t");
    const std::string mnemonic = upper(line.substr(0, sp));
    const auto op = op_from_name(mnemonic);
    if (!op) fail("unknown instruction '" + mnemonic + "'");
    const auto ops = split_operands(sp == std::string::npos ? std::string_view{} : std::string_view(line).substr(sp));
    Instruction ins;
    ins.op = *op;
    ins.line = line_no_;
    switch (*op) {
      case Op::kConst:
        expect_count(ops, 2, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = Operand::imm(parse_imm32(ops[1]));
        break;
      case Op::kMov:
        expect_count(ops, 2, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = Operand::reg(parse_reg(ops[1]));
        break;
      case Op::kAdd: case Op::kSub: case Op::kMul: case Op::kDiv: case Op::kAnd: case Op::kOr:
      case Op::kXor: case Op::kShl: case Op::kShr:
        expect_count(ops, 3, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = Operand::reg(parse_reg(ops[1]));
        ins.b = parse_operand(ops[2]);
        break;
      case Op::kFAdd: case Op::kFSub: case Op::kFMul: case Op::kFDiv:
        expect_count(ops, 3, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = Operand::reg(parse_reg(ops[1]));
        ins.b = Operand::reg(parse_reg(ops[2]));
        break;
      case Op::kMulSh: case Op::kDivSh:
        expect_count(ops, 4, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = Operand::reg(parse_reg(ops[1]));
        ins.b = Operand::reg(parse_reg(ops[2]));
        ins.dst.offset = Operand::imm(parse_imm32(ops[3]));
        break;
      case Op::kFConst:
        expect_count(ops, 2, mnemonic);
        ins.rd = parse_reg(ops[0]);
        try {
          ins.fimm = std::stod(ops[1]);
        } catch (const std::exception&) {
          fail("bad float '" + ops[1] + "'");
        }
        break;
      case Op::kJmp:
        expect_count(ops, 1, mnemonic);
        ins.target = ops[0];
        break;
      case Op::kJeq: case Op::kJne: case Op::kJlt: case Op::kJge:
        expect_count(ops, 3, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = parse_operand(ops[1]);
        ins.target = ops[2];
        break;
      case Op::kLdh: {
        expect_count(ops, 2, mnemonic);
        ins.rd = parse_reg(ops[0]);
        parse_header_field(ops[1], ins);
        break;
      }
      case Op::kSth:
        expect_count(ops, 2, mnemonic);
        parse_header_field(ops[0], ins);
        ins.a = Operand::reg(parse_reg(ops[1]));
        break;
      case Op::kLdm: case Op::kLdb:
        expect_count(ops, 2, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.dst = parse_mem(ops[1]);
        break;
      case Op::kStm: case Op::kStb:
        expect_count(ops, 2, mnemonic);
        ins.dst = parse_mem(ops[0]);
        ins.a = Operand::reg(parse_reg(ops[1]));
        break;
      case Op::kMemcpy:
        expect_count(ops, 3, mnemonic);
        ins.dst = parse_mem(ops[0]);
        ins.src = parse_mem(ops[1]);
        ins.b = parse_operand(ops[2]);
        break;
      case Op::kEmitPkt:
        expect_count(ops, 4, mnemonic);
        ins.rd = parse_reg(ops[0]);
        ins.a = Operand::imm(parse_imm32(ops[1]));
        ins.dst = parse_mem(ops[2]);
        ins.b = parse_operand(ops[3]);
        break;
      case Op::kGuard:
        expect_count(ops, 2, mnemonic);
        ins.dst = parse_mem(ops[0]);
        ins.b = parse_operand(ops[1]);
        break;
      case Op::kLdmd: {
        expect_count(ops, 2, mnemonic);
        ins.rd = parse_reg(ops[0]);
        const std::string f = upper(ops[1]);
        if (f == "LEN") ins.a = Operand::imm(static_cast<int>(MatchField::kPayloadLen));
        else if (f == "SRC") ins.a = Operand::imm(static_cast<int>(MatchField::kSource));
        else if (f == "TIME") ins.a = Operand::imm(static_cast<int>(MatchField::kArrival));
        else fail("unknown match-data field '" + ops[1] + "'");
        break;
      }
      case Op::kCall:
        expect_count(ops, 1, mnemonic);
        ins.target = ops[0];
        break;
      case Op::kRet:
        expect_count(ops, 0, mnemonic);
        break;
      case Op::kHalt:
        expect_count(ops, 1, mnemonic);
        ins.a = parse_operand(ops[0]);
        break;
    }
    return ins;
  }

  void parse_header_field(const std::string& t, Instruction& ins) const {
    const auto dot = t.find('.');
    if (dot == std::string::npos) fail("expected header.field, got '" + t + "'");
    ins.header = t.substr(0, dot);
    ins.field = t.substr(dot + 1);
    if (!is_ident(ins.header) || !is_ident(ins.field)) fail("bad header reference '" + t + "'");
  }

  Bytes parse_init(const std::string& spec, std::uint32_t size) const {
    Bytes out;
    if (spec.rfind("fill=", 0) == 0) {
      const auto v = parse_int(spec.substr(5));
      out.assign(size, static_cast<std::uint8_t>(v));
    } else if (spec.rfind("hex=", 0) == 0) {
      const std::string h = spec.substr(4);
      if (h.size() % 2) fail("odd-length hex initializer");
      for (std::size_t i = 0; i < h.size(); i += 2) {
        unsigned v = 0;
        auto [p, ec] = std::from_chars(h.data() + i, h.data() + i + 2, v, 16);
        if (ec != std::errc() || p != h.data() + i + 2) fail("bad hex initializer");
        out.push_back(static_cast<std::uint8_t>(v));
      }
    } else if (spec.rfind("str=", 0) == 0) {
      std::string s = spec.substr(4);
      if (s.size() < 2 || s.front() != '"' || s.back() != '"') fail("string initializer must be quoted");
      s = s.substr(1, s.size() - 2);
      out.assign(s.begin(), s.end());
    } else if (spec.rfind("pattern=", 0) == 0) {
      // pattern=<seed>: deterministic printable filler
      auto x = static_cast<std::uint32_t>(parse_int(spec.substr(8)));
      for (std::uint32_t i = 0; i < size; ++i) {
        x = x * 1664525u + 1013904223u;
        out.push_back(static_cast<std::uint8_t>('a' + (x >> 24) % 26));
      }
    } else {
      fail("unknown initializer '" + spec + "'");
    }
    if (out.size() > size) fail("initializer longer than object");
    return out;
  }

  void handle(const std::string& line) {
    if (line[0] == '.') {
      directive(words(line));
      return;
    }
    switch (mode_) {
      case Mode::kHeader: {
        const auto w = words(line);
        if (w.size() != 2 || !is_ident(w[0])) fail("header field expects 'name width'");
        const auto width = parse_int(w[1]);
        if (width <= 0 || width > 0xFFFF) fail("bad field width");
        prog_.headers.back().fields.push_back({w[0], static_cast<std::uint32_t>(width)});
        break;
      }
      case Mode::kMatch: {
        match_rule(words(line));
        break;
      }
      case Mode::kLambda: {
        if (!fn_) fail("instruction outside .func");
        std::string rest = line;
        const auto colon = rest.find(':');
        if (colon != std::string::npos && is_ident(trim(std::string_view(rest).substr(0, colon)))) {
          const std::string label = trim(std::string_view(rest).substr(0, colon));
          if (fn_->label_index(label)) fail("duplicate label '" + label + "'");
          fn_->labels.emplace_back(label, fn_->body.size());
          rest = trim(std::string_view(rest).substr(colon + 1));
          if (rest.empty()) return;
        }
        fn_->body.push_back(parse_instruction(rest));
        break;
      }
      case Mode::kTop:
        fail("unexpected text outside any block");
    }
  }

  void match_rule(const std::vector<std::string>& w) {
    MatchRule rule;
    std::size_t i = 0;
    if (w.size() >= 3 && w[1] == "->") {
      const auto id = parse_int(w[0]);
      if (id < 0 || id > static_cast<std::int64_t>(UINT32_MAX)) fail("workload id out of range");
      rule.workload_id = static_cast<std::uint32_t>(id);
      i = 2;
    }
    if (i >= w.size() || !is_ident(w[i])) fail("match rule expects '[id ->] lambda [port=N]'");
    rule.lambda = w[i++];
    for (; i < w.size(); ++i) {
      if (w[i].rfind("port=", 0) == 0) rule.port = static_cast<std::uint32_t>(parse_int(w[i].substr(5)));
      else fail("unknown match rule attribute '" + w[i] + "'");
    }
    prog_.match.rules.push_back(rule);
  }

  void close_lambda() {
    if (mode_ != Mode::kLambda) return;
    auto& l = prog_.lambdas.back();
    if (l.entry.empty()) fail("lambda " + l.name + " has no .entry function");
    mode_ = Mode::kTop;
    fn_ = nullptr;
  }

  void directive(const std::vector<std::string>& w) {
    const std::string& d = w[0];
    if (d == ".header") {
      close_lambda();
      if (w.size() != 2 || !is_ident(w[1])) fail(".header expects a name");
      prog_.headers.push_back({w[1], {}});
      mode_ = Mode::kHeader;
    } else if (d == ".end") {
      if (mode_ == Mode::kLambda) close_lambda();
      else if (mode_ == Mode::kHeader || mode_ == Mode::kMatch) mode_ = Mode::kTop;
      else fail(".end without block");
    } else if (d == ".lambda") {
      close_lambda();
      if (w.size() != 2 || !is_ident(w[1])) fail(".lambda expects a name");
      prog_.lambdas.push_back({});
      prog_.lambdas.back().name = w[1];
      mode_ = Mode::kLambda;
    } else if (d == ".global") {
      if (mode_ != Mode::kLambda) fail(".global outside .lambda");
      if (w.size() < 3 || !is_ident(w[1])) fail(".global expects 'name size [pragma] [init]'");
      GlobalObject g;
      g.name = w[1];
      const auto size = parse_int(w[2]);
      if (size <= 0 || size > static_cast<std::int64_t>(INT32_MAX)) fail("global size must be positive");
      g.size = static_cast<std::uint32_t>(size);
      std::size_t i = 3;
      if (i < w.size() && w[i].find('=') == std::string::npos) {
        const std::string p = w[i++];
        if (p == "hot") g.pragma = Pragma::kHot;
        else if (p == "cold") g.pragma = Pragma::kCold;
        else if (p == "readonly") g.pragma = Pragma::kReadonly;
        else if (p == "none") g.pragma = Pragma::kNone;
        else fail("unknown pragma '" + p + "'");
      }
      if (i < w.size()) g.init = parse_init(w[i++], g.size);
      if (i < w.size()) fail("trailing tokens after .global");
      prog_.lambdas.back().globals.push_back(std::move(g));
    } else if (d == ".func") {
      if (mode_ != Mode::kLambda) fail(".func outside .lambda");
      if (w.size() != 2 || !is_ident(w[1])) fail(".func expects a name");
      auto& l = prog_.lambdas.back();
      if (l.find_function(w[1])) fail("duplicate function '" + w[1] + "'");
      l.functions.push_back({w[1], {}, {}});
      fn_ = &l.functions.back();
    } else if (d == ".entry") {
      if (!fn_) fail(".entry outside .func");
      auto& l = prog_.lambdas.back();
      if (!l.entry.empty()) fail("lambda " + l.name + " has two entry functions");
      l.entry = fn_->name;
    } else if (d == ".match") {
      close_lambda();
      mode_ = Mode::kMatch;
    } else {
      fail("unknown directive '" + d + "'");
    }
  }

  std::string_view text_;
  MLProgram prog_;
  Mode mode_ = Mode::kTop;
  Function* fn_ = nullptr;
  int line_no_ = 0;
};

std::string operand_text(const Operand& o) {
  if (o.is_reg()) return "r" + std::to_string(o.value);
  return std::to_string(o.value);
}

std::string mem_text(const MemRef& m) {
  std::string s = "[" + m.object;
  if (m.is_header()) s += "." + m.field;
  s += "+" + operand_text(m.offset) + "]";
  return s;
}

}  // namespace

std::string_view op_name(Op op) {
  for (const auto& i : kOps)
    if (i.op == op) return i.name;
  return "?";
}

std::optional<Op> op_from_name(std::string_view name) {
  for (const auto& i : kOps)
    if (i.name == name) return i.op;
  return std::nullopt;
}

bool is_float_op(Op op) {
  return op == Op::kFConst || op == Op::kFAdd || op == Op::kFSub || op == Op::kFMul || op == Op::kFDiv;
}

bool is_branch(Op op) {
  return op == Op::kJmp || op == Op::kJeq || op == Op::kJne || op == Op::kJlt || op == Op::kJge;
}

bool is_binary_alu(Op op) {
  switch (op) {
    case Op::kAdd: case Op::kSub: case Op::kMul: case Op::kDiv: case Op::kAnd: case Op::kOr:
    case Op::kXor: case Op::kShl: case Op::kShr:
      return true;
    default:
      return false;
  }
}

std::string_view pragma_name(Pragma p) {
  switch (p) {
    case Pragma::kHot: return "hot";
    case Pragma::kCold: return "cold";
    case Pragma::kReadonly: return "readonly";
    case Pragma::kNone: break;
  }
  return "none";
}

std::optional<std::size_t> Function::label_index(const std::string& label) const {
  for (const auto& [name, idx] : labels)
    if (name == label) return idx;
  return std::nullopt;
}

int Function::register_count() const {
  int n = 0;
  auto see = [&n](int r) { n = std::max(n, r + 1); };
  auto see_op = [&](const Operand& o) {
    if (o.is_reg()) see(o.value);
  };
  for (const auto& ins : body) {
    switch (ins.op) {
      case Op::kJmp: case Op::kCall: case Op::kRet: case Op::kMemcpy: case Op::kGuard:
        break;
      case Op::kSth: case Op::kStm: case Op::kStb: case Op::kHalt:
        break;
      default:
        see(ins.rd);
    }
    see_op(ins.a);
    see_op(ins.b);
    see_op(ins.dst.offset);
    see_op(ins.src.offset);
  }
  return n;
}

const Function* LambdaProgram::find_function(const std::string& fn) const {
  for (const auto& f : functions)
    if (f.name == fn) return &f;
  return nullptr;
}

Function* LambdaProgram::find_function(const std::string& fn) {
  for (auto& f : functions)
    if (f.name == fn) return &f;
  return nullptr;
}

const GlobalObject* LambdaProgram::find_global(const std::string& obj) const {
  for (const auto& g : globals)
    if (g.name == obj) return &g;
  return nullptr;
}

std::optional<std::uint32_t> LambdaProgram::header_offset(const std::string& header) const {
  std::uint32_t off = 0;
  for (const auto& h : headers) {
    if (h.name == header) return off;
    off += h.total_width();
  }
  return std::nullopt;
}

const HeaderSchema* LambdaProgram::find_header(const std::string& header) const {
  for (const auto& h : headers)
    if (h.name == header) return &h;
  return nullptr;
}

std::size_t LambdaProgram::instruction_count() const {
  std::size_t n = 0;
  for (const auto& f : functions) n += f.body.size();
  return n;
}

bool LambdaProgram::has_float_ops() const {
  for (const auto& f : functions)
    for (const auto& ins : f.body)
      if (is_float_op(ins.op)) return true;
  return false;
}

const LambdaProgram* MLProgram::find_lambda(const std::string& name) const {
  for (const auto& l : lambdas)
    if (l.name == name) return &l;
  return nullptr;
}

const HeaderSchema* MLProgram::find_header(const std::string& name) const {
  for (const auto& h : headers)
    if (h.name == name) return &h;
  return nullptr;
}

std::vector<HeaderSchema> referenced_headers(const LambdaProgram& lambda,
                                             const std::vector<HeaderSchema>& schemas) {
  std::set<std::string> used;
  for (const auto& f : lambda.functions) {
    for (const auto& ins : f.body) {
      if (ins.op == Op::kLdh || ins.op == Op::kSth) used.insert(ins.header);
      if (ins.src.is_header()) used.insert(ins.src.object);
      if (ins.dst.is_header()) used.insert(ins.dst.object);
    }
  }
  std::vector<HeaderSchema> out;
  for (const auto& s : schemas)
    if (used.contains(s.name)) out.push_back(s);
  return out;
}

void MLProgram::finalize() {
  std::set<std::uint32_t> taken;
  for (const auto& r : match.rules)
    if (r.workload_id) taken.insert(*r.workload_id);
  std::uint32_t next = 1;
  for (auto& r : match.rules) {
    if (r.workload_id) continue;
    while (taken.contains(next)) ++next;
    r.workload_id = next;
    taken.insert(next);
  }
  for (auto& l : lambdas) l.headers = referenced_headers(l, headers);
}

MLProgram parse_program(std::string_view text) { return Parser(text).run(); }

MLProgram load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IrError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_program(ss.str());
}

std::string to_text(const Instruction& ins) {
  std::string s(op_name(ins.op));
  auto r = [](int reg) { return "r" + std::to_string(reg); };
  switch (ins.op) {
    case Op::kConst: case Op::kMov:
      return s + " " + r(ins.rd) + ", " + operand_text(ins.a);
    case Op::kAdd: case Op::kSub: case Op::kMul: case Op::kDiv: case Op::kAnd: case Op::kOr:
    case Op::kXor: case Op::kShl: case Op::kShr: case Op::kFAdd: case Op::kFSub: case Op::kFMul:
    case Op::kFDiv:
      return s + " " + r(ins.rd) + ", " + operand_text(ins.a) + ", " + operand_text(ins.b);
    case Op::kMulSh: case Op::kDivSh:
      return s + " " + r(ins.rd) + ", " + operand_text(ins.a) + ", " + operand_text(ins.b) + ", " +
             operand_text(ins.dst.offset);
    case Op::kFConst: {
      std::ostringstream os;
      os << std::setprecision(17) << ins.fimm;
      return s + " " + r(ins.rd) + ", " + os.str();
    }
    case Op::kJmp: case Op::kCall:
      return s + " " + ins.target;
    case Op::kJeq: case Op::kJne: case Op::kJlt: case Op::kJge:
      return s + " " + r(ins.rd) + ", " + operand_text(ins.a) + ", " + ins.target;
    case Op::kLdh:
      return s + " " + r(ins.rd) + ", " + ins.header + "." + ins.field;
    case Op::kSth:
      return s + " " + ins.header + "." + ins.field + ", " + operand_text(ins.a);
    case Op::kLdm: case Op::kLdb:
      return s + " " + r(ins.rd) + ", " + mem_text(ins.dst);
    case Op::kStm: case Op::kStb:
      return s + " " + mem_text(ins.dst) + ", " + operand_text(ins.a);
    case Op::kMemcpy:
      return s + " " + mem_text(ins.dst) + ", " + mem_text(ins.src) + ", " + operand_text(ins.b);
    case Op::kEmitPkt:
      return s + " " + r(ins.rd) + ", " + operand_text(ins.a) + ", " + mem_text(ins.dst) + ", " +
             operand_text(ins.b);
    case Op::kGuard:
      return s + " " + mem_text(ins.dst) + ", " + operand_text(ins.b);
    case Op::kLdmd: {
      static constexpr std::array<const char*, 3> names = {"len", "src", "time"};
      return s + " " + r(ins.rd) + ", " + names.at(static_cast<std::size_t>(ins.a.value));
    }
    case Op::kRet:
      return s;
    case Op::kHalt:
      return s + " " + operand_text(ins.a);
  }
  return s;
}

std::string to_text(const MLProgram& prog) {
  std::ostringstream os;
  for (const auto& h : prog.headers) {
    os << ".header " << h.name << "\n";
    for (const auto& f : h.fields) os << "  " << f.name << " " << f.width << "\n";
    os << ".end\n\n";
  }
  for (const auto& l : prog.lambdas) {
    os << ".lambda " << l.name << "\n";
    for (const auto& g : l.globals) {
      os << ".global " << g.name << " " << g.size << " " << pragma_name(g.pragma);
      if (!g.init.empty()) {
        os << " hex=";
        for (auto b : g.init) os << std::hex << std::setw(2) << std::setfill('0') << int(b);
        os << std::dec << std::setfill(' ');
      }
      os << "\n";
    }
    for (const auto& f : l.functions) {
      os << ".func " << f.name << "\n";
      if (f.name == l.entry) os << ".entry\n";
      for (std::size_t i = 0; i <= f.body.size(); ++i) {
        for (const auto& [label, idx] : f.labels)
          if (idx == i) os << label << ":\n";
        if (i < f.body.size()) os << "  " << to_text(f.body[i]) << "\n";
      }
    }
    os << ".end\n\n";
  }
  os << ".match\n";
  for (const auto& r : prog.match.rules) {
    os << "  ";
    if (r.workload_id) os << *r.workload_id << " -> ";
    os << r.lambda;
    if (r.port) os << " port=" << *r.port;
    os << "\n";
  }
  os << ".end\n";
  return os.str();
}

}  // namespace lnic::ir
