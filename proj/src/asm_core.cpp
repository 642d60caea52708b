// SPDX-License-Identifier: Apache-2.0

#include "bingo/asm_core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace bingo {

namespace {

const std::unordered_set<std::string>& register_table() {
  static const std::unordered_set<std::string> regs = [] {
    std::unordered_set<std::string> t = {
        "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "rip",
        "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp", "eip",
        "ax",  "bx",  "cx",  "dx",  "si",  "di",  "bp",  "sp",
        "al",  "bl",  "cl",  "dl",  "ah",  "bh",  "ch",  "dh",
        "sil", "dil", "bpl", "spl",
    };
    for (int i = 8; i <= 15; ++i) {
      const std::string n = "r" + std::to_string(i);
      t.insert(n);
      t.insert(n + "d");
      t.insert(n + "w");
      t.insert(n + "b");
    }
    return t;
  }();
  return regs;
}

const std::unordered_set<std::string> kReservedWords = {"byte", "word", "dword",
                                                        "qword", "ptr"};

// Terminators end a block; call does not.
const std::unordered_set<std::string> kTerminators = {
    "jmp", "je", "jne", "jle", "jl", "jge", "jg", "jz", "jnz", "ret"};

bool is_operator_char(char c) {
  return c == '+' || c == '-' || c == '*' || c == '[' || c == ']';
}

bool is_constant_text(const std::string& s) {
  if (s.size() > 2 && s[0] == '0' && s[1] == 'x') {
    return std::all_of(s.begin() + 2, s.end(), [](char c) {
      return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
  }
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return c >= '0' && c <= '9';
  });
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Branch and call operands are label/symbol references, not data operands;
// they contribute no operand tokens.
bool takes_label_operand(const std::string& mnemonic) {
  return mnemonic == "call" || kTerminators.count(mnemonic) > 0;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_mix_str(std::uint64_t& h, const std::string& s) {
  fnv_mix(h, s.data(), s.size());
  unsigned char sep = 0xff;
  fnv_mix(h, &sep, 1);
}

}  // namespace

bool is_branch_mnemonic(const std::string& mnemonic) {
  return kTerminators.count(mnemonic) > 0;
}

bool is_unconditional_terminator(const std::string& mnemonic) {
  return mnemonic == "jmp" || mnemonic == "ret";
}

bool is_register_name(const std::string& name) {
  return register_table().count(name) > 0;
}

bool is_reserved_word(const std::string& name) {
  return kReservedWords.count(name) > 0;
}

std::vector<Token> tokenize_instruction(const std::string& mnemonic,
                                        const std::string& operand_text) {
  if (mnemonic.empty()) throw TokenizeError("empty mnemonic");
  std::vector<Token> out;
  out.push_back({to_lower(mnemonic), TokenKind::Opcode});
  if (takes_label_operand(out.front().text)) return out;

  const std::string lowered = to_lower(operand_text);
  std::string word;
  auto flush_word = [&] {
    if (word.empty()) return;
    TokenKind kind;
    if (is_register_name(word))
      kind = TokenKind::Register;
    else if (is_reserved_word(word))
      kind = TokenKind::ReservedWord;
    else if (is_constant_text(word))
      kind = TokenKind::Constant;
    else
      throw TokenizeError("unclassifiable operand token '" + word + "'");
    out.push_back({word, kind});
    word.clear();
  };

  for (char c : lowered) {
    if (c == ' ' || c == ',') {
      flush_word();
      continue;
    }
    if (is_operator_char(c)) {
      flush_word();
      out.push_back({std::string(1, c), TokenKind::Operator});
      continue;
    }
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_') {
      word += c;
      continue;
    }
    throw TokenizeError(std::string("illegal character '") + c +
                        "' in operand");
  }
  flush_word();
  return out;
}

namespace {

// Lowercases, rewrites constants as 0x-hex, and renders operators without
// surrounding spaces. Idempotent.
std::string canonicalize_operands(const std::string& mnemonic,
                                  const std::string& operand_text) {
  if (takes_label_operand(to_lower(mnemonic))) return trim(operand_text);
  std::string out;
  std::stringstream ss(operand_text);
  std::string chunk;
  bool first_chunk = true;
  while (std::getline(ss, chunk, ',')) {
    auto toks = tokenize_instruction("op", chunk);
    if (!first_chunk) out += ", ";
    first_chunk = false;
    for (std::size_t i = 1; i < toks.size(); ++i) {
      Token t = toks[i];
      if (t.kind == TokenKind::Constant && t.text.rfind("0x", 0) != 0) {
        std::uint64_t v = std::stoull(t.text, nullptr, 10);
        std::ostringstream hex;
        hex << "0x" << std::hex << v;
        t.text = hex.str();
      }
      const bool prev_op =
          i > 1 && toks[i - 1].kind == TokenKind::Operator;
      if (i > 1 && !prev_op && t.kind != TokenKind::Operator) out += ' ';
      out += t.text;
    }
  }
  return out;
}

}  // namespace

Program parse_program(const std::string& text) {
  Program prog;
  Function* fn = nullptr;
  BasicBlock* block = nullptr;
  std::set<std::string> label_set;
  std::uint64_t next_address = 0;
  // (function index, line of first use) for deferred target checks
  std::vector<std::pair<std::size_t, std::map<std::string, int>>> pending;

  auto close_block = [&](int line) {
    if (block && block->instructions.empty())
      throw ParseError(line, "empty block '" + block->id + "'");
    block = nullptr;
  };
  auto close_function = [&](int line) {
    close_block(line);
    if (fn && fn->blocks.empty())
      throw ParseError(line, "function '" + fn->name + "' has no blocks");
    fn = nullptr;
  };

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (trim(raw).empty()) continue;
    if (raw.rfind("FUNC ", 0) == 0) {
      close_function(lineno);
      Function f;
      f.name = trim(raw.substr(5));
      if (f.name.empty()) throw ParseError(lineno, "missing function name");
      for (const auto& g : prog.functions)
        if (g.name == f.name)
          throw ParseError(lineno, "duplicate function '" + f.name + "'");
      prog.functions.push_back(std::move(f));
      fn = &prog.functions.back();
      label_set.clear();
      pending.push_back({prog.functions.size() - 1, {}});
      continue;
    }
    if (raw.rfind("  ", 0) == 0) {
      if (!block) throw ParseError(lineno, "instruction outside a block");
      std::string body = trim(raw);
      std::optional<int> src_line;
      if (auto pos = body.find(";line="); pos != std::string::npos) {
        const std::string num = trim(body.substr(pos + 6));
        try {
          src_line = std::stoi(num);
        } catch (const std::exception&) {
          throw ParseError(lineno, "bad ;line= annotation");
        }
        if (*src_line <= 0) throw ParseError(lineno, "bad ;line= annotation");
        body = trim(body.substr(0, pos));
      }
      if (!block->instructions.empty() &&
          is_branch_mnemonic(block->instructions.back().mnemonic))
        throw ParseError(lineno, "instruction after terminator in block '" +
                                     block->id + "'");
      Instruction ins;
      auto sp = body.find(' ');
      ins.mnemonic = to_lower(sp == std::string::npos ? body : body.substr(0, sp));
      const std::string raw_ops =
          sp == std::string::npos ? "" : trim(body.substr(sp + 1));
      try {
        ins.operand_text = canonicalize_operands(ins.mnemonic, raw_ops);
        ins.tokens = tokenize_instruction(ins.mnemonic, ins.operand_text);
      } catch (const TokenizeError& e) {
        throw ParseError(lineno, e.what());
      }
      ins.src_line = src_line;
      ins.address = next_address++;
      if (is_branch_mnemonic(ins.mnemonic) && ins.mnemonic != "ret") {
        if (ins.operand_text.empty())
          throw ParseError(lineno, "branch without target label");
        pending.back().second.emplace(ins.operand_text, lineno);
      }
      block->instructions.push_back(std::move(ins));
      continue;
    }
    std::string t = trim(raw);
    if (!t.empty() && t.back() == ':') {
      if (!fn) throw ParseError(lineno, "block label outside a function");
      close_block(lineno);
      std::string id = trim(t.substr(0, t.size() - 1));
      if (id.empty()) throw ParseError(lineno, "missing block label");
      if (!label_set.insert(id).second)
        throw ParseError(lineno, "duplicate block label '" + id + "'");
      fn->blocks.push_back({id, {}, {}, std::nullopt});
      block = &fn->blocks.back();
      if (fn->blocks.size() == 1) fn->entry = id;
      continue;
    }
    throw ParseError(lineno, "unknown directive: " + t);
  }
  close_function(lineno + 1);

  for (const auto& [fi, targets] : pending) {
    Function& f = prog.functions[fi];
    std::set<std::string> labels;
    for (const auto& b : f.blocks) labels.insert(b.id);
    for (const auto& [label, line] : targets)
      if (!labels.count(label))
        throw ParseError(line, "undefined label '" + label + "'");
    // Successor wiring: terminator targets plus file-order fall-through.
    for (std::size_t i = 0; i < f.blocks.size(); ++i) {
      BasicBlock& b = f.blocks[i];
      const Instruction& last = b.instructions.back();
      const bool has_next = i + 1 < f.blocks.size();
      if (is_branch_mnemonic(last.mnemonic)) {
        if (last.mnemonic != "ret") b.terminator_targets = {last.operand_text};
        if (!is_unconditional_terminator(last.mnemonic) && has_next)
          b.falls_through_to = f.blocks[i + 1].id;
      } else if (has_next) {
        b.falls_through_to = f.blocks[i + 1].id;
      }
    }
  }
  return prog;
}

std::string print_instruction(const Instruction& ins) {
  std::string s = ins.mnemonic;
  if (!ins.operand_text.empty()) s += " " + ins.operand_text;
  if (ins.src_line) s += " ;line=" + std::to_string(*ins.src_line);
  return s;
}

std::string print_program(const Program& p) {
  std::string out;
  for (const auto& f : p.functions) {
    out += "FUNC " + f.name + "\n";
    for (const auto& b : f.blocks) {
      out += b.id + ":\n";
      for (const auto& ins : b.instructions)
        out += "  " + print_instruction(ins) + "\n";
    }
  }
  return out;
}

std::uint64_t block_fingerprint(const BasicBlock& block) {
  std::uint64_t h = kFnvOffset;
  for (const auto& ins : block.instructions) {
    fnv_mix_str(h, ins.mnemonic);
    for (std::size_t i = 1; i < ins.tokens.size(); ++i) {
      const Token& t = ins.tokens[i];
      const unsigned char kind = static_cast<unsigned char>(t.kind);
      fnv_mix(h, &kind, 1);
      if (t.kind != TokenKind::Constant) fnv_mix_str(h, t.text);
    }
    unsigned char end = 0xfe;
    fnv_mix(h, &end, 1);
  }
  return h;
}

const BasicBlock* Function::find_block(const std::string& id) const {
  for (const auto& b : blocks)
    if (b.id == id) return &b;
  return nullptr;
}

const Function* Program::find_function(const std::string& name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

}  // namespace bingo
