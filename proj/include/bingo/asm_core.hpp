// SPDX-License-Identifier: Apache-2.0
//
// Parsed assembly model: programs, functions, basic blocks, instructions,
// and the instruction tokenizer.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bingo {

enum class TokenKind { Opcode, Register, Constant, ReservedWord, Operator, Special };

struct Token {
  std::string text;
  TokenKind kind;

  bool operator==(const Token&) const = default;
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct TokenizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Instruction {
  std::string mnemonic;
  std::string operand_text;          // canonical form, may be empty
  std::vector<Token> tokens;         // tokenize_instruction(mnemonic, operand_text)
  std::optional<int> src_line;       // source line from a ";line=" annotation
  std::uint64_t address = 0;

  bool operator==(const Instruction&) const = default;
};

struct BasicBlock {
  std::string id;
  std::vector<Instruction> instructions;      // non-empty
  std::vector<std::string> terminator_targets;  // 0, 1, or 2 entries
  std::optional<std::string> falls_through_to;

  bool operator==(const BasicBlock&) const = default;
};

struct Function {
  std::string name;
  std::vector<BasicBlock> blocks;
  std::string entry;

  const BasicBlock* find_block(const std::string& id) const;

  bool operator==(const Function&) const = default;
};

enum class Side { PrePatch, PostPatch };

struct Program {
  std::vector<Function> functions;
  std::string commit_id;
  Side side = Side::PrePatch;

  const Function* find_function(const std::string& name) const;

  bool operator==(const Program&) const = default;
};

// True for mnemonics that terminate a block. `call` is not one of them.
bool is_branch_mnemonic(const std::string& mnemonic);
// True for the unconditional terminators (jmp, ret) that suppress fall-through.
bool is_unconditional_terminator(const std::string& mnemonic);
bool is_register_name(const std::string& name);
bool is_reserved_word(const std::string& name);

// Splits an instruction into opcode/register/constant/reserved-word/operator
// tokens. Operands are comma-separated; whitespace is discarded.
std::vector<Token> tokenize_instruction(const std::string& mnemonic,
                                        const std::string& operand_text);

// Parses the ASM-TEXT format. Canonicalizes operand text (lowercase, constants
// rewritten as 0x-hex) so parse/print round-trips are exact.
Program parse_program(const std::string& text);

// Canonical printer; parse_program(print_program(p)) == p.
std::string print_program(const Program& p);
std::string print_instruction(const Instruction& ins);

// Hash of the per-instruction (mnemonic, operand token kinds) sequence.
// Constant values and label text are excluded, so renumbering and relocation
// noise leave the fingerprint unchanged. Stable across runs and platforms.
std::uint64_t block_fingerprint(const BasicBlock& block);

}  // namespace bingo
