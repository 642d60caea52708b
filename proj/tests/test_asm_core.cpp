// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "bingo/asm_core.hpp"
#include "bingo/rng.hpp"
#include "generators.hpp"

using namespace bingo;

namespace {
const char* kDiamond =
    "FUNC f\n"
    "b0:\n"
    "  cmp rax, 0x0\n"
    "  jle b2\n"
    "b1:\n"
    "  mov rbx, 0x1\n"
    "  jmp b3\n"
    "b2:\n"
    "  mov rbx, 0x2\n"
    "b3:\n"
    "  ret\n";

BasicBlock single_instr_block(const std::string& mnemonic,
                              const std::string& operands) {
  const std::string text = "FUNC f\nb0:\n  " + mnemonic +
                           (operands.empty() ? "" : " " + operands) + "\n";
  return parse_program(text).functions[0].blocks[0];
}
}  // namespace

TEST_CASE("parse minimal program") {
  const Program p = parse_program("FUNC f\nb0:\n  ret\n");
  REQUIRE(p.functions.size() == 1);
  const Function& f = p.functions[0];
  CHECK(f.name == "f");
  CHECK(f.entry == "b0");
  REQUIRE(f.blocks.size() == 1);
  const BasicBlock& b = f.blocks[0];
  REQUIRE(b.instructions.size() == 1);
  CHECK(b.instructions[0].mnemonic == "ret");
  CHECK(b.terminator_targets.empty());
  CHECK(!b.falls_through_to.has_value());
}

TEST_CASE("parse diamond function: targets and fall-throughs") {
  const Program p = parse_program(kDiamond);
  const Function& f = p.functions[0];
  REQUIRE(f.blocks.size() == 4);

  const BasicBlock* b0 = f.find_block("b0");
  REQUIRE(b0 != nullptr);
  CHECK(b0->terminator_targets == std::vector<std::string>{"b2"});
  CHECK(b0->falls_through_to == "b1");

  const BasicBlock* b1 = f.find_block("b1");
  REQUIRE(b1 != nullptr);
  CHECK(b1->terminator_targets == std::vector<std::string>{"b3"});
  CHECK(!b1->falls_through_to.has_value());  // jmp suppresses fall-through

  const BasicBlock* b2 = f.find_block("b2");
  REQUIRE(b2 != nullptr);
  CHECK(b2->terminator_targets.empty());
  CHECK(b2->falls_through_to == "b3");

  const BasicBlock* b3 = f.find_block("b3");
  REQUIRE(b3 != nullptr);
  CHECK(b3->terminator_targets.empty());
  CHECK(!b3->falls_through_to.has_value());
}

TEST_CASE("parse errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_program("FUNC f\nb0:\n  jmp missing\n"),
                       doctest::Contains("undefined label 'missing'"), ParseError);
  CHECK_THROWS_AS(parse_program("BOGUS f\n"), ParseError);
  CHECK_THROWS_AS(parse_program("FUNC f\nb0:\nb0:\n  ret\n"), ParseError);  // dup label
  CHECK_THROWS_AS(parse_program("FUNC f\nb0:\nb1:\n  ret\n"), ParseError);  // empty block
  try {
    parse_program("FUNC f\nb0:\n  jmp missing\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
}

TEST_CASE("src_line annotations are kept") {
  const Program p = parse_program("FUNC f\nb0:\n  mov rax, 0x1 ;line=17\n  ret\n");
  const auto& ins = p.functions[0].blocks[0].instructions;
  CHECK(ins[0].src_line == 17);
  CHECK(!ins[1].src_line.has_value());
}

TEST_CASE("addresses assigned in file order") {
  const Program p = parse_program(kDiamond);
  std::uint64_t expected = 0;
  for (const auto& b : p.functions[0].blocks)
    for (const auto& ins : b.instructions) CHECK(ins.address == expected++);
}

TEST_CASE("tokenizer golden split") {
  const auto tokens = tokenize_instruction("mov", "rax, qword [rsp+0x58]");
  const std::vector<Token> expected = {
      {"mov", TokenKind::Opcode},    {"rax", TokenKind::Register},
      {"qword", TokenKind::ReservedWord}, {"[", TokenKind::Operator},
      {"rsp", TokenKind::Register},  {"+", TokenKind::Operator},
      {"0x58", TokenKind::Constant}, {"]", TokenKind::Operator}};
  CHECK(tokens == expected);
}

TEST_CASE("tokenizer simple cases") {
  CHECK(tokenize_instruction("ret", "") ==
        std::vector<Token>{{"ret", TokenKind::Opcode}});
  CHECK(tokenize_instruction("add", "rax, rbx") ==
        std::vector<Token>{{"add", TokenKind::Opcode},
                           {"rax", TokenKind::Register},
                           {"rbx", TokenKind::Register}});
}

TEST_CASE("tokenizer rejects characters outside the declared set") {
  CHECK_THROWS_AS(tokenize_instruction("mov", "rax, @foo"), TokenizeError);
  CHECK_THROWS_AS(tokenize_instruction("mov", "rax, a%b"), TokenizeError);
}

TEST_CASE("token texts reassemble the operand text") {
  // Joining non-opcode token texts and normalizing spacing around operators
  // reproduces the canonical operand text modulo whitespace and commas.
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const BasicBlock b = testgen::random_block(rng);
    for (const auto& ins : b.instructions) {
      std::string flat;
      for (std::size_t t = 1; t < ins.tokens.size(); ++t) flat += ins.tokens[t].text;
      std::string want;
      for (const char c : ins.operand_text)
        if (c != ' ' && c != ',') want += c;
      if (!ins.tokens.empty() && is_branch_mnemonic(ins.mnemonic)) continue;
      CHECK(flat == want);
    }
  }
}

TEST_CASE("round trip: parse(print(p)) == p") {
  Rng rng(28);
  for (int i = 0; i < 100; ++i) {
    const Program p = parse_program(testgen::random_function_text(rng));
    CHECK(parse_program(print_program(p)) == p);
  }
}

TEST_CASE("fingerprint ignores constant values, keeps registers") {
  const BasicBlock a = single_instr_block("mov", "rbx, 0x1");
  const BasicBlock b = single_instr_block("mov", "rbx, 0x2");
  const BasicBlock c = single_instr_block("mov", "rcx, 0x1");
  CHECK(block_fingerprint(a) == block_fingerprint(b));
  CHECK(block_fingerprint(a) != block_fingerprint(c));
}

TEST_CASE("fingerprint survives a print/parse round trip") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Program p;
    p.functions.push_back(Function{});
    Function& f = p.functions.back();
    f.name = "f";
    f.blocks.push_back(testgen::random_block(rng));
    f.entry = f.blocks[0].id;
    const Program q = parse_program(print_program(p));
    CHECK(block_fingerprint(p.functions[0].blocks[0]) ==
          block_fingerprint(q.functions[0].blocks[0]));
  }
}

TEST_CASE("constants canonicalize to lowercase hex") {
  const Program p = parse_program("FUNC f\nb0:\n  mov rax, 17\n  ret\n");
  CHECK(p.functions[0].blocks[0].instructions[0].operand_text == "rax, 0x11");
}

TEST_CASE("register classification table") {
  for (const char* r : {"rax", "rbx", "r15", "eax", "al", "rsp", "rbp", "rip"})
    CHECK(is_register_name(r));
  CHECK(!is_register_name("qword"));
  CHECK(!is_register_name("foo"));
  for (const char* w : {"byte", "word", "dword", "qword", "ptr"})
    CHECK(is_reserved_word(w));
}
