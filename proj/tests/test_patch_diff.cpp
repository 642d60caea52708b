// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "bingo/patch_diff.hpp"
#include "bingo/rng.hpp"
#include "generators.hpp"

using namespace bingo;
using FnBlock = std::pair<std::string, std::string>;

namespace {

Program prog(const std::string& text, const std::string& commit = "c0",
             Side side = Side::PrePatch) {
  Program p = parse_program(text);
  p.commit_id = commit;
  p.side = side;
  return p;
}

const char* kAnnotated =
    "FUNC f\n"
    "b0:\n"
    "  mov rax, 0x0 ;line=10\n"
    "  cmp rax, 0x0 ;line=11\n"
    "  jle b2\n"
    "b1:\n"
    "  mov rbx, 0x1 ;line=17\n"
    "  jmp b3\n"
    "b2:\n"
    "  mov rbx, 0x2 ;line=18\n"
    "b3:\n"
    "  ret ;line=20\n";

}  // namespace

TEST_CASE("debug path: changed line selects its block") {
  const Program pre = prog(kAnnotated);
  const Program post = prog(kAnnotated, "c0", Side::PostPatch);
  const PatchBlockSet pbs = patch_blocks_from_debug(pre, post, {}, {17});
  CHECK(pbs.provenance == Provenance::DebugLines);
  CHECK(pbs.pre_blocks.empty());
  CHECK(pbs.post_blocks == std::set<FnBlock>{{"f", "b1"}});
}

TEST_CASE("debug path: empty changed sets select nothing") {
  const Program p = prog(kAnnotated);
  CHECK(patch_blocks_from_debug(p, p, {}, {}).empty());
}

TEST_CASE("debug path: one line spanning several blocks selects all of them") {
  const char* spread =
      "FUNC f\n"
      "b0:\n  cmp rax, 0x0 ;line=30\n  jle b2\n"
      "b1:\n  mov rbx, 0x1 ;line=30\n  jmp b3\n"
      "b2:\n  mov rbx, 0x2 ;line=30\n"
      "b3:\n  ret ;line=31\n";
  const PatchBlockSet pbs =
      patch_blocks_from_debug(prog(spread), prog(spread), {30}, {});
  CHECK(pbs.pre_blocks ==
        std::set<FnBlock>{{"f", "b0"}, {"f", "b1"}, {"f", "b2"}});
}

TEST_CASE("debug path: sparse annotations in a changed function rejected") {
  const char* sparse =
      "FUNC f\n"
      "b0:\n"
      "  mov rax, 0x0 ;line=10\n"
      "  mov rbx, 0x1\n"
      "  mov rcx, 0x2\n"
      "  ret\n";
  CHECK_THROWS_AS(patch_blocks_from_debug(prog(sparse), prog(sparse), {10}, {}),
                  MissingDebugInfo);
}

TEST_CASE("diff path: identical programs yield an empty set") {
  const Program p = prog(kAnnotated);
  CHECK(patch_blocks_by_diff(p, p).empty());
}

TEST_CASE("diff path: added block appears on the post side only") {
  const Program pre = prog("FUNC f\nb0:\n  mov rax, 0x1\nb1:\n  ret\n");
  const Program post =
      prog("FUNC f\nb0:\n  mov rax, 0x1\nbn:\n  mov rbx, 0x2\nb1:\n  ret\n");
  const PatchBlockSet pbs = patch_blocks_by_diff(pre, post);
  CHECK(pbs.pre_blocks.empty());
  CHECK(pbs.post_blocks == std::set<FnBlock>{{"f", "bn"}});
}

TEST_CASE("diff path: replaced block appears on both sides") {
  const Program pre = prog("FUNC f\nb0:\n  mov rbx, 0x1\nb1:\n  ret\n");
  const Program post = prog("FUNC f\nb0:\n  mov rcx, 0x1\nb1:\n  ret\n");
  const PatchBlockSet pbs = patch_blocks_by_diff(pre, post);
  CHECK(pbs.pre_blocks == std::set<FnBlock>{{"f", "b0"}});
  CHECK(pbs.post_blocks == std::set<FnBlock>{{"f", "b0"}});
}

TEST_CASE("diff path: disjoint function names rejected") {
  const Program pre = prog("FUNC f\nb0:\n  ret\n");
  const Program post = prog("FUNC g\nb0:\n  ret\n");
  CHECK_THROWS_AS(patch_blocks_by_diff(pre, post), NoCommonFunctions);
}

TEST_CASE("diff path is symmetric under side swap") {
  Rng rng(66);
  for (int i = 0; i < 30; ++i) {
    const Program a = prog(testgen::random_function_text(rng));
    const Program b = prog(testgen::random_function_text(rng));
    const PatchBlockSet ab = patch_blocks_by_diff(a, b);
    const PatchBlockSet ba = patch_blocks_by_diff(b, a);
    CHECK(ab.pre_blocks == ba.post_blocks);
    CHECK(ab.post_blocks == ba.pre_blocks);
  }
}

TEST_CASE("twin build: one function, one twin, patch nodes marked") {
  const Program pre = prog("FUNC f\nb0:\n  mov rax, 0x1\nb1:\n  ret\n");
  const Program post =
      prog("FUNC f\nb0:\n  mov rax, 0x1\nbn:\n  mov rbx, 0x2\nb1:\n  ret\n");
  const PatchBlockSet pbs = patch_blocks_by_diff(pre, post);
  const TwinBuildResult r =
      build_twin_graph(pre, post, pbs, SliceConfig{}, TwinLabel::Security);
  CHECK(r.warnings.empty());
  REQUIRE(r.twins.size() == 1);
  const TwinGraph& t = r.twins[0];
  CHECK(t.function == "f");
  CHECK(t.label == TwinLabel::Security);

  int pre_patch = 0, post_patch = 0;
  for (const auto& n : t.pre_graph.nodes)
    if (n.kind == NodeKind::PatchRelated) ++pre_patch;
  for (const auto& n : t.post_graph.nodes)
    if (n.kind == NodeKind::PatchRelated) ++post_patch;
  CHECK(pre_patch == 0);  // context-only side
  CHECK(post_patch >= 1);
  CHECK(!t.pre_graph.nodes.empty());  // never an empty graph
}

TEST_CASE("twin build: two touched functions share a commit id") {
  const char* pre_text =
      "FUNC f\nb0:\n  mov rbx, 0x1\nb1:\n  ret\n"
      "FUNC g\nb0:\n  mov rcx, 0x1\nb1:\n  ret\n";
  const char* post_text =
      "FUNC f\nb0:\n  mov rdx, 0x1\nb1:\n  ret\n"
      "FUNC g\nb0:\n  mov rsi, 0x1\nb1:\n  ret\n";
  const Program pre = prog(pre_text, "deadbeef");
  const Program post = prog(post_text, "deadbeef", Side::PostPatch);
  const TwinBuildResult r = build_twin_graph(
      pre, post, patch_blocks_by_diff(pre, post), SliceConfig{}, std::nullopt);
  REQUIRE(r.twins.size() == 2);
  CHECK(r.twins[0].commit_id == r.twins[1].commit_id);
  CHECK(r.twins[0].function != r.twins[1].function);
  CHECK(!r.twins[0].label.has_value());
}

TEST_CASE("twin patch nodes stay within the declared patch set") {
  Rng rng(91);
  for (int i = 0; i < 20; ++i) {
    const Program pre = prog(testgen::random_function_text(rng));
    const Program post = prog(testgen::random_function_text(rng));
    const PatchBlockSet pbs = patch_blocks_by_diff(pre, post);
    if (pbs.empty()) continue;
    const TwinBuildResult r =
        build_twin_graph(pre, post, pbs, SliceConfig{}, std::nullopt);
    for (const auto& t : r.twins) {
      for (const auto& n : t.pre_graph.nodes)
        if (n.kind == NodeKind::PatchRelated)
          CHECK(pbs.pre_blocks.count({t.function, n.id}) == 1);
      for (const auto& n : t.post_graph.nodes)
        if (n.kind == NodeKind::PatchRelated)
          CHECK(pbs.post_blocks.count({t.function, n.id}) == 1);
    }
  }
}

TEST_CASE("split: 10 single-entry commits at 0.8 go 8/2") {
  DatasetManifest m;
  m.split_ratio = 0.8;
  m.seed = 3;
  for (int i = 0; i < 10; ++i)
    m.entries.push_back({"t" + std::to_string(i) + ".json",
                         "commit" + std::to_string(i), TwinLabel::Security});
  const auto [train, test] = split_dataset(m);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
}

TEST_CASE("split: commit sizes 8 and 2 at 0.8 keep the big commit in train") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    DatasetManifest m;
    m.split_ratio = 0.8;
    m.seed = seed;
    for (int i = 0; i < 8; ++i)
      m.entries.push_back({"a" + std::to_string(i), "big", TwinLabel::Security});
    for (int i = 0; i < 2; ++i)
      m.entries.push_back({"b" + std::to_string(i), "small", TwinLabel::NonSecurity});
    const auto [train, test] = split_dataset(m);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
    for (const auto& e : train) CHECK(e.commit_id == "big");
    for (const auto& e : test) CHECK(e.commit_id == "small");
  }
}

TEST_CASE("split: commits never straddle and the same seed repeats exactly") {
  DatasetManifest m;
  m.split_ratio = 0.75;
  m.seed = 1234;
  Rng rng(8);
  for (int c = 0; c < 12; ++c) {
    const int entries = 1 + static_cast<int>(rng.uniform_int(4));
    for (int e = 0; e < entries; ++e)
      m.entries.push_back({"t" + std::to_string(c) + "_" + std::to_string(e),
                           "commit" + std::to_string(c),
                           c % 2 ? TwinLabel::Security : TwinLabel::NonSecurity});
  }
  const auto [train1, test1] = split_dataset(m);
  std::set<std::string> train_commits, test_commits;
  for (const auto& e : train1) train_commits.insert(e.commit_id);
  for (const auto& e : test1) test_commits.insert(e.commit_id);
  for (const auto& c : train_commits) CHECK(test_commits.count(c) == 0);
  CHECK(!train1.empty());
  CHECK(!test1.empty());

  const auto [train2, test2] = split_dataset(m);
  REQUIRE(train1.size() == train2.size());
  for (std::size_t i = 0; i < train1.size(); ++i)
    CHECK(train1[i].path == train2[i].path);
}

TEST_CASE("split: a single commit cannot be split") {
  DatasetManifest m;
  m.entries.push_back({"a", "only", TwinLabel::Security});
  m.entries.push_back({"b", "only", TwinLabel::Security});
  CHECK_THROWS_AS(split_dataset(m), SingleCommit);
}

TEST_CASE("twin JSON round trip") {
  const Program pre = prog("FUNC f\nb0:\n  mov rbx, 0x1\nb1:\n  ret\n");
  const Program post = prog("FUNC f\nb0:\n  mov rcx, 0x1\nb1:\n  ret\n");
  const TwinBuildResult r = build_twin_graph(
      pre, post, patch_blocks_by_diff(pre, post), SliceConfig{}, TwinLabel::Security);
  REQUIRE(r.twins.size() == 1);
  const std::string json = twin_to_json(r.twins[0]);
  CHECK(json.find("\"bingo-twin/1\"") != std::string::npos);
  CHECK(json.find("\"security\"") != std::string::npos);

  const TwinGraph back = twin_from_json(json);
  CHECK(back.commit_id == r.twins[0].commit_id);
  CHECK(back.function == "f");
  CHECK(back.label == TwinLabel::Security);
  REQUIRE(back.pre_graph.nodes.size() == r.twins[0].pre_graph.nodes.size());
  for (std::size_t i = 0; i < back.pre_graph.nodes.size(); ++i) {
    CHECK(back.pre_graph.nodes[i].id == r.twins[0].pre_graph.nodes[i].id);
    CHECK(back.pre_graph.nodes[i].kind == r.twins[0].pre_graph.nodes[i].kind);
  }
  REQUIRE(back.post_graph.edges.size() == r.twins[0].post_graph.edges.size());
  for (std::size_t i = 0; i < back.post_graph.edges.size(); ++i)
    CHECK(back.post_graph.edges[i].types == r.twins[0].post_graph.edges[i].types);

  // serialization is stable
  CHECK(twin_to_json(back) == json);
}

TEST_CASE("manifest JSON round trip") {
  DatasetManifest m;
  m.split_ratio = 0.8;
  m.seed = 7;
  m.entries.push_back({"x.twin.json", "c1", TwinLabel::Security});
  m.entries.push_back({"y.twin.json", "c2", std::nullopt});
  const std::string json = manifest_to_json(m);
  const DatasetManifest back = manifest_from_json(json);
  CHECK(back.split_ratio == m.split_ratio);
  CHECK(back.seed == m.seed);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].path == "x.twin.json");
  CHECK(back.entries[0].label == TwinLabel::Security);
  CHECK(!back.entries[1].label.has_value());
  CHECK(manifest_to_json(back) == json);
}
