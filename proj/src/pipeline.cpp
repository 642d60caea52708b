// SPDX-License-Identifier: Apache-2.0

#include "bingo/pipeline.hpp"

#include <map>
#include <sstream>

#include "bingo/rng.hpp"

namespace bingo {

Embedder hashed_embedder(int dim) {
  return [dim](const BasicBlock& b) { return hashed_embed(b, dim); };
}

SideGraph cpg_to_side(const Cpg& cpg, const Embedder& embed) {
  SideGraph side;
  std::map<std::string, int> index;
  for (const auto& n : cpg.nodes) index[n.id] = static_cast<int>(index.size());
  if (!cpg.nodes.empty()) {
    const NodeEmbedding first = embed(cpg.nodes[0].block);
    side.nodes.resize(cpg.nodes.size(), first.vector.size());
    for (std::size_t i = 0; i < cpg.nodes.size(); ++i) {
      const NodeEmbedding e = i == 0 ? first : embed(cpg.nodes[i].block);
      for (std::size_t c = 0; c < e.vector.size(); ++c)
        side.nodes(i, c) = e.vector[c];
    }
  }
  for (const auto& e : cpg.edges)
    for (int k = 0; k < kChannels; ++k)
      if (e.types[k]) side.edges[k].push_back({index.at(e.src), index.at(e.dst)});
  return side;
}

TwinSample twin_to_sample(const TwinGraph& twin, const Embedder& embed) {
  TwinSample s;
  s.pre = cpg_to_side(twin.pre_graph, embed);
  s.post = cpg_to_side(twin.post_graph, embed);
  s.commit_id = twin.commit_id;
  if (twin.label)
    s.label = *twin.label == TwinLabel::Security ? PatchLabel::Security
                                                 : PatchLabel::NonSecurity;
  return s;
}

namespace {

const char* kRegs[] = {"rax", "rbx", "rcx", "rdx", "rsi", "rdi"};

std::string random_reg(Rng& rng) { return kRegs[rng.uniform_int(6)]; }

std::string random_plain_instr(Rng& rng) {
  std::ostringstream out;
  switch (rng.uniform_int(3)) {
    case 0:
      out << "mov " << random_reg(rng) << ", 0x" << std::hex
          << rng.uniform_int(256);
      break;
    case 1:
      out << "add " << random_reg(rng) << ", " << random_reg(rng);
      break;
    default:
      out << "mov " << random_reg(rng) << ", " << random_reg(rng);
      break;
  }
  return out.str();
}

// A base function of straight-line blocks with occasional forward branches.
std::vector<std::vector<std::string>> random_base_blocks(Rng& rng) {
  const int m = 3 + static_cast<int>(rng.uniform_int(4));  // 3..6 blocks
  std::vector<std::vector<std::string>> blocks(m);
  for (int i = 0; i < m; ++i) {
    const int ins = 2 + static_cast<int>(rng.uniform_int(3));
    for (int j = 0; j < ins; ++j)
      blocks[i].push_back(random_plain_instr(rng));
    if (i + 2 < m && rng.bernoulli(0.4)) {
      const int target = i + 1 + static_cast<int>(rng.uniform_int(m - i - 1));
      blocks[i].push_back("cmp " + random_reg(rng) + ", 0x0");
      // the label is patched in once block names are final
      blocks[i].push_back("jle @" + std::to_string(target));
    }
  }
  blocks[m - 1].push_back("ret");
  return blocks;
}

std::string render_program(const std::vector<std::vector<std::string>>& blocks) {
  std::ostringstream out;
  out << "FUNC f\n";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out << "b" << i << ":\n";
    for (std::string ins : blocks[i]) {
      // resolve placeholder branch targets by block position
      if (auto at = ins.find('@'); at != std::string::npos)
        ins = ins.substr(0, at) + "b" + ins.substr(at + 1);
      out << "  " << ins << "\n";
    }
  }
  return out.str();
}

// Renames placeholder targets after an insertion shifts block positions.
void shift_targets(std::vector<std::vector<std::string>>& blocks,
                   std::size_t insert_at, int count) {
  for (auto& block : blocks)
    for (auto& ins : block) {
      auto at = ins.find('@');
      if (at == std::string::npos) continue;
      int target = std::stoi(ins.substr(at + 1));
      if (target >= static_cast<int>(insert_at)) target += count;
      ins = ins.substr(0, at + 1) + std::to_string(target);
    }
}

}  // namespace

std::vector<TwinGraph> generate_synthetic_dataset(int count,
                                                  std::uint64_t seed,
                                                  const SliceConfig& slice_cfg) {
  Rng rng(seed);
  std::vector<TwinGraph> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const bool security = i % 2 == 0;
    auto blocks = random_base_blocks(rng);
    auto post_blocks = blocks;
    const std::size_t at = 1 + rng.uniform_int(post_blocks.size() - 1);
    if (security) {
      // Guard insertion: a bounds check that can skip a short fix block.
      shift_targets(post_blocks, at, 2);
      std::vector<std::string> guard = {
          "cmp " + random_reg(rng) + ", 0x" +
              std::to_string(rng.uniform_int(64)),
          "jle @" + std::to_string(at + 2)};
      std::vector<std::string> fix = {"mov " + random_reg(rng) + ", 0x0"};
      post_blocks.insert(post_blocks.begin() + at, {guard, fix});
    } else {
      // Feature-like change: a larger straight-line region of logic ops.
      const int n = 3 + static_cast<int>(rng.uniform_int(3));
      shift_targets(post_blocks, at, n);
      std::vector<std::vector<std::string>> region;
      for (int b = 0; b < n; ++b) {
        std::vector<std::string> blk;
        const int ins = 3 + static_cast<int>(rng.uniform_int(3));
        for (int j = 0; j < ins; ++j) {
          const char* ops[] = {"xor", "and", "or"};
          blk.push_back(std::string(ops[rng.uniform_int(3)]) + " " +
                        random_reg(rng) + ", " + random_reg(rng));
        }
        region.push_back(std::move(blk));
      }
      post_blocks.insert(post_blocks.begin() + at, region.begin(),
                         region.end());
    }

    Program pre = parse_program(render_program(blocks));
    Program post = parse_program(render_program(post_blocks));
    const std::string commit = "synth-" + std::to_string(i);
    pre.commit_id = post.commit_id = commit;
    pre.side = Side::PrePatch;
    post.side = Side::PostPatch;

    const PatchBlockSet pbs = patch_blocks_by_diff(pre, post);
    TwinBuildResult built = build_twin_graph(
        pre, post, pbs, slice_cfg,
        security ? TwinLabel::Security : TwinLabel::NonSecurity);
    if (built.twins.empty()) {
      --i;  // degenerate draw (identical fingerprints); retry
      continue;
    }
    out.push_back(std::move(built.twins.front()));
  }
  return out;
}

}  // namespace bingo
