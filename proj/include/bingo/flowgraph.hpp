// SPDX-License-Identifier: Apache-2.0
//
// Per-function block graphs: CFG, CDG (via the post-dominator tree), DDG,
// their merged CPG, and stride-bounded slicing around patch blocks.

#pragma once

#include <array>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bingo/asm_core.hpp"

namespace bingo {

enum class EdgeType : int { Cfg = 0, Cdg = 1, Ddg = 2 };
inline constexpr int kEdgeTypeCount = 3;

struct FlowGraph {
  std::set<std::string> nodes;
  std::set<std::pair<std::string, std::string>> edges;
  EdgeType type = EdgeType::Cfg;
};

enum class NodeKind { PatchRelated, Context };

struct CpgNode {
  std::string id;
  NodeKind kind = NodeKind::Context;
  BasicBlock block;
};

struct CpgEdge {
  std::string src;
  std::string dst;
  std::array<bool, kEdgeTypeCount> types{};  // (Cfg, Cdg, Ddg), never all false
};

struct Cpg {
  std::vector<CpgNode> nodes;  // function block order
  std::vector<CpgEdge> edges;  // sorted by (src, dst)
  bool truncated = false;      // slicing hit its time limit

  const CpgNode* find_node(const std::string& id) const;
};

struct SliceConfig {
  int stride_n = 2;
  int time_limit_seconds = 900;
};

struct EmptyGraph : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InconsistentUniverse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Name of the synthetic exit node added when the CFG has multiple exits or
// regions that cannot reach one.
inline const std::string kVirtualExit = "__virtual_exit__";

FlowGraph build_cfg(const Function& f);

// Immediate post-dominators, computed on the reversed graph. When |exits| != 1
// or some node cannot reach an exit, a virtual exit is inserted and appears in
// the result; it maps to itself, as does a unique real exit.
std::map<std::string, std::string> post_dominator_tree(
    const FlowGraph& cfg, const std::set<std::string>& exits);

std::set<std::string> exit_blocks(const FlowGraph& cfg);

// Control dependence edges before removal of direct CFG overlaps.
FlowGraph derive_cdg_raw(const FlowGraph& cfg);
// Control dependence with edges that coincide with direct CFG edges removed.
FlowGraph derive_cdg(const FlowGraph& cfg);

// Block-level reaching definitions over registers and exact-text memory
// operands. Edge (A,B): a location last defined in A reaches an
// upward-exposed use in B.
FlowGraph build_ddg(const Function& f, const FlowGraph& cfg);

Cpg merge_cpg(const FlowGraph& cfg, const FlowGraph& cdg, const FlowGraph& ddg,
              const Function& f, const std::set<std::string>& patch_blocks);

// When cfg_internal_only: the patch blocks plus CFG edges among them.
// Otherwise: up to stride_n rounds of forward+backward expansion over all
// three edge types, then the induced subgraph of the merged CPG.
Cpg slice_cpg(const Cpg& cpg, const std::array<FlowGraph, 3>& graphs,
              const std::set<std::string>& patch_blocks, bool cfg_internal_only,
              const SliceConfig& config);

// Graphviz rendering; patch nodes filled, edge style per type
// (solid=CFG, dashed=CDG, dotted=DDG).
std::string cpg_to_dot(const Cpg& cpg, const std::string& name);

}  // namespace bingo
