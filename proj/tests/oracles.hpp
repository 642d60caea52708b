// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations used to cross-check the library.
// These deliberately share no code with src/: post-dominance is decided by
// reachability with a node removed, slices by plain BFS, dependence edges by
// per-register path simulation, and graph convolution by dense matrices.

#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bingo/flowgraph.hpp"
#include "bingo/nn_util.hpp"

namespace bingo::oracle {

using Edge = std::pair<std::string, std::string>;

// Reachability from `from` to `to` along graph edges, never stepping through
// `banned` (the endpoints themselves are allowed).
inline bool reaches_avoiding(const std::set<Edge>& edges, const std::string& from,
                             const std::string& to, const std::string& banned) {
  if (from == to) return true;
  std::set<std::string> seen{from};
  std::vector<std::string> work{from};
  while (!work.empty()) {
    const auto v = work.back();
    work.pop_back();
    for (const auto& [s, d] : edges) {
      if (s != v || d == banned) continue;
      if (d == to) return true;
      if (seen.insert(d).second) work.push_back(d);
    }
  }
  return false;
}

// Post-dominance by the path definition: B post-dominates A iff every path
// from A to the (virtual) exit passes through B, i.e. removing B cuts A off
// from the exit. Assumes every node in `cfg` can reach an exit, so the only
// augmentation needed is a virtual exit behind the real ones.
inline std::map<std::string, std::set<std::string>> postdom_sets(
    const FlowGraph& cfg) {
  std::set<Edge> edges = cfg.edges;
  const std::string vexit = "__oracle_exit__";
  for (const auto& v : cfg.nodes)
    if (exit_blocks(cfg).count(v)) edges.insert({v, vexit});
  std::map<std::string, std::set<std::string>> result;
  for (const auto& a : cfg.nodes) {
    auto& set = result[a];
    set.insert(a);
    for (const auto& b : cfg.nodes) {
      if (b == a) continue;
      if (!reaches_avoiding(edges, a, vexit, b)) set.insert(b);
    }
  }
  return result;
}

// Control dependence straight from the definition: v is control-dependent on
// u iff v post-dominates some successor of u but does not strictly
// post-dominate u. Self-dependences are dropped to match the no-self-loop
// graph invariant.
inline std::set<Edge> control_dependence(const FlowGraph& cfg) {
  const auto pdom = postdom_sets(cfg);
  std::set<Edge> result;
  for (const auto& [u, s] : cfg.edges) {
    for (const auto& v : cfg.nodes) {
      if (v == u) continue;
      const bool pdoms_succ = pdom.at(s).count(v) > 0;
      const bool strictly_pdoms_u = pdom.at(u).count(v) > 0;
      if (pdoms_succ && !strictly_pdoms_u) result.insert({u, v});
    }
  }
  return result;
}

// Undirected BFS over the union of the three edge sets; a node survives a
// stride-n slice iff it is within n hops of some patch block.
inline std::set<std::string> bfs_slice_nodes(
    const std::array<FlowGraph, 3>& graphs,
    const std::set<std::string>& patch_blocks, int stride_n) {
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& g : graphs)
    for (const auto& [s, d] : g.edges) {
      adj[s].insert(d);
      adj[d].insert(s);
    }
  std::set<std::string> frontier = patch_blocks;
  std::set<std::string> seen = patch_blocks;
  for (int round = 0; round < stride_n; ++round) {
    std::set<std::string> next;
    for (const auto& v : frontier)
      for (const auto& w : adj[v])
        if (seen.insert(w).second) next.insert(w);
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  return seen;
}

// Single-register dependence check by path simulation: the final write to
// `reg` in block A reaches block B iff B reads `reg` before writing it and
// some CFG path A -> B has no intermediate block writing `reg`.
struct RegisterEffects {
  std::set<std::string> writes;             // registers written anywhere
  std::set<std::string> upward_exposed;     // registers read before any write
};

// Per-instruction register reads and writes, for the register-only mnemonic
// set used by the generated test programs.
inline void instr_reg_effects(const Instruction& ins, std::set<std::string>* reads,
                              std::set<std::string>* writes) {
  static const std::set<std::string> rmw = {"add", "sub", "and", "or", "xor"};
  if (ins.mnemonic == "call") {
    for (const char* r : {"rax", "rcx", "rdx", "rsi", "rdi", "r8", "r9", "r10", "r11"})
      writes->insert(r);
    return;
  }
  std::vector<std::string> operands;
  std::string cur;
  for (const char c : ins.operand_text + ",") {
    if (c == ',') {
      if (!cur.empty()) operands.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (!is_register_name(operands[i])) continue;
    const bool dst_write =
        i == 0 && (ins.mnemonic == "mov" || rmw.count(ins.mnemonic) > 0);
    if (dst_write) {
      if (rmw.count(ins.mnemonic)) reads->insert(operands[i]);
      writes->insert(operands[i]);
    } else {
      reads->insert(operands[i]);
    }
  }
}

inline RegisterEffects block_effects(const BasicBlock& b,
                                     const std::set<std::string>& universe) {
  RegisterEffects eff;
  for (const auto& reg : universe) {
    bool written = false;
    for (const auto& ins : b.instructions) {
      std::set<std::string> reads, writes;
      instr_reg_effects(ins, &reads, &writes);
      if (reads.count(reg) && !written) eff.upward_exposed.insert(reg);
      if (writes.count(reg)) written = true;
    }
    if (written) eff.writes.insert(reg);
  }
  return eff;
}

inline bool dependence_path_exists(const FlowGraph& cfg, const std::string& a,
                                   const std::string& b, const std::string& reg,
                                   const std::map<std::string, RegisterEffects>& eff) {
  // path a -> ... -> b where no intermediate block writes reg
  std::set<std::string> seen;
  std::vector<std::string> work;
  for (const auto& [s, d] : cfg.edges)
    if (s == a) {
      if (d == b) return true;
      if (!eff.at(d).writes.count(reg) && seen.insert(d).second) work.push_back(d);
    }
  while (!work.empty()) {
    const auto v = work.back();
    work.pop_back();
    for (const auto& [s, d] : cfg.edges) {
      if (s != v) continue;
      if (d == b) return true;
      if (!eff.at(d).writes.count(reg) && seen.insert(d).second) work.push_back(d);
    }
  }
  return false;
}

// All (A,B) pairs validated by the single-register oracle.
inline std::set<Edge> register_dependences(const Function& f, const FlowGraph& cfg) {
  static const std::set<std::string> universe = {
      "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rsp", "rbp",
      "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15"};
  std::map<std::string, RegisterEffects> eff;
  for (const auto& b : f.blocks) eff[b.id] = block_effects(b, universe);
  std::set<Edge> result;
  for (const auto& a : f.blocks)
    for (const auto& b : f.blocks) {
      if (a.id == b.id) continue;
      for (const auto& reg : universe) {
        if (!eff[a.id].writes.count(reg)) continue;
        if (!eff[b.id].upward_exposed.count(reg)) continue;
        if (dependence_path_exists(cfg, a.id, b.id, reg, eff)) {
          result.insert({a.id, b.id});
          break;
        }
      }
    }
  return result;
}

// Dense reference for one multi-channel convolution layer: per channel k,
// ReLU( (A_k + I) N W_k ) with A_k[i][j] = 1 when the graph has an edge
// i -> j of type k; channel outputs are concatenated column-wise.
inline Matrix dense_conv(const std::vector<Matrix>& adj, const Matrix& nodes,
                         const std::vector<Matrix>& weights) {
  const auto n = nodes.rows();
  Matrix out = Matrix::Zero(n, weights[0].cols() * static_cast<long>(weights.size()));
  for (std::size_t k = 0; k < weights.size(); ++k) {
    Matrix a = adj[k] + Matrix::Identity(n, n);
    Matrix part = a * nodes * weights[k];
    out.block(0, static_cast<long>(k) * weights[k].cols(), n, weights[k].cols()) = part;
  }
  return out.cwiseMax(0.0);
}

}  // namespace bingo::oracle
