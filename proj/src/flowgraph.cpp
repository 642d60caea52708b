// SPDX-License-Identifier: Apache-2.0

#include "bingo/flowgraph.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace bingo {

namespace {

using Adjacency = std::map<std::string, std::vector<std::string>>;

Adjacency successors_of(const FlowGraph& g) {
  Adjacency adj;
  for (const auto& n : g.nodes) adj[n];
  for (const auto& [s, d] : g.edges) adj[s].push_back(d);
  return adj;
}

Adjacency predecessors_of(const FlowGraph& g) {
  Adjacency adj;
  for (const auto& n : g.nodes) adj[n];
  for (const auto& [s, d] : g.edges) adj[d].push_back(s);
  return adj;
}

// Nodes from which some exit is reachable.
std::set<std::string> reaches_exit(const FlowGraph& g,
                                   const std::set<std::string>& exits) {
  Adjacency preds = predecessors_of(g);
  std::set<std::string> seen(exits.begin(), exits.end());
  std::deque<std::string> work(exits.begin(), exits.end());
  while (!work.empty()) {
    auto v = work.front();
    work.pop_front();
    for (const auto& p : preds[v])
      if (seen.insert(p).second) work.push_back(p);
  }
  return seen;
}

// Tarjan SCCs restricted to `universe`.
std::vector<std::set<std::string>> sccs_of(
    const Adjacency& succs, const std::set<std::string>& universe) {
  std::vector<std::set<std::string>> out;
  std::unordered_map<std::string, int> index, low;
  std::unordered_map<std::string, bool> on_stack;
  std::vector<std::string> stack;
  int counter = 0;

  std::function<void(const std::string&)> strongconnect =
      [&](const std::string& v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = true;
        auto it = succs.find(v);
        if (it != succs.end()) {
          for (const auto& w : it->second) {
            if (!universe.count(w)) continue;
            if (!index.count(w)) {
              strongconnect(w);
              low[v] = std::min(low[v], low[w]);
            } else if (on_stack[w]) {
              low[v] = std::min(low[v], index[w]);
            }
          }
        }
        if (low[v] == index[v]) {
          std::set<std::string> scc;
          while (true) {
            auto w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            scc.insert(w);
            if (w == v) break;
          }
          out.push_back(std::move(scc));
        }
      };
  for (const auto& v : universe)
    if (!index.count(v)) strongconnect(v);
  return out;
}

}  // namespace

FlowGraph build_cfg(const Function& f) {
  FlowGraph g;
  g.type = EdgeType::Cfg;
  for (const auto& b : f.blocks) g.nodes.insert(b.id);
  for (const auto& b : f.blocks) {
    for (const auto& t : b.terminator_targets) g.edges.insert({b.id, t});
    if (b.falls_through_to) g.edges.insert({b.id, *b.falls_through_to});
  }
  return g;
}

std::set<std::string> exit_blocks(const FlowGraph& cfg) {
  std::set<std::string> exits = cfg.nodes;
  for (const auto& [s, d] : cfg.edges) exits.erase(s);
  return exits;
}

std::map<std::string, std::string> post_dominator_tree(
    const FlowGraph& cfg, const std::set<std::string>& exits) {
  if (cfg.nodes.empty()) throw EmptyGraph("post_dominator_tree: no nodes");

  FlowGraph g = cfg;
  std::string root;
  bool all_reach = reaches_exit(g, exits).size() == g.nodes.size();
  if (exits.size() == 1 && all_reach) {
    root = *exits.begin();
  } else {
    root = kVirtualExit;
    g.nodes.insert(root);
    for (const auto& e : exits) g.edges.insert({e, root});
    if (!all_reach) {
      // Regions that cannot reach an exit drain through a representative of
      // each sink SCC of the stuck region.
      auto reaching = reaches_exit(cfg, exits);
      std::set<std::string> stuck;
      for (const auto& n : cfg.nodes)
        if (!reaching.count(n)) stuck.insert(n);
      Adjacency succs = successors_of(cfg);
      for (const auto& scc : sccs_of(succs, stuck)) {
        bool sink = true;
        for (const auto& v : scc)
          for (const auto& w : succs[v])
            if (!scc.count(w)) sink = false;
        if (sink) g.edges.insert({*scc.begin(), root});
      }
    }
  }

  // Iterative dominators (Cooper-Harvey-Kennedy) on the reversed graph.
  Adjacency rsuccs = predecessors_of(g);  // reversed successors
  Adjacency rpreds = successors_of(g);    // reversed predecessors
  std::vector<std::string> order;         // reverse post-order from root
  {
    std::set<std::string> seen;
    std::function<void(const std::string&)> dfs = [&](const std::string& v) {
      seen.insert(v);
      for (const auto& w : rsuccs[v])
        if (!seen.count(w)) dfs(w);
      order.push_back(v);
    };
    dfs(root);
    std::reverse(order.begin(), order.end());
  }
  std::unordered_map<std::string, int> rpo;
  for (std::size_t i = 0; i < order.size(); ++i) rpo[order[i]] = (int)i;

  std::map<std::string, std::string> idom;
  idom[root] = root;
  auto intersect = [&](std::string a, std::string b) {
    while (a != b) {
      while (rpo[a] > rpo[b]) a = idom[a];
      while (rpo[b] > rpo[a]) b = idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& v : order) {
      if (v == root) continue;
      std::string new_idom;
      for (const auto& p : rpreds[v]) {
        if (!idom.count(p)) continue;
        new_idom = new_idom.empty() ? p : intersect(p, new_idom);
      }
      if (new_idom.empty()) continue;
      if (!idom.count(v) || idom[v] != new_idom) {
        idom[v] = new_idom;
        changed = true;
      }
    }
  }
  return idom;
}

FlowGraph derive_cdg_raw(const FlowGraph& cfg) {
  if (cfg.nodes.empty()) throw EmptyGraph("derive_cdg: no nodes");
  auto ipdom = post_dominator_tree(cfg, exit_blocks(cfg));
  FlowGraph cdg;
  cdg.type = EdgeType::Cdg;
  cdg.nodes = cfg.nodes;
  for (const auto& [u, s] : cfg.edges) {
    if (!ipdom.count(u) || !ipdom.count(s)) continue;
    const std::string stop = ipdom.at(u);
    for (std::string v = s; v != stop; v = ipdom.at(v)) {
      if (v != u && v != kVirtualExit) cdg.edges.insert({u, v});
      if (ipdom.at(v) == v) break;  // reached the root without meeting stop
    }
  }
  return cdg;
}

FlowGraph derive_cdg(const FlowGraph& cfg) {
  FlowGraph cdg = derive_cdg_raw(cfg);
  for (const auto& e : cfg.edges) cdg.edges.erase(e);
  return cdg;
}

namespace {

struct DefUse {
  std::set<std::string> defs;
  std::set<std::string> uses;
};

const std::set<std::string> kCallerSaved = {"rax", "rcx", "rdx", "rsi",
                                            "rdi", "r8",  "r9",  "r10", "r11"};

std::vector<std::string> operand_chunks(const std::string& operand_text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : operand_text) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool is_memory_chunk(const std::string& chunk) {
  return chunk.find('[') != std::string::npos;
}

// "[rsp+0x58]" part of a memory operand; the location key.
std::string memory_key(const std::string& chunk) {
  auto b = chunk.find('[');
  auto e = chunk.find(']');
  std::string key = chunk.substr(b, e - b + 1);
  std::erase(key, ' ');
  return key;
}

std::set<std::string> registers_in(const std::string& chunk) {
  std::set<std::string> regs;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && is_register_name(word)) regs.insert(word);
    word.clear();
  };
  for (char c : chunk) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')
      word += c;
    else
      flush();
  }
  flush();
  return regs;
}

// Per-instruction def/use locations from the fixed mnemonic table. Locations
// are register names and exact-text memory operands.
DefUse instruction_def_use(const Instruction& ins) {
  DefUse du;
  const std::string& m = ins.mnemonic;
  if (m == "call") {
    du.defs.insert("rax");
    return du;  // clobbers handled by the caller via kill set
  }
  auto chunks = operand_chunks(ins.operand_text);
  const bool defines_dst = m == "mov" || m == "add" || m == "sub" ||
                           m == "and" || m == "or" || m == "xor" || m == "lea";
  const bool uses_all = m == "cmp" || m == "test";
  if (!defines_dst && !uses_all) return du;

  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const std::string& c = chunks[i];
    const bool is_dst = defines_dst && i == 0;
    if (is_memory_chunk(c)) {
      // Address registers are always read; lea never touches memory.
      for (const auto& r : registers_in(c)) du.uses.insert(r);
      if (m == "lea") continue;
      if (is_dst)
        du.defs.insert(memory_key(c));
      else
        du.uses.insert(memory_key(c));
    } else {
      for (const auto& r : registers_in(c)) {
        if (is_dst) {
          du.defs.insert(r);
          if (m != "mov" && m != "lea") du.uses.insert(r);  // read-modify-write
        } else {
          du.uses.insert(r);
        }
      }
    }
  }
  return du;
}

}  // namespace

FlowGraph build_ddg(const Function& f, const FlowGraph& cfg) {
  FlowGraph ddg;
  ddg.type = EdgeType::Ddg;
  ddg.nodes = cfg.nodes;

  struct BlockInfo {
    std::set<std::string> defs;          // all locations written
    std::set<std::string> upward_uses;   // used before any local def
  };
  std::map<std::string, BlockInfo> info;
  for (const auto& b : f.blocks) {
    BlockInfo bi;
    for (const auto& ins : b.instructions) {
      DefUse du = instruction_def_use(ins);
      for (const auto& u : du.uses)
        if (!bi.defs.count(u)) bi.upward_uses.insert(u);
      for (const auto& d : du.defs) bi.defs.insert(d);
      if (ins.mnemonic == "call")
        for (const auto& r : kCallerSaved) bi.defs.insert(r);
    }
    info[b.id] = std::move(bi);
  }

  // Reaching definitions over (location, defining block) pairs.
  using DefSet = std::set<std::pair<std::string, std::string>>;
  std::map<std::string, DefSet> in, out;
  Adjacency preds = predecessors_of(cfg);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& b : f.blocks) {
      DefSet new_in;
      for (const auto& p : preds[b.id])
        for (const auto& d : out[p]) new_in.insert(d);
      DefSet new_out;
      const BlockInfo& bi = info[b.id];
      for (const auto& [loc, src] : new_in)
        if (!bi.defs.count(loc)) new_out.insert({loc, src});
      for (const auto& loc : bi.defs) new_out.insert({loc, b.id});
      if (new_in != in[b.id] || new_out != out[b.id]) {
        in[b.id] = std::move(new_in);
        out[b.id] = std::move(new_out);
        changed = true;
      }
    }
  }

  for (const auto& b : f.blocks)
    for (const auto& [loc, src] : in[b.id])
      if (src != b.id && info[b.id].upward_uses.count(loc))
        ddg.edges.insert({src, b.id});
  return ddg;
}

Cpg merge_cpg(const FlowGraph& cfg, const FlowGraph& cdg, const FlowGraph& ddg,
              const Function& f, const std::set<std::string>& patch_blocks) {
  const FlowGraph* graphs[3] = {&cfg, &cdg, &ddg};
  for (const auto* g : graphs)
    for (const auto& [s, d] : g->edges)
      if (!cfg.nodes.count(s) || !cfg.nodes.count(d))
        throw InconsistentUniverse("edge endpoint outside CFG node set: " + s +
                                   " -> " + d);
  Cpg cpg;
  for (const auto& b : f.blocks) {
    if (!cfg.nodes.count(b.id)) continue;
    CpgNode n;
    n.id = b.id;
    n.kind = patch_blocks.count(b.id) ? NodeKind::PatchRelated
                                      : NodeKind::Context;
    n.block = b;
    cpg.nodes.push_back(std::move(n));
  }
  std::map<std::pair<std::string, std::string>, std::array<bool, 3>> merged;
  for (int k = 0; k < kEdgeTypeCount; ++k)
    for (const auto& e : graphs[k]->edges) merged[e][k] = true;
  for (const auto& [e, types] : merged)
    cpg.edges.push_back({e.first, e.second, types});
  return cpg;
}

Cpg slice_cpg(const Cpg& cpg, const std::array<FlowGraph, 3>& graphs,
              const std::set<std::string>& patch_blocks, bool cfg_internal_only,
              const SliceConfig& config) {
  if (cfg_internal_only) {
    Cpg out;
    for (const auto& n : cpg.nodes)
      if (patch_blocks.count(n.id)) {
        CpgNode m = n;
        m.kind = NodeKind::PatchRelated;
        out.nodes.push_back(std::move(m));
      }
    for (const auto& [s, d] : graphs[0].edges)
      if (patch_blocks.count(s) && patch_blocks.count(d))
        out.edges.push_back({s, d, {true, false, false}});
    return out;
  }

  Adjacency succs, preds;
  for (const auto& g : graphs)
    for (const auto& [s, d] : g.edges) {
      succs[s].push_back(d);
      preds[d].push_back(s);
    }

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::seconds(config.time_limit_seconds);
  std::set<std::string> kept(patch_blocks.begin(), patch_blocks.end());
  std::set<std::string> for_slices, back_slices;
  std::set<std::string> frontier = kept;
  bool truncated = false;
  for (int round = 0; round < config.stride_n && !frontier.empty(); ++round) {
    if (std::chrono::steady_clock::now() > deadline) {
      truncated = true;
      break;
    }
    std::set<std::string> next;
    for (const auto& v : frontier) {
      for (const auto& s : succs[v]) {
        for_slices.insert(s);
        if (kept.insert(s).second) next.insert(s);
      }
      for (const auto& p : preds[v]) {
        back_slices.insert(p);
        if (kept.insert(p).second) next.insert(p);
      }
    }
    frontier = std::move(next);
  }

  Cpg out;
  out.truncated = truncated;
  for (const auto& n : cpg.nodes)
    if (kept.count(n.id)) {
      CpgNode m = n;
      m.kind = patch_blocks.count(n.id) ? NodeKind::PatchRelated
                                        : NodeKind::Context;
      out.nodes.push_back(std::move(m));
    }
  for (const auto& e : cpg.edges)
    if (kept.count(e.src) && kept.count(e.dst)) out.edges.push_back(e);
  return out;
}

const CpgNode* Cpg::find_node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

std::string cpg_to_dot(const Cpg& cpg, const std::string& name) {
  std::ostringstream out;
  out << "digraph \"" << name << "\" {\n";
  for (const auto& n : cpg.nodes) {
    out << "  \"" << n.id << "\"";
    if (n.kind == NodeKind::PatchRelated)
      out << " [style=filled, fillcolor=orange]";
    else
      out << " [style=filled, fillcolor=lightyellow]";
    out << ";\n";
  }
  static const char* kStyles[3] = {"solid", "dashed", "dotted"};
  for (const auto& e : cpg.edges) {
    int first = 0;
    while (first < 2 && !e.types[first]) ++first;
    std::string label;
    static const char* kNames[3] = {"CFG", "CDG", "DDG"};
    for (int k = 0; k < 3; ++k)
      if (e.types[k]) label += std::string(label.empty() ? "" : "|") + kNames[k];
    out << "  \"" << e.src << "\" -> \"" << e.dst << "\" [style=" << kStyles[first]
        << ", label=\"" << label << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace bingo
