// SPDX-License-Identifier: Apache-2.0

#include "bingo/patch_diff.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "bingo/gnn.hpp"
#include "bingo/rng.hpp"

namespace bingo {

namespace {

using Json = nlohmann::ordered_json;

void collect_debug_blocks(
    const Program& prog, const std::set<int>& changed_lines,
    std::set<std::pair<std::string, std::string>>& out) {
  if (changed_lines.empty()) return;
  for (const auto& f : prog.functions) {
    bool touched = false;
    long annotated = 0, total = 0;
    for (const auto& b : f.blocks) {
      for (const auto& ins : b.instructions) {
        ++total;
        if (ins.src_line) ++annotated;
        if (ins.src_line && changed_lines.count(*ins.src_line)) {
          out.insert({f.name, b.id});
          touched = true;
        }
      }
    }
    if (touched && annotated * 2 < total)
      throw MissingDebugInfo("function '" + f.name +
                             "': fewer than half the instructions carry "
                             "source line annotations");
  }
}

std::multiset<std::uint64_t> function_fingerprints(const Function& f) {
  std::multiset<std::uint64_t> out;
  for (const auto& b : f.blocks) out.insert(block_fingerprint(b));
  return out;
}

}  // namespace

PatchBlockSet patch_blocks_from_debug(const Program& pre, const Program& post,
                                      const std::set<int>& changed_pre_lines,
                                      const std::set<int>& changed_post_lines) {
  PatchBlockSet pbs;
  pbs.provenance = Provenance::DebugLines;
  collect_debug_blocks(pre, changed_pre_lines, pbs.pre_blocks);
  collect_debug_blocks(post, changed_post_lines, pbs.post_blocks);
  return pbs;
}

PatchBlockSet patch_blocks_by_diff(const Program& pre, const Program& post) {
  PatchBlockSet pbs;
  pbs.provenance = Provenance::FingerprintDiff;
  bool any_common = false;
  for (const auto& fpre : pre.functions) {
    const Function* fpost = post.find_function(fpre.name);
    if (!fpost) continue;
    any_common = true;
    if (function_fingerprints(fpre) == function_fingerprints(*fpost))
      continue;  // unchanged function
    std::set<std::uint64_t> pre_fps, post_fps;
    for (const auto& b : fpre.blocks) pre_fps.insert(block_fingerprint(b));
    for (const auto& b : fpost->blocks) post_fps.insert(block_fingerprint(b));
    for (const auto& b : fpre.blocks)
      if (!post_fps.count(block_fingerprint(b)))
        pbs.pre_blocks.insert({fpre.name, b.id});
    for (const auto& b : fpost->blocks)
      if (!pre_fps.count(block_fingerprint(b)))
        pbs.post_blocks.insert({fpre.name, b.id});
  }
  if (!any_common)
    throw NoCommonFunctions("no function names shared between sides");
  return pbs;
}

namespace {

Cpg build_function_cpg(const Function& f, const std::set<std::string>& patch,
                       const SliceConfig& slice_cfg) {
  const FlowGraph cfg = build_cfg(f);
  const FlowGraph cdg = derive_cdg(cfg);
  const FlowGraph ddg = build_ddg(f, cfg);
  Cpg merged = merge_cpg(cfg, cdg, ddg, f, patch);
  if (patch.empty()) return merged;  // context-only side: keep the whole CPG
  return slice_cpg(merged, {cfg, cdg, ddg}, patch, false, slice_cfg);
}

}  // namespace

TwinBuildResult build_twin_graph(const Program& pre, const Program& post,
                                 const PatchBlockSet& pbs,
                                 const SliceConfig& slice_cfg,
                                 std::optional<TwinLabel> label) {
  std::map<std::string, std::pair<std::set<std::string>, std::set<std::string>>>
      by_function;
  for (const auto& [fn, bb] : pbs.pre_blocks) by_function[fn].first.insert(bb);
  for (const auto& [fn, bb] : pbs.post_blocks)
    by_function[fn].second.insert(bb);

  TwinBuildResult result;
  for (const auto& [fn, sides] : by_function) {
    const Function* fpre = pre.find_function(fn);
    const Function* fpost = post.find_function(fn);
    if (!fpre || !fpost) {
      result.warnings.push_back("function '" + fn +
                                "' missing on one side, skipped");
      continue;
    }
    try {
      TwinGraph twin;
      twin.function = fn;
      twin.commit_id = post.commit_id.empty() ? pre.commit_id : post.commit_id;
      twin.label = label;
      twin.pre_graph = build_function_cpg(*fpre, sides.first, slice_cfg);
      twin.post_graph = build_function_cpg(*fpost, sides.second, slice_cfg);
      result.twins.push_back(std::move(twin));
    } catch (const std::exception& e) {
      result.warnings.push_back("function '" + fn + "': " + e.what());
    }
  }
  return result;
}

std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>>
split_dataset(const DatasetManifest& m) {
  if (m.entries.empty()) throw EmptyDataset("split_dataset: no entries");
  std::map<std::string, std::vector<const ManifestEntry*>> by_commit;
  for (const auto& e : m.entries) by_commit[e.commit_id].push_back(&e);
  if (by_commit.size() < 2)
    throw SingleCommit("split_dataset: need at least two commits");

  std::vector<std::string> commits;
  for (const auto& [c, v] : by_commit) commits.push_back(c);
  Rng rng(m.seed);
  rng.shuffle(commits);

  const double target = m.split_ratio * static_cast<double>(m.entries.size());
  std::vector<std::string> train_commits, test_commits;
  std::size_t train_count = 0;
  for (const auto& c : commits) {
    if (static_cast<double>(train_count) < target) {
      train_commits.push_back(c);
      train_count += by_commit[c].size();
    } else {
      test_commits.push_back(c);
    }
  }
  if (test_commits.empty()) {
    // Demote the smallest train commit so the test side is never empty.
    auto smallest = std::min_element(
        train_commits.begin(), train_commits.end(),
        [&](const std::string& a, const std::string& b) {
          return std::make_pair(by_commit[a].size(), a) <
                 std::make_pair(by_commit[b].size(), b);
        });
    test_commits.push_back(*smallest);
    train_commits.erase(smallest);
  }

  std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> out;
  for (const auto& e : m.entries) {
    const bool in_train = std::find(train_commits.begin(), train_commits.end(),
                                    e.commit_id) != train_commits.end();
    (in_train ? out.first : out.second).push_back(e);
  }
  return out;
}

namespace {

const char* token_kind_name(TokenKind k) {
  switch (k) {
    case TokenKind::Opcode: return "opcode";
    case TokenKind::Register: return "register";
    case TokenKind::Constant: return "constant";
    case TokenKind::ReservedWord: return "reserved_word";
    case TokenKind::Operator: return "operator";
    case TokenKind::Special: return "special";
  }
  return "opcode";
}

TokenKind token_kind_from_name(const std::string& s) {
  if (s == "opcode") return TokenKind::Opcode;
  if (s == "register") return TokenKind::Register;
  if (s == "constant") return TokenKind::Constant;
  if (s == "reserved_word") return TokenKind::ReservedWord;
  if (s == "operator") return TokenKind::Operator;
  if (s == "special") return TokenKind::Special;
  throw std::runtime_error("unknown token kind '" + s + "'");
}

Json graph_to_json(const Cpg& g) {
  Json nodes = Json::array();
  for (const auto& n : g.nodes) {
    Json tokens = Json::array();
    for (const auto& ins : n.block.instructions) {
      Json instr = Json::array();
      for (const auto& t : ins.tokens)
        instr.push_back(Json::array({t.text, token_kind_name(t.kind)}));
      tokens.push_back(instr);
    }
    nodes.push_back({{"id", n.id},
                     {"kind", n.kind == NodeKind::PatchRelated ? "patch"
                                                               : "context"},
                     {"tokens", tokens}});
  }
  Json edges = Json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"src", e.src},
                     {"dst", e.dst},
                     {"types", Json::array({e.types[0], e.types[1], e.types[2]})}});
  return Json{{"nodes", nodes}, {"edges", edges}};
}

Cpg graph_from_json(const Json& j) {
  Cpg g;
  for (const auto& n : j.at("nodes")) {
    CpgNode node;
    node.id = n.at("id").get<std::string>();
    node.kind = n.at("kind").get<std::string>() == "patch"
                    ? NodeKind::PatchRelated
                    : NodeKind::Context;
    node.block.id = node.id;
    for (const auto& instr : n.at("tokens")) {
      Instruction ins;
      for (const auto& t : instr)
        ins.tokens.push_back(
            {t.at(0).get<std::string>(), token_kind_from_name(t.at(1))});
      if (!ins.tokens.empty()) ins.mnemonic = ins.tokens.front().text;
      node.block.instructions.push_back(std::move(ins));
    }
    g.nodes.push_back(std::move(node));
  }
  for (const auto& e : j.at("edges")) {
    CpgEdge edge;
    edge.src = e.at("src").get<std::string>();
    edge.dst = e.at("dst").get<std::string>();
    for (int k = 0; k < 3; ++k) edge.types[k] = e.at("types").at(k).get<bool>();
    g.edges.push_back(std::move(edge));
  }
  return g;
}

}  // namespace

std::string twin_to_json(const TwinGraph& twin) {
  Json j;
  j["version"] = "bingo-twin/1";
  j["commit_id"] = twin.commit_id;
  j["function"] = twin.function;
  if (twin.label)
    j["label"] = *twin.label == TwinLabel::Security ? "security" : "non_security";
  else
    j["label"] = nullptr;
  j["pre"] = graph_to_json(twin.pre_graph);
  j["post"] = graph_to_json(twin.post_graph);
  return j.dump(2) + "\n";
}

TwinGraph twin_from_json(const std::string& text) {
  const Json j = Json::parse(text);
  if (j.at("version").get<std::string>() != "bingo-twin/1")
    throw std::runtime_error("unsupported twin-graph version");
  TwinGraph twin;
  twin.commit_id = j.at("commit_id").get<std::string>();
  twin.function = j.at("function").get<std::string>();
  if (!j.at("label").is_null()) {
    const std::string l = j.at("label").get<std::string>();
    if (l == "security")
      twin.label = TwinLabel::Security;
    else if (l == "non_security")
      twin.label = TwinLabel::NonSecurity;
    else
      throw std::runtime_error("unknown label '" + l + "'");
  }
  twin.pre_graph = graph_from_json(j.at("pre"));
  twin.post_graph = graph_from_json(j.at("post"));
  return twin;
}

std::string manifest_to_json(const DatasetManifest& m) {
  Json entries = Json::array();
  for (const auto& e : m.entries) {
    Json je = {{"path", e.path}, {"commit_id", e.commit_id}};
    if (e.label)
      je["label"] = *e.label == TwinLabel::Security ? "security" : "non_security";
    else
      je["label"] = nullptr;
    entries.push_back(je);
  }
  Json j = {{"entries", entries},
            {"split_ratio", m.split_ratio},
            {"seed", m.seed}};
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  const Json j = Json::parse(text);
  DatasetManifest m;
  m.split_ratio = j.value("split_ratio", 0.8);
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    entry.path = e.at("path").get<std::string>();
    entry.commit_id = e.at("commit_id").get<std::string>();
    if (e.contains("label") && !e.at("label").is_null()) {
      const std::string l = e.at("label").get<std::string>();
      entry.label = l == "security" ? TwinLabel::Security : TwinLabel::NonSecurity;
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

}  // namespace bingo
