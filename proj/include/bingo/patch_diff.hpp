// SPDX-License-Identifier: Apache-2.0
//
// Patch-related block extraction (debug-line and fingerprint-diff paths),
// TwinGraph assembly, dataset manifests, and commit-disjoint splits.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bingo/asm_core.hpp"
#include "bingo/flowgraph.hpp"

namespace bingo {

enum class Provenance { DebugLines, FingerprintDiff };

struct PatchBlockSet {
  // (function name, block id)
  std::set<std::pair<std::string, std::string>> pre_blocks;
  std::set<std::pair<std::string, std::string>> post_blocks;
  Provenance provenance = Provenance::FingerprintDiff;

  bool empty() const { return pre_blocks.empty() && post_blocks.empty(); }
};

enum class TwinLabel { Security, NonSecurity };

struct TwinGraph {
  Cpg pre_graph;
  Cpg post_graph;
  std::optional<TwinLabel> label;
  std::string commit_id;
  std::string function;
};

struct ManifestEntry {
  std::string path;
  std::string commit_id;
  std::optional<TwinLabel> label;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
};

struct MissingDebugInfo : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoCommonFunctions : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingleCommit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A block is patch-related iff one of its instructions' src_line is in the
// corresponding changed-line set.
PatchBlockSet patch_blocks_from_debug(const Program& pre, const Program& post,
                                      const std::set<int>& changed_pre_lines,
                                      const std::set<int>& changed_post_lines);

// Fingerprint diff: functions paired by name; identical functions filtered;
// within the rest, blocks whose fingerprint matches the other side are
// filtered out.
PatchBlockSet patch_blocks_by_diff(const Program& pre, const Program& post);

struct TwinBuildResult {
  std::vector<TwinGraph> twins;
  std::vector<std::string> warnings;  // per-function failures, skipped
};

// One TwinGraph per function touched on either side. A side without patch
// blocks in that function contributes its full (unsliced) CPG as context.
TwinBuildResult build_twin_graph(const Program& pre, const Program& post,
                                 const PatchBlockSet& pbs,
                                 const SliceConfig& slice_cfg,
                                 std::optional<TwinLabel> label);

// Commit-disjoint split: commits shuffled by the manifest seed, assigned to
// train until the train fraction reaches split_ratio. No commit straddles.
std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>>
split_dataset(const DatasetManifest& m);

// Canonical "bingo-twin/1" schema.
std::string twin_to_json(const TwinGraph& twin);
TwinGraph twin_from_json(const std::string& text);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

}  // namespace bingo
