// SPDX-License-Identifier: Apache-2.0
//
// Glue between the graph extraction side and the model side: node embedding
// application, TwinGraph -> model sample conversion, and the synthetic
// dataset generator used for desk-scale end-to-end runs.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bingo/embedding.hpp"
#include "bingo/flowgraph.hpp"
#include "bingo/gnn.hpp"
#include "bingo/patch_diff.hpp"

namespace bingo {

using Embedder = std::function<NodeEmbedding(const BasicBlock&)>;

Embedder hashed_embedder(int dim = kEmbedDim);

SideGraph cpg_to_side(const Cpg& cpg, const Embedder& embed);
TwinSample twin_to_sample(const TwinGraph& twin, const Embedder& embed);

// Synthetic twin graphs through the real pipeline: security-like samples add
// a small guard (one conditional plus a short fix block); non-security-like
// samples add a larger straight-line region. Labels alternate; commit ids are
// unique per sample.
std::vector<TwinGraph> generate_synthetic_dataset(int count,
                                                  std::uint64_t seed,
                                                  const SliceConfig& slice_cfg);

}  // namespace bingo
