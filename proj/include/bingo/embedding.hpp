// SPDX-License-Identifier: Apache-2.0
//
// Node and edge attribute embeddings: the deterministic hashed node embedder,
// edge type vectors, the token vocabulary, and pretraining batch builders.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bingo/asm_core.hpp"
#include "bingo/flowgraph.hpp"
#include "bingo/rng.hpp"

namespace bingo {

inline constexpr int kEmbedDim = 128;

struct NodeEmbedding {
  std::vector<double> vector;  // length embed_dim
};

using EdgeTypeVector = std::array<bool, kEdgeTypeCount>;  // (Cfg, Cdg, Ddg)

struct EmptySequence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooShort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bag-of-tokens feature hashing into `dim` buckets, L2-normalized.
// Deterministic; instruction order within the block is irrelevant.
NodeEmbedding hashed_embed(const BasicBlock& block, int dim = kEmbedDim);

EdgeTypeVector edge_type_vector(const CpgEdge& edge);

// Token vocabulary. Ids are line numbers in the vocabulary file; the first
// four entries are fixed sentinels.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kCls = 3;

  Vocabulary();

  int add(const std::string& token);  // idempotent
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void add_program(const Program& p);

  std::string to_text() const;
  static Vocabulary from_text(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

enum class PretrainTask { MLM, CWP, DUP };

struct PretrainBatch {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;   // instruction index per token
  std::vector<int> position_ids;  // 0..len-1
  PretrainTask task = PretrainTask::MLM;
  std::vector<std::pair<int, int>> mlm_targets;  // (position, original id)
  int pair_label = -1;                           // CWP/DUP
};

// Masks each position with probability mask_prob; at least one position is
// always masked.
PretrainBatch make_mlm_batch(const std::vector<int>& token_ids,
                             const std::vector<int>& segment_ids,
                             double mask_prob, const Vocabulary& vocab,
                             Rng& rng);

struct InstrPair {
  const Instruction* a;
  const Instruction* b;
  int label;
};

struct CwpPairs {
  std::vector<InstrPair> pairs;
  bool positives_only = false;  // window covered every pair
};

// Positives: index distance <= window. Negatives: uniform sample of farther
// pairs, count-balanced with the positives.
CwpPairs make_cwp_pairs(const std::vector<Instruction>& instructions,
                        int window, Rng& rng);

// Ordered/swapped instruction pairs with order labels, coin-flipped.
std::vector<InstrPair> make_dup_pairs(const std::vector<Instruction>& instructions,
                                      int count, Rng& rng);

// Flattens a block into (token ids, segment ids) for the encoder.
void block_token_sequence(const BasicBlock& block, const Vocabulary& vocab,
                          std::vector<int>& token_ids,
                          std::vector<int>& segment_ids);

}  // namespace bingo
