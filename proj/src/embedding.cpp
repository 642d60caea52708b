// SPDX-License-Identifier: Apache-2.0

#include "bingo/embedding.hpp"

#include <cmath>
#include <sstream>

namespace bingo {

namespace {

// FNV-1a with a fixed non-zero seed; bucket assignment must not change
// across runs or platforms.
std::uint64_t hash_token(const std::string& s) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

NodeEmbedding hashed_embed(const BasicBlock& block, int dim) {
  NodeEmbedding e;
  e.vector.assign(dim, 0.0);
  for (const auto& ins : block.instructions)
    for (const auto& t : ins.tokens)
      e.vector[hash_token(t.text) % dim] += 1.0;
  double norm = 0.0;
  for (double v : e.vector) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : e.vector) v /= norm;
  return e;
}

EdgeTypeVector edge_type_vector(const CpgEdge& edge) { return edge.types; }

Vocabulary::Vocabulary() {
  for (const char* s : {"[PAD]", "[UNK]", "[MASK]", "[CLS]"}) add(s);
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const { return tokens_.at(id); }

void Vocabulary::add_program(const Program& p) {
  for (const auto& f : p.functions)
    for (const auto& b : f.blocks)
      for (const auto& ins : b.instructions)
        for (const auto& t : ins.tokens) add(t.text);
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  Vocabulary v;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  static const char* kFixed[4] = {"[PAD]", "[UNK]", "[MASK]", "[CLS]"};
  while (std::getline(in, line)) {
    if (lineno < 4) {
      if (line != kFixed[lineno])
        throw std::runtime_error("vocabulary line " + std::to_string(lineno) +
                                 " must be " + kFixed[lineno]);
    } else {
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < 4) throw std::runtime_error("vocabulary missing sentinel rows");
  return v;
}

PretrainBatch make_mlm_batch(const std::vector<int>& token_ids,
                             const std::vector<int>& segment_ids,
                             double mask_prob, const Vocabulary& vocab,
                             Rng& rng) {
  if (token_ids.empty()) throw EmptySequence("make_mlm_batch: empty sequence");
  (void)vocab;
  PretrainBatch batch;
  batch.task = PretrainTask::MLM;
  batch.token_ids = token_ids;
  batch.segment_ids = segment_ids;
  batch.position_ids.resize(token_ids.size());
  for (std::size_t i = 0; i < token_ids.size(); ++i)
    batch.position_ids[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (rng.bernoulli(mask_prob)) {
      batch.mlm_targets.push_back({static_cast<int>(i), token_ids[i]});
      batch.token_ids[i] = Vocabulary::kMask;
    }
  }
  if (batch.mlm_targets.empty()) {
    const int pos = static_cast<int>(rng.uniform_int(token_ids.size()));
    batch.mlm_targets.push_back({pos, token_ids[pos]});
    batch.token_ids[pos] = Vocabulary::kMask;
  }
  return batch;
}

CwpPairs make_cwp_pairs(const std::vector<Instruction>& instructions,
                        int window, Rng& rng) {
  const int n = static_cast<int>(instructions.size());
  if (n < 2) throw TooShort("make_cwp_pairs: need at least 2 instructions");
  if (window < 1) throw TooShort("make_cwp_pairs: window must be positive");
  CwpPairs out;
  std::vector<std::pair<int, int>> far_pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (j - i <= window)
        out.pairs.push_back({&instructions[i], &instructions[j], 1});
      else
        far_pairs.push_back({i, j});
    }
  if (far_pairs.empty()) {
    out.positives_only = true;
    return out;
  }
  const std::size_t positives = out.pairs.size();
  for (std::size_t k = 0; k < positives; ++k) {
    const auto& [i, j] = far_pairs[rng.uniform_int(far_pairs.size())];
    out.pairs.push_back({&instructions[i], &instructions[j], 0});
  }
  return out;
}

std::vector<InstrPair> make_dup_pairs(const std::vector<Instruction>& instructions,
                                      int count, Rng& rng) {
  const int n = static_cast<int>(instructions.size());
  if (n < 2) throw TooShort("make_dup_pairs: need at least 2 instructions");
  std::vector<InstrPair> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    int i = static_cast<int>(rng.uniform_int(n));
    int j = static_cast<int>(rng.uniform_int(n - 1));
    if (j >= i) ++j;
    if (i > j) std::swap(i, j);
    if (rng.bernoulli(0.5))
      out.push_back({&instructions[i], &instructions[j], 1});
    else
      out.push_back({&instructions[j], &instructions[i], 0});
  }
  return out;
}

void block_token_sequence(const BasicBlock& block, const Vocabulary& vocab,
                          std::vector<int>& token_ids,
                          std::vector<int>& segment_ids) {
  token_ids.clear();
  segment_ids.clear();
  int seg = 0;
  for (const auto& ins : block.instructions) {
    for (const auto& t : ins.tokens) {
      token_ids.push_back(vocab.id_of(t.text));
      segment_ids.push_back(seg);
    }
    ++seg;
  }
}

}  // namespace bingo
