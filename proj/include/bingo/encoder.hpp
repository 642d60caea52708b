// SPDX-License-Identifier: Apache-2.0
//
// Configurable transformer encoder over instruction token sequences, with the
// MLM / CWP / DUP pretraining heads and exact reverse-mode gradients.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bingo/embedding.hpp"
#include "bingo/nn_util.hpp"
#include "bingo/rng.hpp"

namespace bingo {

struct EncoderConfig {
  int layers = 2;        // paper-scale 12 supported, not default
  int heads = 4;         // paper-scale 8
  int embed_dim = kEmbedDim;
  int vocab_size = 0;
  int max_seq = 64;
  int max_segments = 32;
  double mask_prob = 0.15;
  int cwp_window = 2;

  void validate() const;
};

struct EncoderLayerParams {
  Matrix wq, wk, wv, wo;          // d x d
  Matrix bq, bk, bv, bo;          // 1 x d
  Matrix ln1_g, ln1_b, ln2_g, ln2_b;  // 1 x d
  Matrix w1, b1;                  // d x 4d, 1 x 4d
  Matrix w2, b2;                  // 4d x d, 1 x d
};

struct EncoderParams {
  EncoderConfig cfg;
  Matrix tok_embed;  // vocab x d
  Matrix seg_embed;  // max_segments x d
  Matrix pos_embed;  // max_seq x d
  std::vector<EncoderLayerParams> layers;
  Matrix mlm_w, mlm_b;  // d x vocab, 1 x vocab
  Matrix cwp_w, cwp_b;  // d x 2, 1 x 2
  Matrix dup_w, dup_b;  // d x 2, 1 x 2

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
  EncoderParams zeros_like() const;

  TensorRegistry registry();
};

// Final hidden states (seq_len x d). Sequences longer than max_seq are
// truncated; trailing [PAD] positions are excluded from attention keys.
// bypass_final_norm skips the last layer's output layer-norm (test mode).
Matrix encoder_hidden(const EncoderParams& params,
                      const std::vector<int>& token_ids,
                      const std::vector<int>& segment_ids,
                      bool bypass_final_norm = false);

// Mean of the final hidden states over non-pad positions.
NodeEmbedding encode_block(const EncoderConfig& cfg, const EncoderParams& params,
                           const BasicBlock& block, const Vocabulary& vocab,
                           bool bypass_final_norm = false);

// Losses with full gradients. `grads` (when non-null) must be zeroed
// zeros_like() storage; contributions are accumulated into it.
double mlm_loss(const EncoderParams& params, const PretrainBatch& batch,
                EncoderParams* grads);
// CWP and DUP share the sequence layout: [CLS] tokens_a tokens_b with
// segment ids 0 and 1; the [CLS] hidden state feeds a binary head.
double pair_loss(const EncoderParams& params, const Vocabulary& vocab,
                 const InstrPair& pair, PretrainTask task,
                 EncoderParams* grads);

// One Adam step over a shuffled mix of the three tasks drawn from `corpus`.
// Returns the mean step loss.
struct PretrainStats {
  std::vector<double> step_losses;
};
PretrainStats pretrain(EncoderParams& params, const Vocabulary& vocab,
                       const std::vector<BasicBlock>& corpus, int steps,
                       double lr, Rng& rng, PretrainTask task = PretrainTask::MLM);

std::string save_encoder(const EncoderParams& params);
EncoderParams load_encoder(const std::string& blob);

}  // namespace bingo
