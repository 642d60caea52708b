// SPDX-License-Identifier: Apache-2.0
//
// Siamese multi-edge-type graph convolutional classifier: forward, exact
// reverse-mode gradients, Adam training, and evaluation metrics.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bingo/nn_util.hpp"
#include "bingo/rng.hpp"

namespace bingo {

inline constexpr int kGnnLayers = 3;
inline constexpr int kChannels = 3;          // CFG, CDG, DDG
inline constexpr int kChannelWidth = 64;     // per-channel output columns
inline constexpr int kConcatWidth = kChannels * kChannelWidth;  // 192
inline constexpr int kGnnInputDim = 128;

// One side of a twin: sparse directed adjacency per channel plus the node
// embedding matrix.
struct SideGraph {
  std::array<std::vector<std::pair<int, int>>, kChannels> edges;
  Matrix nodes;  // n x input_dim

  void validate() const;
};

enum class PatchLabel { NonSecurity = 0, Security = 1 };

struct TwinSample {
  SideGraph pre;
  SideGraph post;
  std::optional<PatchLabel> label;
  std::string commit_id;
};

using GraphBatch = std::vector<TwinSample>;

struct GnnShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyGnnGraph : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shared by both siamese branches: the twins always reference this one set.
struct ModelParams {
  std::array<std::array<Matrix, kChannels>, kGnnLayers> conv;  // W_h^(k)
  Matrix mlp_w1, mlp_b1;  // 384 x 128, 1 x 128
  Matrix mlp_w2, mlp_b2;  // 128 x 64, 1 x 64
  Matrix mlp_w3, mlp_b3;  // 64 x 2, 1 x 2

  static ModelParams init(int input_dim, Rng& rng);
  ModelParams zeros_like() const;
  TensorRegistry registry();
};

struct TrainConfig {
  int batch_size = 128;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double lr = 0.001;
  double dropout = 0.5;
  int max_epochs = 50;
  std::uint64_t seed = 0;
  double adam_eps = 1e-8;
};

// One convolution layer: per channel k, sigma((A^(k)+I) N W_k), concatenated.
// Row i aggregates i's out-neighbors plus itself; sigma = ReLU.
Matrix conv_forward(const SideGraph& g, const Matrix& nodes,
                    const std::array<Matrix, kChannels>& weights);

// Column-wise mean over nodes.
Eigen::RowVectorXd pool(const Matrix& nodes);

// Softmax probabilities (p0, p1); p1 is the Security probability. Dropout
// (inverted scaling) is applied to the concatenated twin embedding in
// train_mode only.
std::pair<double, double> model_forward(const ModelParams& params,
                                        const TwinSample& twin,
                                        bool train_mode, Rng& rng);

// Mean cross-entropy over the batch with exact analytic gradients. The
// dropout mask per sample is drawn from rng (train mode) or absent.
double loss_and_grads(const ModelParams& params, const GraphBatch& batch,
                      const TrainConfig& cfg, bool train_mode, Rng& rng,
                      ModelParams& grads);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

TrainHistory train(ModelParams& params, const GraphBatch& train_set,
                   const GraphBatch& test_set, const TrainConfig& cfg);

struct Metrics {
  std::optional<double> accuracy, f1, fnr, fpr;
  long tp = 0, fn = 0, fp = 0, tn = 0;
};

Metrics metrics_from_confusion(long tp, long fn, long fp, long tn);
Metrics evaluate(const ModelParams& params, const GraphBatch& entries);

std::string save_gnn(const ModelParams& params, int input_dim,
                     std::uint64_t seed, int epoch);
ModelParams load_gnn(const std::string& blob);

}  // namespace bingo
