// SPDX-License-Identifier: Apache-2.0

#include "bingo/gnn.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

namespace bingo {

namespace {

// Y[i] = X[i] + sum over i's out-neighbors j of X[j]   ((A+I)·X, row-source)
Matrix aggregate(const std::vector<std::pair<int, int>>& edges,
                 const Matrix& x) {
  Matrix y = x;
  for (const auto& [s, d] : edges) y.row(s) += x.row(d);
  return y;
}

// Transpose of aggregate for the backward pass.
void aggregate_backward(const std::vector<std::pair<int, int>>& edges,
                        const Matrix& dy, Matrix& dx) {
  dx += dy;
  for (const auto& [s, d] : edges) dx.row(d) += dy.row(s);
}

Matrix randn(long rows, long cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  return m;
}

struct SideCache {
  // Per layer: input X, per-channel aggregated input and pre-activation.
  struct Layer {
    Matrix x_in;
    std::array<Matrix, kChannels> agg;
    std::array<Matrix, kChannels> pre;
  };
  std::array<Layer, kGnnLayers> layers;
  Matrix x_out;                // n x 192 after the last conv
  Eigen::RowVectorXd pooled;   // 1 x 192
};

SideCache side_forward(const ModelParams& p, const SideGraph& g) {
  if (g.nodes.rows() == 0) throw EmptyGnnGraph("side graph has no nodes");
  g.validate();
  SideCache c;
  Matrix x = g.nodes;
  for (int h = 0; h < kGnnLayers; ++h) {
    auto& lc = c.layers[h];
    lc.x_in = x;
    Matrix out(x.rows(), kConcatWidth);
    for (int k = 0; k < kChannels; ++k) {
      const Matrix& w = p.conv[h][k];
      if (x.cols() != w.rows())
        throw GnnShapeError("conv layer " + std::to_string(h) +
                            ": node width " + std::to_string(x.cols()) +
                            " vs weight rows " + std::to_string(w.rows()));
      lc.agg[k] = aggregate(g.edges[k], x);
      lc.pre[k] = lc.agg[k] * w;
      out.middleCols(k * kChannelWidth, kChannelWidth) =
          lc.pre[k].cwiseMax(0.0);
    }
    x = std::move(out);
  }
  c.x_out = x;
  c.pooled = pool(c.x_out);
  return c;
}

// dL/d(pooled) -> parameter grads (node embeddings are inputs, not trained).
void side_backward(const ModelParams& p, const SideGraph& g,
                   const SideCache& c, const Eigen::RowVectorXd& dpooled,
                   ModelParams& grads) {
  const long n = c.x_out.rows();
  Matrix dx = Matrix::Zero(n, kConcatWidth);
  dx.rowwise() += dpooled / static_cast<double>(n);  // mean-pool backward
  for (int h = kGnnLayers - 1; h >= 0; --h) {
    const auto& lc = c.layers[h];
    Matrix dx_in = Matrix::Zero(lc.x_in.rows(), lc.x_in.cols());
    for (int k = 0; k < kChannels; ++k) {
      Matrix dpre = dx.middleCols(k * kChannelWidth, kChannelWidth);
      dpre = (lc.pre[k].array() > 0.0).select(dpre, 0.0);
      grads.conv[h][k] += lc.agg[k].transpose() * dpre;
      Matrix dagg = dpre * p.conv[h][k].transpose();
      aggregate_backward(g.edges[k], dagg, dx_in);
    }
    dx = std::move(dx_in);
  }
}

struct ForwardResult {
  SideCache pre, post;
  Eigen::RowVectorXd concat;       // 1 x 384 after dropout
  Eigen::RowVectorXd drop_mask;    // scale factors, 1 x 384
  Eigen::RowVectorXd z1, h1, z2, h2;  // MLP intermediates
  Eigen::RowVectorXd probs;        // 1 x 2
};

ForwardResult full_forward(const ModelParams& p, const TwinSample& twin,
                           bool train_mode, double dropout, Rng& rng) {
  ForwardResult r;
  r.pre = side_forward(p, twin.pre);
  r.post = side_forward(p, twin.post);
  Eigen::RowVectorXd concat(2 * kConcatWidth);
  concat << r.pre.pooled, r.post.pooled;
  r.drop_mask = Eigen::RowVectorXd::Ones(concat.size());
  if (train_mode && dropout > 0.0) {
    const double keep = 1.0 - dropout;
    for (long i = 0; i < concat.size(); ++i)
      r.drop_mask(i) = rng.bernoulli(dropout) ? 0.0 : 1.0 / keep;
  }
  r.concat = concat.cwiseProduct(r.drop_mask);
  r.z1 = r.concat * p.mlp_w1 + p.mlp_b1.row(0);
  r.h1 = r.z1.cwiseMax(0.0);
  r.z2 = r.h1 * p.mlp_w2 + p.mlp_b2.row(0);
  r.h2 = r.z2.cwiseMax(0.0);
  const Eigen::RowVectorXd logits = r.h2 * p.mlp_w3 + p.mlp_b3.row(0);
  const double mx = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - mx).exp();
  r.probs = e / e.sum();
  return r;
}

void full_backward(const ModelParams& p, const TwinSample& twin,
                   const ForwardResult& r, const Eigen::RowVectorXd& dlogits,
                   ModelParams& grads) {
  grads.mlp_w3 += r.h2.transpose() * dlogits;
  grads.mlp_b3.row(0) += dlogits;
  Eigen::RowVectorXd dh2 = dlogits * p.mlp_w3.transpose();
  Eigen::RowVectorXd dz2 =
      (r.z2.array() > 0.0).select(dh2.array(), 0.0).matrix();
  grads.mlp_w2 += r.h1.transpose() * dz2;
  grads.mlp_b2.row(0) += dz2;
  Eigen::RowVectorXd dh1 = dz2 * p.mlp_w2.transpose();
  Eigen::RowVectorXd dz1 =
      (r.z1.array() > 0.0).select(dh1.array(), 0.0).matrix();
  grads.mlp_w1 += r.concat.transpose() * dz1;
  grads.mlp_b1.row(0) += dz1;
  Eigen::RowVectorXd dconcat = dz1 * p.mlp_w1.transpose();
  dconcat = dconcat.cwiseProduct(r.drop_mask);
  side_backward(p, twin.pre, r.pre, dconcat.head(kConcatWidth), grads);
  side_backward(p, twin.post, r.post, dconcat.tail(kConcatWidth), grads);
}

}  // namespace

void SideGraph::validate() const {
  const int n = static_cast<int>(nodes.rows());
  for (const auto& chan : edges)
    for (const auto& [s, d] : chan)
      if (s < 0 || s >= n || d < 0 || d >= n)
        throw GnnShapeError("adjacency endpoint out of range");
  if (!nodes.allFinite()) throw GnnShapeError("non-finite node embedding");
}

ModelParams ModelParams::init(int input_dim, Rng& rng) {
  ModelParams p;
  for (int h = 0; h < kGnnLayers; ++h) {
    const int in = h == 0 ? input_dim : kConcatWidth;
    const double s = std::sqrt(2.0 / in);
    for (int k = 0; k < kChannels; ++k) p.conv[h][k] = randn(in, kChannelWidth, s, rng);
  }
  const int concat2 = 2 * kConcatWidth;
  p.mlp_w1 = randn(concat2, 128, std::sqrt(2.0 / concat2), rng);
  p.mlp_b1 = Matrix::Zero(1, 128);
  p.mlp_w2 = randn(128, 64, std::sqrt(2.0 / 128), rng);
  p.mlp_b2 = Matrix::Zero(1, 64);
  p.mlp_w3 = randn(64, 2, std::sqrt(2.0 / 64), rng);
  p.mlp_b3 = Matrix::Zero(1, 2);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  auto reg = z.registry();
  for (auto& [name, m] : reg) m->setZero();
  return z;
}

TensorRegistry ModelParams::registry() {
  TensorRegistry r;
  for (int h = 0; h < kGnnLayers; ++h)
    for (int k = 0; k < kChannels; ++k)
      r.push_back({"conv" + std::to_string(h) + "_" + std::to_string(k),
                   &conv[h][k]});
  r.push_back({"mlp_w1", &mlp_w1});
  r.push_back({"mlp_b1", &mlp_b1});
  r.push_back({"mlp_w2", &mlp_w2});
  r.push_back({"mlp_b2", &mlp_b2});
  r.push_back({"mlp_w3", &mlp_w3});
  r.push_back({"mlp_b3", &mlp_b3});
  return r;
}

Matrix conv_forward(const SideGraph& g, const Matrix& nodes,
                    const std::array<Matrix, kChannels>& weights) {
  if (nodes.rows() == 0) throw EmptyGnnGraph("conv_forward: no nodes");
  Matrix out(nodes.rows(), kChannels * weights[0].cols());
  for (int k = 0; k < kChannels; ++k) {
    if (nodes.cols() != weights[k].rows())
      throw GnnShapeError("conv_forward: shape mismatch");
    const Matrix m = aggregate(g.edges[k], nodes) * weights[k];
    out.middleCols(k * weights[k].cols(), weights[k].cols()) = m.cwiseMax(0.0);
  }
  return out;
}

Eigen::RowVectorXd pool(const Matrix& nodes) {
  if (nodes.rows() == 0) throw EmptyGnnGraph("pool: empty graph");
  return nodes.colwise().mean();
}

std::pair<double, double> model_forward(const ModelParams& params,
                                        const TwinSample& twin,
                                        bool train_mode, Rng& rng) {
  const double dropout = 0.5;
  ForwardResult r = full_forward(params, twin, train_mode, dropout, rng);
  return {r.probs(0), r.probs(1)};
}

double loss_and_grads(const ModelParams& params, const GraphBatch& batch,
                      const TrainConfig& cfg, bool train_mode, Rng& rng,
                      ModelParams& grads) {
  if (batch.empty()) throw EmptyDataset("loss_and_grads: empty batch");
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& twin : batch) {
    if (!twin.label) throw EmptyDataset("loss_and_grads: unlabeled sample");
    const int target = static_cast<int>(*twin.label);
    ForwardResult r = full_forward(params, twin, train_mode, cfg.dropout, rng);
    loss += -std::log(std::max(r.probs(target), 1e-300)) * inv_n;
    Eigen::RowVectorXd dlogits = r.probs;
    dlogits(target) -= 1.0;
    dlogits *= inv_n;
    full_backward(params, twin, r, dlogits, grads);
  }
  return loss;
}

TrainHistory train(ModelParams& params, const GraphBatch& train_set,
                   const GraphBatch& test_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw EmptyDataset("train: empty training set");
  TrainHistory history;
  Rng rng(cfg.seed);
  AdamOptimizer adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  auto reg = params.registry();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      GraphBatch batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(train_set[order[i]]);
      ModelParams grads = params.zeros_like();
      const double loss =
          loss_and_grads(params, batch, cfg, true, rng, grads);
      adam.step(reg, grads.registry());
      epoch_loss += loss * static_cast<double>(batch.size());
      seen += static_cast<long>(batch.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(seen);
    if (!test_set.empty()) {
      const Metrics m = evaluate(params, test_set);
      rec.test_accuracy = m.accuracy.value_or(0.0);
    }
    history.epochs.push_back(rec);
  }
  return history;
}

Metrics metrics_from_confusion(long tp, long fn, long fp, long tn) {
  Metrics m;
  m.tp = tp;
  m.fn = fn;
  m.fp = fp;
  m.tn = tn;
  const long total = tp + fn + fp + tn;
  if (total > 0) m.accuracy = static_cast<double>(tp + tn) / total;
  if (2 * tp + fp + fn > 0)
    m.f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
  if (tp + fn > 0) m.fnr = static_cast<double>(fn) / static_cast<double>(tp + fn);
  if (fp + tn > 0) m.fpr = static_cast<double>(fp) / static_cast<double>(fp + tn);
  return m;
}

Metrics evaluate(const ModelParams& params, const GraphBatch& entries) {
  long tp = 0, fn = 0, fp = 0, tn = 0;
  long labeled = 0;
  Rng rng(0);  // unused in eval mode
  for (const auto& twin : entries) {
    if (!twin.label) continue;
    ++labeled;
    const auto [p0, p1] = model_forward(params, twin, false, rng);
    const bool predicted_security = p1 >= 0.5;
    const bool is_security = *twin.label == PatchLabel::Security;
    if (is_security)
      (predicted_security ? tp : fn)++;
    else
      (predicted_security ? fp : tn)++;
  }
  if (labeled == 0) throw EmptyDataset("evaluate: no labeled entries");
  return metrics_from_confusion(tp, fn, fp, tn);
}

std::string save_gnn(const ModelParams& params, int input_dim,
                     std::uint64_t seed, int epoch) {
  ModelParams copy = params;
  nlohmann::ordered_json meta = {{"input_dim", input_dim},
                                 {"channel_width", kChannelWidth},
                                 {"seed", seed},
                                 {"epoch", epoch}};
  return save_checkpoint("bingo-gnn/1", meta.dump(), copy.registry());
}

ModelParams load_gnn(const std::string& blob) {
  if (blob.size() < 4) throw std::runtime_error("gnn checkpoint truncated");
  std::uint32_t hlen;
  std::memcpy(&hlen, blob.data(), 4);
  auto header = nlohmann::json::parse(blob.substr(4, hlen));
  const int input_dim = header.at("meta").at("input_dim");
  Rng rng(0);
  ModelParams p = ModelParams::init(input_dim, rng);
  load_checkpoint(blob, "bingo-gnn/1", p.registry());
  return p;
}

}  // namespace bingo
