// SPDX-License-Identifier: Apache-2.0

#include "bingo/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace bingo {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNegInf = -1e30;

struct LnCache {
  Matrix xhat;          // L x d
  Eigen::VectorXd inv_std;  // L
};

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  LnCache& cache) {
  const long L = x.rows(), d = x.cols();
  Matrix y(L, d);
  cache.xhat.resize(L, d);
  cache.inv_std.resize(L);
  for (long i = 0; i < L; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mu) * inv;
    y.row(i) = cache.xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
  return y;
}

// dL/dx for layer_norm; accumulates parameter grads.
Matrix layer_norm_backward(const Matrix& dy, const LnCache& cache,
                           const Matrix& gamma, Matrix& dgamma, Matrix& dbeta) {
  const long L = dy.rows(), d = dy.cols();
  Matrix dx(L, d);
  for (long i = 0; i < L; ++i) {
    dgamma.row(0) += dy.row(i).cwiseProduct(cache.xhat.row(i));
    dbeta.row(0) += dy.row(i);
    const Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) =
        cache.inv_std(i) *
        (dxhat.array() - m1 - cache.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

struct LayerCache {
  Matrix x_in;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, L x L
  Matrix ctx;                 // concatenated head outputs
  Matrix sum1, x_mid;
  LnCache ln1;
  Matrix z1, h;  // FFN pre-activation / activation
  Matrix sum2;
  LnCache ln2;
  bool ln2_applied = true;
};

struct ForwardCache {
  std::vector<int> token_ids, segment_ids;
  std::vector<bool> is_pad;
  Matrix x0;
  std::vector<LayerCache> layers;
  Matrix x_final;
};

ForwardCache run_forward(const EncoderParams& p, const std::vector<int>& tids,
                         const std::vector<int>& sids, bool bypass_final_norm) {
  const EncoderConfig& cfg = p.cfg;
  const long L = std::min<long>(static_cast<long>(tids.size()), cfg.max_seq);
  if (L == 0) throw EmptySequence("encoder: empty sequence");
  const long d = cfg.embed_dim;
  const long dh = d / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardCache fc;
  fc.token_ids.assign(tids.begin(), tids.begin() + L);
  fc.segment_ids.assign(sids.begin(), sids.begin() + L);
  fc.is_pad.resize(L);
  fc.x0.resize(L, d);
  for (long i = 0; i < L; ++i) {
    const int tid = fc.token_ids[i];
    const int sid = std::min(fc.segment_ids[i], cfg.max_segments - 1);
    fc.is_pad[i] = tid == Vocabulary::kPad;
    fc.x0.row(i) =
        p.tok_embed.row(tid) + p.seg_embed.row(sid) + p.pos_embed.row(i);
  }

  Matrix x = fc.x0;
  fc.layers.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerCache& lc = fc.layers[l];
    const EncoderLayerParams& lp = p.layers[l];
    lc.x_in = x;
    lc.q = (x * lp.wq).rowwise() + lp.bq.row(0);
    lc.k = (x * lp.wk).rowwise() + lp.bk.row(0);
    lc.v = (x * lp.wv).rowwise() + lp.bv.row(0);
    lc.ctx.resize(L, d);
    lc.probs.resize(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      Matrix scores = qh * kh.transpose() * scale;
      for (long j = 0; j < L; ++j)
        if (fc.is_pad[j]) scores.col(j).setConstant(kNegInf);
      Matrix& probs = lc.probs[h];
      probs.resize(L, L);
      for (long i = 0; i < L; ++i) {
        const double mx = scores.row(i).maxCoeff();
        probs.row(i) = (scores.row(i).array() - mx).exp();
        probs.row(i) /= probs.row(i).sum();
      }
      lc.ctx.middleCols(h * dh, dh) = probs * vh;
    }
    const Matrix attn_out = (lc.ctx * lp.wo).rowwise() + lp.bo.row(0);
    lc.sum1 = lc.x_in + attn_out;
    lc.x_mid = layer_norm(lc.sum1, lp.ln1_g, lp.ln1_b, lc.ln1);
    lc.z1 = (lc.x_mid * lp.w1).rowwise() + lp.b1.row(0);
    lc.h = lc.z1.cwiseMax(0.0);
    const Matrix f = (lc.h * lp.w2).rowwise() + lp.b2.row(0);
    lc.sum2 = lc.x_mid + f;
    lc.ln2_applied = !(bypass_final_norm && l == cfg.layers - 1);
    x = lc.ln2_applied ? layer_norm(lc.sum2, lp.ln2_g, lp.ln2_b, lc.ln2)
                       : lc.sum2;
  }
  fc.x_final = x;
  return fc;
}

// Propagates dL/dx_final down to the embeddings; accumulates into grads.
void run_backward(const EncoderParams& p, const ForwardCache& fc,
                  const Matrix& dx_final, EncoderParams& grads) {
  const EncoderConfig& cfg = p.cfg;
  const long L = fc.x0.rows();
  const long d = cfg.embed_dim;
  const long dh = d / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = dx_final;
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const LayerCache& lc = fc.layers[l];
    const EncoderLayerParams& lp = p.layers[l];
    EncoderLayerParams& lg = grads.layers[l];

    Matrix dsum2 = lc.ln2_applied
                       ? layer_norm_backward(dx, lc.ln2, lp.ln2_g, lg.ln2_g,
                                             lg.ln2_b)
                       : dx;
    Matrix dx_mid = dsum2;  // residual path
    // FFN
    const Matrix& df = dsum2;
    lg.w2 += lc.h.transpose() * df;
    lg.b2.row(0) += df.colwise().sum();
    Matrix dh_act = df * lp.w2.transpose();
    Matrix dz1 = (lc.z1.array() > 0.0).select(dh_act, 0.0);
    lg.w1 += lc.x_mid.transpose() * dz1;
    lg.b1.row(0) += dz1.colwise().sum();
    dx_mid += dz1 * lp.w1.transpose();

    Matrix dsum1 =
        layer_norm_backward(dx_mid, lc.ln1, lp.ln1_g, lg.ln1_g, lg.ln1_b);
    Matrix dx_in = dsum1;  // residual path
    // Attention output projection
    const Matrix& dattn = dsum1;
    lg.wo += lc.ctx.transpose() * dattn;
    lg.bo.row(0) += dattn.colwise().sum();
    Matrix dctx = dattn * lp.wo.transpose();

    Matrix dq = Matrix::Zero(L, d), dk = Matrix::Zero(L, d),
           dv = Matrix::Zero(L, d);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      const Matrix& probs = lc.probs[h];
      const Matrix dctx_h = dctx.middleCols(h * dh, dh);
      Matrix dprobs = dctx_h * vh.transpose();
      dv.middleCols(h * dh, dh) = probs.transpose() * dctx_h;
      Matrix dscores(L, L);
      for (long i = 0; i < L; ++i) {
        const double dot = dprobs.row(i).dot(probs.row(i));
        dscores.row(i) =
            probs.row(i).cwiseProduct((dprobs.row(i).array() - dot).matrix());
      }
      dq.middleCols(h * dh, dh) = dscores * kh * scale;
      dk.middleCols(h * dh, dh) = dscores.transpose() * qh * scale;
    }
    lg.wq += lc.x_in.transpose() * dq;
    lg.bq.row(0) += dq.colwise().sum();
    lg.wk += lc.x_in.transpose() * dk;
    lg.bk.row(0) += dk.colwise().sum();
    lg.wv += lc.x_in.transpose() * dv;
    lg.bv.row(0) += dv.colwise().sum();
    dx_in += dq * lp.wq.transpose() + dk * lp.wk.transpose() +
             dv * lp.wv.transpose();
    dx = std::move(dx_in);
  }
  for (long i = 0; i < L; ++i) {
    const int sid = std::min(fc.segment_ids[i], cfg.max_segments - 1);
    grads.tok_embed.row(fc.token_ids[i]) += dx.row(i);
    grads.seg_embed.row(sid) += dx.row(i);
    grads.pos_embed.row(i) += dx.row(i);
  }
}

// Softmax cross-entropy on one logit row; returns loss, writes dlogits.
double softmax_ce(const Eigen::RowVectorXd& logits, int target,
                  Eigen::RowVectorXd& dlogits) {
  const double mx = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - mx).exp();
  const double z = e.sum();
  dlogits = e / z;
  const double loss = -std::log(dlogits(target));
  dlogits(target) -= 1.0;
  return loss;
}

Matrix randn(long rows, long cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  return m;
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("encoder: layers must be >= 1");
  if (embed_dim % heads != 0)
    throw std::invalid_argument("encoder: embed_dim must divide by heads");
  if (vocab_size < 4) throw std::invalid_argument("encoder: vocab too small");
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.embed_dim;
  EncoderParams p;
  p.cfg = cfg;
  const double s = 0.02;
  p.tok_embed = randn(cfg.vocab_size, d, s, rng);
  p.seg_embed = randn(cfg.max_segments, d, s, rng);
  p.pos_embed = randn(cfg.max_seq, d, s, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    EncoderLayerParams lp;
    lp.wq = randn(d, d, s, rng);
    lp.wk = randn(d, d, s, rng);
    lp.wv = randn(d, d, s, rng);
    lp.wo = randn(d, d, s, rng);
    lp.bq = lp.bk = lp.bv = lp.bo = Matrix::Zero(1, d);
    lp.ln1_g = lp.ln2_g = Matrix::Ones(1, d);
    lp.ln1_b = lp.ln2_b = Matrix::Zero(1, d);
    lp.w1 = randn(d, 4 * d, s, rng);
    lp.b1 = Matrix::Zero(1, 4 * d);
    lp.w2 = randn(4 * d, d, s, rng);
    lp.b2 = Matrix::Zero(1, d);
    p.layers.push_back(std::move(lp));
  }
  p.mlm_w = randn(d, cfg.vocab_size, s, rng);
  p.mlm_b = Matrix::Zero(1, cfg.vocab_size);
  p.cwp_w = randn(d, 2, s, rng);
  p.cwp_b = Matrix::Zero(1, 2);
  p.dup_w = randn(d, 2, s, rng);
  p.dup_b = Matrix::Zero(1, 2);
  return p;
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  auto reg = z.registry();
  for (auto& [name, m] : reg) m->setZero();
  return z;
}

TensorRegistry EncoderParams::registry() {
  TensorRegistry r = {{"tok_embed", &tok_embed},
                      {"seg_embed", &seg_embed},
                      {"pos_embed", &pos_embed}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    EncoderLayerParams& lp = layers[l];
    for (auto& [n, m] : std::initializer_list<std::pair<const char*, Matrix*>>{
             {"wq", &lp.wq},       {"bq", &lp.bq},       {"wk", &lp.wk},
             {"bk", &lp.bk},       {"wv", &lp.wv},       {"bv", &lp.bv},
             {"wo", &lp.wo},       {"bo", &lp.bo},       {"ln1_g", &lp.ln1_g},
             {"ln1_b", &lp.ln1_b}, {"w1", &lp.w1},       {"b1", &lp.b1},
             {"w2", &lp.w2},       {"b2", &lp.b2},       {"ln2_g", &lp.ln2_g},
             {"ln2_b", &lp.ln2_b}})
      r.push_back({pre + n, m});
  }
  r.push_back({"mlm_w", &mlm_w});
  r.push_back({"mlm_b", &mlm_b});
  r.push_back({"cwp_w", &cwp_w});
  r.push_back({"cwp_b", &cwp_b});
  r.push_back({"dup_w", &dup_w});
  r.push_back({"dup_b", &dup_b});
  return r;
}

Matrix encoder_hidden(const EncoderParams& params,
                      const std::vector<int>& token_ids,
                      const std::vector<int>& segment_ids,
                      bool bypass_final_norm) {
  return run_forward(params, token_ids, segment_ids, bypass_final_norm)
      .x_final;
}

NodeEmbedding encode_block(const EncoderConfig& cfg, const EncoderParams& params,
                           const BasicBlock& block, const Vocabulary& vocab,
                           bool bypass_final_norm) {
  std::vector<int> tids, sids;
  block_token_sequence(block, vocab, tids, sids);
  while (static_cast<int>(tids.size()) < cfg.max_seq) {
    tids.push_back(Vocabulary::kPad);
    sids.push_back(0);
  }
  const Matrix hidden =
      encoder_hidden(params, tids, sids, bypass_final_norm);
  NodeEmbedding e;
  e.vector.assign(cfg.embed_dim, 0.0);
  long n = 0;
  for (long i = 0; i < hidden.rows(); ++i) {
    if (tids[i] == Vocabulary::kPad) continue;
    for (int c = 0; c < cfg.embed_dim; ++c) e.vector[c] += hidden(i, c);
    ++n;
  }
  for (double& v : e.vector) v /= static_cast<double>(n);
  return e;
}

double mlm_loss(const EncoderParams& params, const PretrainBatch& batch,
                EncoderParams* grads) {
  ForwardCache fc =
      run_forward(params, batch.token_ids, batch.segment_ids, false);
  const long L = fc.x_final.rows();
  std::vector<std::pair<int, int>> targets;
  for (const auto& t : batch.mlm_targets)
    if (t.first < L) targets.push_back(t);
  if (targets.empty()) throw EmptySequence("mlm_loss: no targets in window");

  double loss = 0.0;
  Matrix dx = Matrix::Zero(L, params.cfg.embed_dim);
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  for (const auto& [pos, orig] : targets) {
    const Eigen::RowVectorXd logits =
        fc.x_final.row(pos) * params.mlm_w + params.mlm_b.row(0);
    Eigen::RowVectorXd dlogits;
    loss += inv_n * softmax_ce(logits, orig, dlogits);
    if (grads) {
      dlogits *= inv_n;
      grads->mlm_w += fc.x_final.row(pos).transpose() * dlogits;
      grads->mlm_b.row(0) += dlogits;
      dx.row(pos) += dlogits * params.mlm_w.transpose();
    }
  }
  if (grads) run_backward(params, fc, dx, *grads);
  return loss;
}

double pair_loss(const EncoderParams& params, const Vocabulary& vocab,
                 const InstrPair& pair, PretrainTask task,
                 EncoderParams* grads) {
  std::vector<int> tids = {Vocabulary::kCls};
  std::vector<int> sids = {0};
  for (const auto& t : pair.a->tokens) {
    tids.push_back(vocab.id_of(t.text));
    sids.push_back(0);
  }
  for (const auto& t : pair.b->tokens) {
    tids.push_back(vocab.id_of(t.text));
    sids.push_back(1);
  }
  ForwardCache fc = run_forward(params, tids, sids, false);
  const Matrix& w = task == PretrainTask::CWP ? params.cwp_w : params.dup_w;
  const Matrix& b = task == PretrainTask::CWP ? params.cwp_b : params.dup_b;
  const Eigen::RowVectorXd logits = fc.x_final.row(0) * w + b.row(0);
  Eigen::RowVectorXd dlogits;
  const double loss = softmax_ce(logits, pair.label, dlogits);
  if (grads) {
    Matrix& gw = task == PretrainTask::CWP ? grads->cwp_w : grads->dup_w;
    Matrix& gb = task == PretrainTask::CWP ? grads->cwp_b : grads->dup_b;
    gw += fc.x_final.row(0).transpose() * dlogits;
    gb.row(0) += dlogits;
    Matrix dx = Matrix::Zero(fc.x_final.rows(), params.cfg.embed_dim);
    dx.row(0) = dlogits * w.transpose();
    run_backward(params, fc, dx, *grads);
  }
  return loss;
}

PretrainStats pretrain(EncoderParams& params, const Vocabulary& vocab,
                       const std::vector<BasicBlock>& corpus, int steps,
                       double lr, Rng& rng, PretrainTask task) {
  if (corpus.empty()) throw EmptySequence("pretrain: empty corpus");
  PretrainStats stats;
  AdamOptimizer adam(lr, 0.9, 0.99, 1e-8);
  auto param_reg = params.registry();
  for (int s = 0; s < steps; ++s) {
    const BasicBlock& block = corpus[rng.uniform_int(corpus.size())];
    EncoderParams grads = params.zeros_like();
    double loss;
    if (task == PretrainTask::MLM) {
      std::vector<int> tids, sids;
      block_token_sequence(block, vocab, tids, sids);
      // Truncate before masking so every target lands inside the window.
      if (tids.size() > static_cast<std::size_t>(params.cfg.max_seq)) {
        tids.resize(params.cfg.max_seq);
        sids.resize(params.cfg.max_seq);
      }
      PretrainBatch batch =
          make_mlm_batch(tids, sids, params.cfg.mask_prob, vocab, rng);
      loss = mlm_loss(params, batch, &grads);
    } else if (task == PretrainTask::CWP) {
      CwpPairs pairs =
          make_cwp_pairs(block.instructions, params.cfg.cwp_window, rng);
      const InstrPair& p = pairs.pairs[rng.uniform_int(pairs.pairs.size())];
      loss = pair_loss(params, vocab, p, task, &grads);
    } else {
      auto pairs = make_dup_pairs(block.instructions, 1, rng);
      loss = pair_loss(params, vocab, pairs[0], task, &grads);
    }
    adam.step(param_reg, grads.registry());
    stats.step_losses.push_back(loss);
  }
  return stats;
}

std::string save_encoder(const EncoderParams& params) {
  EncoderParams copy = params;
  nlohmann::ordered_json meta = {{"layers", params.cfg.layers},
                                 {"heads", params.cfg.heads},
                                 {"embed_dim", params.cfg.embed_dim},
                                 {"vocab_size", params.cfg.vocab_size},
                                 {"max_seq", params.cfg.max_seq},
                                 {"max_segments", params.cfg.max_segments},
                                 {"mask_prob", params.cfg.mask_prob},
                                 {"cwp_window", params.cfg.cwp_window}};
  return save_checkpoint("bingo-enc/1", meta.dump(), copy.registry());
}

EncoderParams load_encoder(const std::string& blob) {
  if (blob.size() < 4) throw std::runtime_error("encoder checkpoint truncated");
  std::uint32_t hlen;
  std::memcpy(&hlen, blob.data(), 4);
  auto header = nlohmann::json::parse(blob.substr(4, hlen));
  auto meta = header.at("meta");
  EncoderConfig cfg;
  cfg.layers = meta.at("layers");
  cfg.heads = meta.at("heads");
  cfg.embed_dim = meta.at("embed_dim");
  cfg.vocab_size = meta.at("vocab_size");
  cfg.max_seq = meta.at("max_seq");
  cfg.max_segments = meta.at("max_segments");
  cfg.mask_prob = meta.at("mask_prob");
  cfg.cwp_window = meta.at("cwp_window");
  Rng rng(0);
  EncoderParams p = EncoderParams::init(cfg, rng);
  load_checkpoint(blob, "bingo-enc/1", p.registry());
  return p;
}

}  // namespace bingo
