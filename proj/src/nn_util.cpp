// SPDX-License-Identifier: Apache-2.0

#include "bingo/nn_util.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

namespace bingo {

void AdamOptimizer::step(const TensorRegistry& params,
                         const TensorRegistry& grads) {
  if (params.size() != grads.size())
    throw std::runtime_error("adam: registry size mismatch");
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].second;
    const Matrix& g = *grads[i].second;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Matrix mhat = m_[i] / bc1;
    const Matrix vhat = v_[i] / bc2;
    p -= (lr_ * mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
  }
}

std::string save_checkpoint(const std::string& format_tag,
                            const std::string& meta_json,
                            const TensorRegistry& params) {
  nlohmann::ordered_json header;
  header["format"] = format_tag;
  header["meta"] = meta_json.empty() ? nlohmann::ordered_json::object()
                                     : nlohmann::ordered_json::parse(meta_json);
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, p] : params)
    tensors.push_back({{"name", name}, {"rows", p->rows()}, {"cols", p->cols()}});
  const std::string htext = header.dump();

  std::string out;
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.append(reinterpret_cast<const char*>(&hlen), 4);
  out += htext;
  for (const auto& [name, p] : params) {
    for (long r = 0; r < p->rows(); ++r)
      for (long c = 0; c < p->cols(); ++c) {
        const float v = static_cast<float>((*p)(r, c));
        out.append(reinterpret_cast<const char*>(&v), 4);
      }
  }
  return out;
}

std::string load_checkpoint(const std::string& blob,
                            const std::string& format_tag,
                            const TensorRegistry& params) {
  if (blob.size() < 4) throw std::runtime_error("checkpoint: truncated");
  std::uint32_t hlen;
  std::memcpy(&hlen, blob.data(), 4);
  if (blob.size() < 4 + hlen) throw std::runtime_error("checkpoint: truncated");
  auto header = nlohmann::json::parse(blob.substr(4, hlen));
  if (header.at("format").get<std::string>() != format_tag)
    throw std::runtime_error("checkpoint: format tag mismatch, expected " +
                             format_tag);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  std::size_t off = 4 + hlen;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].second;
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != params[i].first ||
        t.at("rows").get<long>() != p.rows() ||
        t.at("cols").get<long>() != p.cols())
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" +
                               params[i].first + "'");
    for (long r = 0; r < p.rows(); ++r)
      for (long c = 0; c < p.cols(); ++c) {
        if (off + 4 > blob.size())
          throw std::runtime_error("checkpoint: truncated tensor data");
        float v;
        std::memcpy(&v, blob.data() + off, 4);
        off += 4;
        p(r, c) = v;
      }
  }
  return header.value("meta", nlohmann::json::object()).dump();
}

}  // namespace bingo
