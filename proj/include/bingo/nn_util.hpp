// SPDX-License-Identifier: Apache-2.0
//
// Shared training machinery: an Adam optimizer over a named tensor registry
// and the versioned checkpoint container (JSON header + float32 tensors).

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bingo {

using Matrix = Eigen::MatrixXd;

// Named views over a parameter set; grads use the same registry order.
using TensorRegistry = std::vector<std::pair<std::string, Matrix*>>;

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // params and grads must align entry by entry.
  void step(const TensorRegistry& params, const TensorRegistry& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Serializes the registry as: u32 header length, JSON header bytes, then each
// tensor row-major float32 in registry order. The header records the format
// tag, tensor names/shapes, and caller-supplied metadata.
std::string save_checkpoint(const std::string& format_tag,
                            const std::string& meta_json,
                            const TensorRegistry& params);

// Loads into pre-shaped tensors; throws on tag/shape mismatch.
// Returns the embedded metadata JSON.
std::string load_checkpoint(const std::string& blob,
                            const std::string& format_tag,
                            const TensorRegistry& params);

}  // namespace bingo
