#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/tensor.hpp"

namespace capeskit::attention {

/// y = x w + b, with w (in x out) and b (1 x out).
struct Linear {
  Matrix w;
  Matrix b;
};

struct LayerNormParams {
  Matrix gamma;  ///< 1 x d
  Matrix beta;   ///< 1 x d
};

/// Pre-norm multi-head self-attention weights, shared by the window,
/// cross-variable and dense oracle paths.
struct AttentionWeights {
  LayerNormParams norm;
  Linear q, k, v, o;
};

/// Aggregate phase: anchors query the tokens. Broadcast phase: tokens query
/// the updated anchor states.
struct AnchorWeights {
  LayerNormParams norm;
  Matrix anchors;  ///< m x d
  Linear agg_q, agg_k, agg_v;
  Linear bc_q, bc_k, bc_v, bc_o;
};

struct MlpWeights {
  LayerNormParams norm;
  Linear fc1, fc2;
};

struct LayerParams {
  AttentionWeights window;
  AttentionWeights crossvar;
  AnchorWeights anchor;
  MlpWeights mlp;
};

struct ModelParams {
  std::vector<Linear> embed;  ///< one patch embedding per token stream
  std::vector<LayerParams> layers;
  Linear decoder;  ///< d -> p*p, applied to the first stream's tokens

  /// Uniform(-1/sqrt(d), 1/sqrt(d)) projections and anchors, zero biases and
  /// norm offsets, unit norm scales. Deterministic in `seed`.
  static ModelParams init(const AttentionConfig& cfg, std::uint64_t seed);
  static ModelParams zeros_like(const ModelParams& p);
};

struct TensorRef {
  std::string name;
  Matrix* tensor;
};

struct ConstTensorRef {
  std::string name;
  const Matrix* tensor;
};

/// Every tensor in a fixed traversal order with a stable dotted name.
std::vector<TensorRef> tensors(ModelParams& p);
std::vector<ConstTensorRef> tensors(const ModelParams& p);
std::size_t parameter_count(const ModelParams& p);

/// Throws ConfigError if any tensor shape disagrees with cfg.
void check_shapes(const ModelParams& p, const AttentionConfig& cfg);

}  // namespace capeskit::attention
