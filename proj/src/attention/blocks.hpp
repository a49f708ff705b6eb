#pragma once

// Forward/backward pairs for the backbone's building blocks. Each forward
// optionally fills a cache; the matching backward consumes it, accumulates
// parameter gradients into `grad` and returns the gradient w.r.t. its input.

#include <vector>

#include "capeskit/attention/kernels.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tensor.hpp"

namespace capeskit::attention::detail {

inline constexpr double kLayerNormEps = 1e-5;

struct LnCache {
  Matrix xhat;
  Eigen::VectorXd rstd;
};

Matrix ln_forward(const Matrix& x, const LayerNormParams& p, LnCache* cache);
Matrix ln_backward(const Matrix& dy, const LnCache& c, const LayerNormParams& p, LayerNormParams& grad);

Matrix linear_forward(const Matrix& x, const Linear& l);
Matrix linear_backward(const Matrix& dy, const Matrix& x, const Linear& l, Linear& grad);

struct GroupedCache {
  std::vector<Matrix> probs;  ///< index group * heads + head
};

Matrix grouped_forward(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<AttentionGroup>& groups,
                       int heads, GroupedCache* cache);
/// dq, dk, dv are resized and overwritten.
void grouped_backward(const Matrix& dout, const Matrix& q, const Matrix& k, const Matrix& v,
                      const std::vector<AttentionGroup>& groups, int heads, const GroupedCache& cache, Matrix& dq,
                      Matrix& dk, Matrix& dv);

struct SelfAttentionCache {
  LnCache ln;
  Matrix u, q, k, v, attn;
  GroupedCache grouped;
};

Matrix self_attention_forward(const Matrix& x, const AttentionWeights& w, const std::vector<AttentionGroup>& groups,
                              int heads, SelfAttentionCache* cache);
Matrix self_attention_backward(const Matrix& dy, const AttentionWeights& w, const std::vector<AttentionGroup>& groups,
                               int heads, const SelfAttentionCache& c, AttentionWeights& grad);

struct AnchorCache {
  LnCache ln;
  Matrix u, qa, k1, v1, states, q2, k2, v2, attn;
  GroupedCache aggregate, broadcast;
};

Matrix anchor_forward(const Matrix& x, const AnchorWeights& w, int heads, AnchorMode mode, AnchorCache* cache);
Matrix anchor_backward(const Matrix& dy, const AnchorWeights& w, int heads, AnchorMode mode, const AnchorCache& c,
                       AnchorWeights& grad);

struct MlpCache {
  LnCache ln;
  Matrix u, h, g;
};

Matrix mlp_forward(const Matrix& x, const MlpWeights& w, MlpCache* cache);
Matrix mlp_backward(const Matrix& dy, const MlpWeights& w, const MlpCache& c, MlpWeights& grad);

/// Single group: every query attends to every key.
std::vector<AttentionGroup> all_to_all(int queries, int keys);

}  // namespace capeskit::attention::detail
