#pragma once

#include <vector>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tensor.hpp"
#include "capeskit/attention/tokens.hpp"

namespace capeskit::attention {

/// Row-major L x L boolean mask; mask[i * L + j] lets token i attend to j.
struct AttentionMask {
  int length = 0;
  std::vector<unsigned char> allow;

  bool operator()(int i, int j) const { return allow[static_cast<std::size_t>(i) * length + j] != 0; }
  static AttentionMask full(int length);
  static AttentionMask identity(int length);
};

/// Same domain and same w x w patch window.
AttentionMask window_mask(const std::vector<TokenTag>& tags, const AttentionConfig& cfg);

/// Same patch location.
AttentionMask location_mask(const std::vector<TokenTag>& tags);

/// Serial masked dense multi-head attention with pre-norm and residual:
/// x + O(softmax_masked(Q K^T / sqrt(dh)) V). Plain loops, O(L^2 d); kept as
/// the ground truth for the grouped kernels. Every row must allow at least one key.
Matrix dense_attention_oracle(const Matrix& x, const AttentionMask& mask, const AttentionWeights& w, int heads);

}  // namespace capeskit::attention
