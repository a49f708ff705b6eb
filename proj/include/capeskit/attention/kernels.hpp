#pragma once

#include <vector>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tensor.hpp"
#include "capeskit/attention/tokens.hpp"

namespace capeskit::attention {

/// One independent softmax problem: `queries` attend over `keys` (row indices
/// into the query and key matrices). Across a group list, query sets must be
/// disjoint and key sets must be disjoint.
struct AttentionGroup {
  std::vector<int> queries;
  std::vector<int> keys;
};

/// One group per (domain, w x w patch window).
std::vector<AttentionGroup> window_groups(const std::vector<TokenTag>& tags, const AttentionConfig& cfg);

/// One group per patch location, holding the tokens of every domain there.
/// Throws DomainError if a location does not carry exactly one token per stream.
std::vector<AttentionGroup> crossvar_groups(const std::vector<TokenTag>& tags, const AttentionConfig& cfg);

/// Row-wise layer normalization (eps = 1e-5).
Matrix layer_norm(const Matrix& x, const LayerNormParams& p);

/// Multi-head softmax(Q K^T / sqrt(dh)) V evaluated independently per group.
/// Parallel over (group, head) pairs; results do not depend on thread count.
Matrix grouped_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                         const std::vector<AttentionGroup>& groups, int heads);

/// x + O(attn(LN(x))) with window groups.
TokenSequence window_attention(const TokenSequence& x, const AttentionWeights& w, const AttentionConfig& cfg);

/// x + O(attn(LN(x))) with cross-variable groups.
TokenSequence cross_variable_attention(const TokenSequence& x, const AttentionWeights& w,
                                       const AttentionConfig& cfg);

enum class AnchorMode {
  two_phase,       ///< aggregate into the anchors, then broadcast back
  broadcast_only,  ///< use w.anchors directly as the anchor states
};

/// Aggregate-then-broadcast attention through m anchors; O(L m d) per head.
TokenSequence anchor_attention(const TokenSequence& x, const AnchorWeights& w, const AttentionConfig& cfg,
                               AnchorMode mode = AnchorMode::two_phase);

/// Anchor states after the aggregate phase (m x d).
Matrix aggregate_anchors(const Matrix& normed_tokens, const AnchorWeights& w, int heads);

}  // namespace capeskit::attention
