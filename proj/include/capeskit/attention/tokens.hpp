#pragma once

#include <vector>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tensor.hpp"
#include "capeskit/grid.hpp"

namespace capeskit::attention {

/// Domain order along the sequence axis.
enum Domain : int { atmosphere = 0, ocean = 1, land = 2 };

struct TokenTag {
  int domain = 0;
  int row = 0;  ///< patch row
  int col = 0;  ///< patch column
  bool operator==(const TokenTag&) const = default;
};

struct TokenSequence {
  Matrix tokens;  ///< L x d
  std::vector<TokenTag> tags;

  int length() const { return static_cast<int>(tokens.rows()); }
};

/// Per-domain stacks of PCA channels: inputs[v][c] is channel c of domain v.
using ModelInputs = std::vector<std::vector<GridField>>;

/// Tags in sequence order: domain-major, then patch row, then patch column.
std::vector<TokenTag> token_tags(const AttentionConfig& cfg);

/// Flattened patches of one stream, one row per patch, entries ordered
/// (pixel row, pixel col, channel). Under channel_stack the channel index runs
/// over domain-major (domain, channel) pairs.
Matrix patch_matrix(const ModelInputs& inputs, const AttentionConfig& cfg, int stream);

void check_inputs(const ModelInputs& inputs, const AttentionConfig& cfg);

/// Patch, embed and concatenate the streams.
TokenSequence tokenize(const ModelInputs& inputs, const ModelParams& params, const AttentionConfig& cfg);

}  // namespace capeskit::attention
