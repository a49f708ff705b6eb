#pragma once

#include <set>
#include <string>
#include <string_view>

#include "capeskit/config_file.hpp"

namespace capeskit::attention {

/// How domains become tokens. sequence_concat gives each domain its own
/// tokens; channel_stack folds all domains into the channels of one token per
/// patch (the ablation layout).
enum class Layout { sequence_concat, channel_stack };

std::string_view to_string(Layout l);
Layout parse_layout(std::string_view s);

struct AttentionConfig {
  int embed_dim = 32;
  int num_heads = 4;
  int num_layers = 2;
  int patch_size = 8;
  int window_size = 2;  ///< in patches, per axis
  int num_anchors = 8;
  int num_domains = 3;  ///< atmosphere, ocean, land
  int channels = 4;     ///< PCA channels per domain
  int nlat = 32;
  int nlon = 32;
  int mlp_hidden = 64;
  double latent_noise_sigma = 0.0;
  int noise_layer = -1;  ///< -1 selects the last layer
  Layout layout = Layout::sequence_concat;

  /// Throws ConfigError on any divisibility or range violation.
  void validate() const;

  int head_dim() const { return embed_dim / num_heads; }
  int patch_rows() const { return nlat / patch_size; }
  int patch_cols() const { return nlon / patch_size; }
  int patches() const { return patch_rows() * patch_cols(); }
  /// Token streams: one per domain under sequence_concat, one otherwise.
  int streams() const { return layout == Layout::sequence_concat ? num_domains : 1; }
  int seq_len() const { return streams() * patches(); }
  /// Channels feeding one token's patch.
  int stream_channels() const {
    return layout == Layout::sequence_concat ? channels : channels * num_domains;
  }
  int effective_noise_layer() const { return noise_layer < 0 ? num_layers - 1 : noise_layer; }
};

/// Keys understood by attention_config_from.
const std::set<std::string>& attention_config_keys();

/// Overrides fields of `base` from kv (unknown keys are left to the caller).
AttentionConfig attention_config_from(const KeyValueConfig& kv, AttentionConfig base = {});
void put_attention_config(const AttentionConfig& cfg, KeyValueConfig& kv);

}  // namespace capeskit::attention
