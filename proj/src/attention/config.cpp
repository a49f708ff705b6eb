#include "capeskit/attention/config.hpp"

#include <string>

#include "capeskit/error.hpp"
#include "capeskit/io.hpp"

namespace capeskit::attention {

std::string_view to_string(Layout l) {
  return l == Layout::sequence_concat ? "sequence_concat" : "channel_stack";
}

Layout parse_layout(std::string_view s) {
  if (s == "sequence_concat") return Layout::sequence_concat;
  if (s == "channel_stack") return Layout::channel_stack;
  throw ConfigError("unknown layout '" + std::string(s) + "'");
}

void AttentionConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(embed_dim >= 1 && num_heads >= 1, "embed_dim and num_heads must be positive");
  need(embed_dim % num_heads == 0, "embed_dim must be divisible by num_heads");
  need(num_layers >= 0, "num_layers must be >= 0");
  need(patch_size >= 1 && window_size >= 1, "patch_size and window_size must be positive");
  need(nlat >= 1 && nlon >= 1, "grid must be non-empty");
  need(nlat % patch_size == 0 && nlon % patch_size == 0, "grid must be divisible by patch_size");
  need(patch_rows() % window_size == 0 && patch_cols() % window_size == 0,
       "patch grid must be divisible by window_size");
  need(num_anchors >= 1, "num_anchors must be >= 1");
  need(num_domains >= 1 && channels >= 1, "num_domains and channels must be positive");
  need(mlp_hidden >= 1, "mlp_hidden must be positive");
  need(latent_noise_sigma >= 0.0, "latent_noise_sigma must be >= 0");
  need(noise_layer >= -1 && noise_layer < (num_layers > 0 ? num_layers : 1),
       "noise_layer must be -1 or a valid layer index");
}

const std::set<std::string>& attention_config_keys() {
  static const std::set<std::string> keys = {
      "embed_dim", "num_heads", "num_layers", "patch_size", "window_size", "num_anchors", "num_domains",
      "channels", "nlat", "nlon", "mlp_hidden", "latent_noise_sigma", "noise_layer", "layout"};
  return keys;
}

AttentionConfig attention_config_from(const KeyValueConfig& kv, AttentionConfig c) {
  auto i = [&](const char* key, int& field) { field = static_cast<int>(kv.get_int(key, field)); };
  i("embed_dim", c.embed_dim);
  i("num_heads", c.num_heads);
  i("num_layers", c.num_layers);
  i("patch_size", c.patch_size);
  i("window_size", c.window_size);
  i("num_anchors", c.num_anchors);
  i("num_domains", c.num_domains);
  i("channels", c.channels);
  i("nlat", c.nlat);
  i("nlon", c.nlon);
  i("mlp_hidden", c.mlp_hidden);
  i("noise_layer", c.noise_layer);
  c.latent_noise_sigma = kv.get_double("latent_noise_sigma", c.latent_noise_sigma);
  c.layout = parse_layout(kv.get_string("layout", std::string(to_string(c.layout))));
  return c;
}

void put_attention_config(const AttentionConfig& c, KeyValueConfig& kv) {
  kv.set("embed_dim", std::to_string(c.embed_dim));
  kv.set("num_heads", std::to_string(c.num_heads));
  kv.set("num_layers", std::to_string(c.num_layers));
  kv.set("patch_size", std::to_string(c.patch_size));
  kv.set("window_size", std::to_string(c.window_size));
  kv.set("num_anchors", std::to_string(c.num_anchors));
  kv.set("num_domains", std::to_string(c.num_domains));
  kv.set("channels", std::to_string(c.channels));
  kv.set("nlat", std::to_string(c.nlat));
  kv.set("nlon", std::to_string(c.nlon));
  kv.set("mlp_hidden", std::to_string(c.mlp_hidden));
  kv.set("noise_layer", std::to_string(c.noise_layer));
  kv.set("latent_noise_sigma", format_double(c.latent_noise_sigma));
  kv.set("layout", std::string(to_string(c.layout)));
}

}  // namespace capeskit::attention
