#include "capeskit/attention/flops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "blocks.hpp"
#include "capeskit/attention/kernels.hpp"
#include "capeskit/attention/reference.hpp"
#include "capeskit/error.hpp"

namespace capeskit::attention {

FlopCount flop_count(const AttentionConfig& cfg, std::uint64_t length) {
  cfg.validate();
  const std::uint64_t d = static_cast<std::uint64_t>(cfg.embed_dim);
  const std::uint64_t layers = static_cast<std::uint64_t>(cfg.num_layers);
  const std::uint64_t w2 = static_cast<std::uint64_t>(cfg.window_size) * cfg.window_size;
  const std::uint64_t per_location = static_cast<std::uint64_t>(cfg.streams());
  const std::uint64_t m = static_cast<std::uint64_t>(cfg.num_anchors);
  FlopCount f;
  f.window = layers * 2 * length * w2 * d;
  f.crossvar = layers * 2 * length * per_location * d;
  f.anchor = layers * 4 * length * m * d;
  f.dense = layers * 2 * length * length * d;
  return f;
}

std::string format_flop_rows(const FlopCount& f, std::uint64_t length) {
  const std::string l = std::to_string(length);
  return "window," + l + "," + std::to_string(f.window) + "\n" + "crossvar," + l + "," + std::to_string(f.crossvar) +
         "\n" + "anchor," + l + "," + std::to_string(f.anchor) + "\n" + "trilevel," + l + "," +
         std::to_string(f.trilevel()) + "\n" + "dense," + l + "," + std::to_string(f.dense) + "\n";
}

AttentionConfig config_for_length(const AttentionConfig& base, int length) {
  const int streams = base.streams();
  if (length < 1 || length % streams != 0)
    throw ConfigError("length " + std::to_string(length) + " is not a multiple of the stream count");
  const int n = length / streams;
  const int w = base.window_size;
  int best_rows = 0;
  for (int rows = w; rows <= n; rows += w) {
    if (n % rows != 0 || (n / rows) % w != 0) continue;
    if (best_rows == 0 || std::abs(rows - n / rows) < std::abs(best_rows - n / best_rows)) best_rows = rows;
  }
  if (best_rows == 0)
    throw ConfigError("length " + std::to_string(length) + " cannot be tiled into whole attention windows");
  AttentionConfig cfg = base;
  cfg.nlat = best_rows * base.patch_size;
  cfg.nlon = (n / best_rows) * base.patch_size;
  cfg.validate();
  return cfg;
}

namespace {

Matrix random_tokens(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
  return x;
}

template <class Fn>
double median_seconds(int repeats, Fn&& fn) {
  std::vector<double> t;
  for (int r = 0; r < std::max(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

double time_trilevel(const AttentionConfig& cfg, int repeats, std::uint64_t seed) {
  AttentionConfig one = cfg;
  one.num_layers = 1;
  const ModelParams p = ModelParams::init(one, seed);
  const auto& layer = p.layers.front();
  const auto tags = token_tags(one);
  const auto wg = window_groups(tags, one);
  const auto cg = crossvar_groups(tags, one);
  const Matrix x0 = random_tokens(one.seq_len(), one.embed_dim, seed);
  double sink = 0.0;
  const double t = median_seconds(repeats, [&] {
    Matrix x = detail::self_attention_forward(x0, layer.window, wg, one.num_heads, nullptr);
    x = detail::self_attention_forward(x, layer.crossvar, cg, one.num_heads, nullptr);
    x = detail::anchor_forward(x, layer.anchor, one.num_heads, AnchorMode::two_phase, nullptr);
    sink += x(0, 0);
  });
  if (!std::isfinite(sink)) throw DomainError("timing run produced non-finite values");
  return t;
}

double time_dense(const AttentionConfig& cfg, int repeats, std::uint64_t seed) {
  AttentionConfig one = cfg;
  one.num_layers = 1;
  const ModelParams p = ModelParams::init(one, seed);
  const Matrix x0 = random_tokens(one.seq_len(), one.embed_dim, seed);
  const AttentionMask mask = AttentionMask::full(one.seq_len());
  double sink = 0.0;
  const double t = median_seconds(repeats, [&] {
    sink += dense_attention_oracle(x0, mask, p.layers.front().window, one.num_heads)(0, 0);
  });
  if (!std::isfinite(sink)) throw DomainError("timing run produced non-finite values");
  return t;
}

}  // namespace capeskit::attention
