#include "capeskit/attention/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "blocks.hpp"
#include "capeskit/attention/kernels.hpp"
#include "capeskit/error.hpp"

namespace capeskit::attention {

namespace {

struct LayerCache {
  detail::SelfAttentionCache window, crossvar;
  detail::AnchorCache anchor;
  detail::MlpCache mlp;
};

struct ForwardCache {
  std::vector<Matrix> patches;
  std::vector<LayerCache> layers;
  Matrix decoder_in;
};

struct Groups {
  std::vector<AttentionGroup> window, crossvar;
};

Groups make_groups(const std::vector<TokenTag>& tags, const AttentionConfig& cfg) {
  return {window_groups(tags, cfg), crossvar_groups(tags, cfg)};
}

void add_latent_noise(Matrix& x, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += dist(rng);
}

TokenSequence run_encoder(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                          std::optional<std::uint64_t> latent_seed, ForwardCache* cache) {
  check_shapes(params, cfg);
  TokenSequence x = tokenize(inputs, params, cfg);
  const Groups groups = make_groups(x.tags, cfg);
  const int heads = cfg.num_heads;
  const bool noisy = latent_seed.has_value() && cfg.latent_noise_sigma > 0.0;
  const int noise_at = cfg.effective_noise_layer();

  if (cache) {
    cache->patches.clear();
    for (int s = 0; s < cfg.streams(); ++s) cache->patches.push_back(patch_matrix(inputs, cfg, s));
    cache->layers.assign(static_cast<std::size_t>(cfg.num_layers), LayerCache{});
  }
  if (noisy && noise_at < 0) add_latent_noise(x.tokens, cfg.latent_noise_sigma, *latent_seed);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    LayerCache* lc = cache ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;
    x.tokens = detail::self_attention_forward(x.tokens, lp.window, groups.window, heads, lc ? &lc->window : nullptr);
    x.tokens =
        detail::self_attention_forward(x.tokens, lp.crossvar, groups.crossvar, heads, lc ? &lc->crossvar : nullptr);
    x.tokens = detail::anchor_forward(x.tokens, lp.anchor, heads, AnchorMode::two_phase, lc ? &lc->anchor : nullptr);
    x.tokens = detail::mlp_forward(x.tokens, lp.mlp, lc ? &lc->mlp : nullptr);
    if (noisy && l == noise_at) add_latent_noise(x.tokens, cfg.latent_noise_sigma, *latent_seed);
  }
  if (cache) cache->decoder_in = x.tokens.topRows(cfg.patches());
  return x;
}

std::vector<double> decode_values(const ModelParams& params, const Matrix& tokens, const AttentionConfig& cfg) {
  const Matrix z = detail::linear_forward(tokens.topRows(cfg.patches()), params.decoder);
  const int p = cfg.patch_size, pc = cfg.patch_cols();
  std::vector<double> grid(static_cast<std::size_t>(cfg.nlat) * cfg.nlon);
  for (int r = 0; r < cfg.patch_rows(); ++r)
    for (int c = 0; c < pc; ++c)
      for (int di = 0; di < p; ++di)
        for (int dj = 0; dj < p; ++dj)
          grid[static_cast<std::size_t>(r * p + di) * cfg.nlon + (c * p + dj)] = z(r * pc + c, di * p + dj);
  return grid;
}

const GridSpec& input_spec(const ModelInputs& inputs) { return inputs.front().front().spec(); }

std::vector<double> residual(const std::vector<double>& out, const GridField* target) {
  std::vector<double> r = out;
  if (target) {
    if (target->size() != r.size()) throw DomainError("target grid does not match the model output");
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= (*target)[i];
  }
  return r;
}

double sum_squares(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

}  // namespace

TokenSequence encode(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                     std::optional<std::uint64_t> latent_seed) {
  return run_encoder(params, inputs, cfg, latent_seed, nullptr);
}

GridField decode(const ModelParams& params, const TokenSequence& x, const AttentionConfig& cfg,
                 const GridSpec& spec) {
  if (x.tokens.rows() < cfg.patches() || x.tokens.cols() != cfg.embed_dim)
    throw DomainError("token sequence does not match the decoder");
  if (spec.nlat != cfg.nlat || spec.nlon != cfg.nlon) throw DomainError("decoder grid does not match the config");
  return GridField(spec, Units::percent, decode_values(params, x.tokens, cfg));
}

GridField forward(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                  std::optional<std::uint64_t> latent_seed) {
  const TokenSequence x = run_encoder(params, inputs, cfg, latent_seed, nullptr);
  return GridField(input_spec(inputs), Units::percent, decode_values(params, x.tokens, cfg));
}

double loss(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
            const GridField* target) {
  const TokenSequence x = run_encoder(params, inputs, cfg, std::nullopt, nullptr);
  return sum_squares(residual(decode_values(params, x.tokens, cfg), target));
}

LossGradients loss_and_gradients(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                                 const GridField* target) {
  ForwardCache cache;
  const TokenSequence x = run_encoder(params, inputs, cfg, std::nullopt, &cache);
  const std::vector<double> r = residual(decode_values(params, x.tokens, cfg), target);

  LossGradients out;
  out.loss = sum_squares(r);
  out.params = ModelParams::zeros_like(params);
  ModelParams& g = out.params;

  const int p = cfg.patch_size, pc = cfg.patch_cols(), np = cfg.patches();
  Matrix dz(np, p * p);
  for (int rr = 0; rr < cfg.patch_rows(); ++rr)
    for (int c = 0; c < pc; ++c)
      for (int di = 0; di < p; ++di)
        for (int dj = 0; dj < p; ++dj)
          dz(rr * pc + c, di * p + dj) = 2.0 * r[static_cast<std::size_t>(rr * p + di) * cfg.nlon + (c * p + dj)];

  Matrix dx = Matrix::Zero(x.tokens.rows(), x.tokens.cols());
  dx.topRows(np) = detail::linear_backward(dz, cache.decoder_in, params.decoder, g.decoder);

  const Groups groups = make_groups(x.tags, cfg);
  const int heads = cfg.num_heads;
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    auto& lg = g.layers[static_cast<std::size_t>(l)];
    const auto& lc = cache.layers[static_cast<std::size_t>(l)];
    dx = detail::mlp_backward(dx, lp.mlp, lc.mlp, lg.mlp);
    dx = detail::anchor_backward(dx, lp.anchor, heads, AnchorMode::two_phase, lc.anchor, lg.anchor);
    dx = detail::self_attention_backward(dx, lp.crossvar, groups.crossvar, heads, lc.crossvar, lg.crossvar);
    dx = detail::self_attention_backward(dx, lp.window, groups.window, heads, lc.window, lg.window);
  }

  out.inputs.values.assign(static_cast<std::size_t>(cfg.num_domains),
                           std::vector<std::vector<double>>(static_cast<std::size_t>(cfg.channels),
                                                            std::vector<double>(static_cast<std::size_t>(cfg.nlat) * cfg.nlon, 0.0)));
  const int ch = cfg.stream_channels();
  for (int s = 0; s < cfg.streams(); ++s) {
    const Matrix dpatch = detail::linear_backward(dx.middleRows(static_cast<Eigen::Index>(s) * np, np),
                                                  cache.patches[static_cast<std::size_t>(s)],
                                                  params.embed[static_cast<std::size_t>(s)],
                                                  g.embed[static_cast<std::size_t>(s)]);
    for (int rr = 0; rr < cfg.patch_rows(); ++rr)
      for (int c = 0; c < pc; ++c)
        for (int di = 0; di < p; ++di)
          for (int dj = 0; dj < p; ++dj)
            for (int k = 0; k < ch; ++k) {
              const int v = cfg.layout == Layout::sequence_concat ? s : k / cfg.channels;
              const int kc = cfg.layout == Layout::sequence_concat ? k : k % cfg.channels;
              out.inputs.values[static_cast<std::size_t>(v)][static_cast<std::size_t>(kc)]
                               [static_cast<std::size_t>(rr * p + di) * cfg.nlon + (c * p + dj)] +=
                  dpatch(rr * pc + c, (di * p + dj) * ch + k);
            }
  }
  return out;
}

namespace {

ModelInputs with_input_value(const ModelInputs& inputs, std::size_t v, std::size_t c, std::size_t cell,
                             double value) {
  ModelInputs out = inputs;
  const GridField& f = inputs[v][c];
  std::vector<double> vals(f.values().begin(), f.values().end());
  vals[cell] = value;
  out[v][c] = GridField(f.spec(), f.units(), std::move(vals));
  return out;
}

std::vector<double> residuals(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg) {
  const TokenSequence x = run_encoder(params, inputs, cfg, std::nullopt, nullptr);
  return decode_values(params, x.tokens, cfg);
}

// (L(+h) - L(-h)) / 2h for L = sum r^2, summed per cell as (r+ - r-)(r+ + r-)
// so the two large loss totals never cancel against each other.
double central_difference(const std::vector<double>& plus, const std::vector<double>& minus, double h) {
  double s = 0.0;
  for (std::size_t i = 0; i < plus.size(); ++i) s += (plus[i] - minus[i]) * (plus[i] + minus[i]);
  return s / (2.0 * h);
}

}  // namespace

GradCheckReport grad_check(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                           int probe_count, std::uint64_t seed) {
  if (cfg.latent_noise_sigma != 0.0) throw ConfigError("grad_check requires latent_noise_sigma = 0");
  if (probe_count < 1) throw ConfigError("probe_count must be >= 1");
  const LossGradients lg = loss_and_gradients(params, inputs, cfg);

  const auto grad_tensors = tensors(lg.params);
  const std::size_t n_params = parameter_count(params);
  const std::size_t cells = static_cast<std::size_t>(cfg.nlat) * cfg.nlon;
  const std::size_t n_inputs = static_cast<std::size_t>(cfg.num_domains) * cfg.channels * cells;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_params + n_inputs - 1);
  const double h = kFiniteDifferenceStep;
  GradCheckReport report;

  for (int probe = 0; probe < probe_count; ++probe) {
    std::size_t flat = pick(rng);
    GradProbe gp{};
    if (flat < n_params) {
      ModelParams work = params;
      auto refs = tensors(work);
      std::size_t t = 0;
      while (flat >= static_cast<std::size_t>(refs[t].tensor->size())) flat -= static_cast<std::size_t>(refs[t++].tensor->size());
      double& slot = refs[t].tensor->data()[flat];
      const double orig = slot;
      slot = orig + h;
      const auto rp = residuals(work, inputs, cfg);
      slot = orig - h;
      gp.numeric = central_difference(rp, residuals(work, inputs, cfg), h);
      gp.name = refs[t].name;
      gp.index = flat;
      gp.analytic = grad_tensors[t].tensor->data()[flat];
    } else {
      flat -= n_params;
      const std::size_t v = flat / (static_cast<std::size_t>(cfg.channels) * cells);
      const std::size_t c = (flat / cells) % static_cast<std::size_t>(cfg.channels);
      const std::size_t cell = flat % cells;
      const double orig = inputs[v][c][cell];
      gp.numeric = central_difference(residuals(params, with_input_value(inputs, v, c, cell, orig + h), cfg),
                                      residuals(params, with_input_value(inputs, v, c, cell, orig - h), cfg), h);
      gp.name = "input[" + std::to_string(v) + "][" + std::to_string(c) + "]";
      gp.index = cell;
      gp.analytic = lg.inputs.values[v][c][cell];
    }
    if (!std::isfinite(gp.analytic) || !std::isfinite(gp.numeric)) throw DomainError("non-finite gradient");
    const double denom = std::max({std::fabs(gp.analytic), std::fabs(gp.numeric), kRelErrorFloor});
    gp.rel_error = std::fabs(gp.analytic - gp.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, gp.rel_error);
    report.probes.push_back(std::move(gp));
  }
  return report;
}

std::vector<double> fit_smoke(ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                              const GridField& target, int steps, double step_size) {
  std::vector<double> history;
  for (int s = 0; s < steps; ++s) {
    const LossGradients lg = loss_and_gradients(params, inputs, cfg, &target);
    history.push_back(lg.loss);
    auto dst = tensors(params);
    const auto src = tensors(lg.params);
    for (std::size_t t = 0; t < dst.size(); ++t) *dst[t].tensor -= step_size * *src[t].tensor;
  }
  history.push_back(loss(params, inputs, cfg, &target));
  return history;
}

}  // namespace capeskit::attention
