#include "capeskit/attention/params.hpp"

#include <cmath>
#include <random>

#include "capeskit/error.hpp"

namespace capeskit::attention {

namespace {

struct Initializer {
  std::mt19937_64 rng;
  double bound;

  Matrix uniform(int rows, int cols) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  }
  Linear linear(int in, int out) { return {uniform(in, out), Matrix::Zero(1, out)}; }
};

LayerNormParams norm(int d) { return {Matrix::Ones(1, d), Matrix::Zero(1, d)}; }

AttentionWeights attention_weights(Initializer& init, int d) {
  AttentionWeights w;
  w.norm = norm(d);
  w.q = init.linear(d, d);
  w.k = init.linear(d, d);
  w.v = init.linear(d, d);
  w.o = init.linear(d, d);
  return w;
}

template <class Params, class Fn>
void visit(Params& p, Fn&& fn) {
  auto lin = [&](const std::string& name, auto& l) {
    fn(name + ".w", l.w);
    fn(name + ".b", l.b);
  };
  auto ln = [&](const std::string& name, auto& n) {
    fn(name + ".gamma", n.gamma);
    fn(name + ".beta", n.beta);
  };
  auto attn = [&](const std::string& name, auto& a) {
    ln(name + ".norm", a.norm);
    lin(name + ".q", a.q);
    lin(name + ".k", a.k);
    lin(name + ".v", a.v);
    lin(name + ".o", a.o);
  };
  for (std::size_t s = 0; s < p.embed.size(); ++s) lin("embed" + std::to_string(s), p.embed[s]);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string pre = "layer" + std::to_string(l);
    attn(pre + ".window", layer.window);
    attn(pre + ".crossvar", layer.crossvar);
    auto& a = layer.anchor;
    ln(pre + ".anchor.norm", a.norm);
    fn(pre + ".anchor.anchors", a.anchors);
    lin(pre + ".anchor.agg_q", a.agg_q);
    lin(pre + ".anchor.agg_k", a.agg_k);
    lin(pre + ".anchor.agg_v", a.agg_v);
    lin(pre + ".anchor.bc_q", a.bc_q);
    lin(pre + ".anchor.bc_k", a.bc_k);
    lin(pre + ".anchor.bc_v", a.bc_v);
    lin(pre + ".anchor.bc_o", a.bc_o);
    ln(pre + ".mlp.norm", layer.mlp.norm);
    lin(pre + ".mlp.fc1", layer.mlp.fc1);
    lin(pre + ".mlp.fc2", layer.mlp.fc2);
  }
  lin("decoder", p.decoder);
}

}  // namespace

ModelParams ModelParams::init(const AttentionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int d = cfg.embed_dim;
  const int p2 = cfg.patch_size * cfg.patch_size;
  Initializer init{std::mt19937_64(seed), 1.0 / std::sqrt(static_cast<double>(d))};
  ModelParams p;
  for (int s = 0; s < cfg.streams(); ++s) p.embed.push_back(init.linear(p2 * cfg.stream_channels(), d));
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerParams layer;
    layer.window = attention_weights(init, d);
    layer.crossvar = attention_weights(init, d);
    auto& a = layer.anchor;
    a.norm = norm(d);
    a.anchors = init.uniform(cfg.num_anchors, d);
    a.agg_q = init.linear(d, d);
    a.agg_k = init.linear(d, d);
    a.agg_v = init.linear(d, d);
    a.bc_q = init.linear(d, d);
    a.bc_k = init.linear(d, d);
    a.bc_v = init.linear(d, d);
    a.bc_o = init.linear(d, d);
    layer.mlp.norm = norm(d);
    layer.mlp.fc1 = init.linear(d, cfg.mlp_hidden);
    layer.mlp.fc2 = init.linear(cfg.mlp_hidden, d);
    p.layers.push_back(std::move(layer));
  }
  p.decoder = init.linear(d, p2);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& t : tensors(z)) t.tensor->setZero();
  return z;
}

std::vector<TensorRef> tensors(ModelParams& p) {
  std::vector<TensorRef> out;
  visit(p, [&](std::string name, Matrix& m) { out.push_back({std::move(name), &m}); });
  return out;
}

std::vector<ConstTensorRef> tensors(const ModelParams& p) {
  std::vector<ConstTensorRef> out;
  visit(p, [&](std::string name, const Matrix& m) { out.push_back({std::move(name), &m}); });
  return out;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& t : tensors(p)) n += static_cast<std::size_t>(t.tensor->size());
  return n;
}

void check_shapes(const ModelParams& p, const AttentionConfig& cfg) {
  cfg.validate();
  const ModelParams expect = ModelParams::init(cfg, 0);
  const auto have = tensors(p);
  const auto want = tensors(expect);
  if (have.size() != want.size()) throw ConfigError("parameter set does not match config");
  for (std::size_t i = 0; i < have.size(); ++i) {
    if (have[i].name != want[i].name || have[i].tensor->rows() != want[i].tensor->rows() ||
        have[i].tensor->cols() != want[i].tensor->cols())
      throw ConfigError("parameter '" + want[i].name + "' has the wrong shape for this config");
  }
}

}  // namespace capeskit::attention
