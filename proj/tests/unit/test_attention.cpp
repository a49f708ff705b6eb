#include <doctest.h>

#include <algorithm>
#include <random>

#include "attention_oracle.hpp"
#include "capeskit/attention/kernels.hpp"
#include "capeskit/attention/model.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/reference.hpp"
#include "capeskit/attention/tokens.hpp"
#include "capeskit/error.hpp"
#include "fixtures.hpp"

using namespace capeskit;
using namespace capeskit::attention;

namespace {

AttentionConfig toy(int patch_size = 4) {
  AttentionConfig c;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.num_layers = 2;
  c.patch_size = patch_size;
  c.window_size = 2;
  c.num_anchors = 4;
  c.num_domains = 3;
  c.channels = 2;
  c.nlat = 16;
  c.nlon = 16;
  c.mlp_hidden = 16;
  return c;
}

ModelInputs random_inputs(const AttentionConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const GridSpec s{cfg.nlat, cfg.nlon, 0.0, 1.0, 0.0, 1.0};
  ModelInputs in(static_cast<std::size_t>(cfg.num_domains));
  for (auto& d : in)
    for (int c = 0; c < cfg.channels; ++c) d.push_back(fixtures::random_field(s, Units::unitless, -2, 2, rng));
  return in;
}

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Perturbs norm scales and biases so the checks do not rely on their init values.
void jitter(ModelParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& t : tensors(p))
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] += n(rng);
}

std::function<bool(int, int)> allow_of(const AttentionMask& m) {
  return [m](int i, int j) { return m(i, j); };
}

struct Setup {
  AttentionConfig cfg;
  ModelParams params;
  TokenSequence x;
};

Setup setup(AttentionConfig cfg, std::uint64_t seed = 3) {
  ModelParams p = ModelParams::init(cfg, seed);
  jitter(p, seed + 1);
  TokenSequence x = tokenize(random_inputs(cfg, seed + 2), p, cfg);
  return {cfg, std::move(p), std::move(x)};
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("token layout") {
    for (int p : {8, 4}) {
      const AttentionConfig cfg = toy(p);
      const auto s = setup(cfg);
      CHECK(s.x.length() == (p == 8 ? 12 : 48));
      CHECK(s.x.tokens.cols() == cfg.embed_dim);
      REQUIRE(s.x.tags.size() == static_cast<std::size_t>(s.x.length()));
      CHECK(s.x.tags == token_tags(cfg));
      for (std::size_t i = 1; i < s.x.tags.size(); ++i) {
        const auto &a = s.x.tags[i - 1], &b = s.x.tags[i];
        CHECK(std::tie(a.domain, a.row, a.col) < std::tie(b.domain, b.row, b.col));
      }
    }
    AttentionConfig stacked = toy();
    stacked.layout = Layout::channel_stack;
    CHECK(stacked.seq_len() == 16);
    const auto in = random_inputs(stacked, 1);
    const Matrix pm = patch_matrix(in, stacked, 0);
    CHECK(pm.rows() == 16);
    CHECK(pm.cols() == 4 * 4 * 6);
    // Patch (0, 1), pixel (1, 2), domain 2 channel 1.
    CHECK(pm(1, (1 * 4 + 2) * 6 + 2 * 2 + 1) == in[2][1].at(1, 4 + 2));
    const auto s = setup(stacked);
    CHECK(s.x.length() == 16);
  }

  TEST_CASE("patch matrix entries") {
    const AttentionConfig cfg = toy();
    const auto in = random_inputs(cfg, 2);
    const Matrix pm = patch_matrix(in, cfg, 1);
    CHECK(pm.rows() == 16);
    CHECK(pm.cols() == 4 * 4 * 2);
    CHECK(pm(2 * 4 + 3, (3 * 4 + 0) * 2 + 1) == in[1][1].at(2 * 4 + 3, 3 * 4 + 0));
  }

  TEST_CASE("library dense attention matches the loop oracle") {
    auto s = setup(toy());
    const auto& w = s.params.layers[0].window;
    for (const auto& mask : {AttentionMask::full(48), window_mask(s.x.tags, s.cfg), location_mask(s.x.tags)}) {
      const Matrix got = dense_attention_oracle(s.x.tokens, mask, w, s.cfg.num_heads);
      const Matrix want = oracle::self_attention(s.x.tokens, w, s.cfg.num_heads, allow_of(mask));
      CHECK(oracle::max_abs_diff(got, want) < 1e-10);
    }
  }

  TEST_CASE("window and cross-variable kernels equal masked dense attention") {
    for (int p : {8, 4}) {
      auto s = setup(toy(p), 10 + p);
      for (const auto& layer : s.params.layers) {
        const Matrix win = window_attention(s.x, layer.window, s.cfg).tokens;
        CHECK(oracle::max_abs_diff(win, dense_attention_oracle(s.x.tokens, window_mask(s.x.tags, s.cfg),
                                                               layer.window, s.cfg.num_heads)) < 1e-10);
        const Matrix cv = cross_variable_attention(s.x, layer.crossvar, s.cfg).tokens;
        CHECK(oracle::max_abs_diff(cv, dense_attention_oracle(s.x.tokens, location_mask(s.x.tags), layer.crossvar,
                                                              s.cfg.num_heads)) < 1e-10);
      }
    }
  }

  TEST_CASE("window groups partition the tokens") {
    const AttentionConfig cfg = toy();
    const auto tags = token_tags(cfg);
    const auto groups = window_groups(tags, cfg);
    CHECK(groups.size() == 3 * 4);
    std::vector<int> seen(tags.size(), 0);
    for (const auto& g : groups) {
      CHECK(g.queries.size() == 4);
      CHECK(g.queries == g.keys);
      for (int q : g.queries) ++seen[static_cast<std::size_t>(q)];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
    CHECK(crossvar_groups(tags, cfg).size() == 16);
  }

  TEST_CASE("singleton windows reduce to the identity mask") {
    AttentionConfig cfg = toy();
    cfg.window_size = 1;
    auto s = setup(cfg);
    const auto& w = s.params.layers[0].window;
    const Matrix got = window_attention(s.x, w, cfg).tokens;
    const Matrix want = oracle::self_attention(s.x.tokens, w, cfg.num_heads, [](int i, int j) { return i == j; });
    CHECK(oracle::max_abs_diff(got, want) < 1e-10);
    // Attending only to itself, each output is x + O(V(LN(x))).
    const Matrix u = oracle::layer_norm(s.x.tokens, w.norm);
    CHECK(oracle::max_abs_diff(got, s.x.tokens + oracle::linear(oracle::linear(u, w.v), w.o)) < 1e-10);
  }

  TEST_CASE("anchor attention equals two dense passes") {
    for (int p : {8, 4}) {
      auto s = setup(toy(p), 20 + p);
      for (const auto& layer : s.params.layers) {
        const Matrix got = anchor_attention(s.x, layer.anchor, s.cfg).tokens;
        CHECK(oracle::max_abs_diff(got, oracle::anchor_two_step(s.x.tokens, layer.anchor, s.cfg.num_heads)) < 1e-10);
      }
    }
  }

  TEST_CASE("broadcast through anchors equal to the normed tokens is dense attention") {
    AttentionConfig cfg = toy(8);
    cfg.num_anchors = 12;
    auto s = setup(cfg);
    AnchorWeights a = s.params.layers[0].anchor;
    a.anchors = oracle::layer_norm(s.x.tokens, a.norm);
    const Matrix got = anchor_attention(s.x, a, cfg, AnchorMode::broadcast_only).tokens;
    AttentionWeights dense{a.norm, a.bc_q, a.bc_k, a.bc_v, a.bc_o};
    CHECK(oracle::max_abs_diff(got, dense_attention_oracle(s.x.tokens, AttentionMask::full(12), dense,
                                                           cfg.num_heads)) < 1e-10);
  }

  TEST_CASE("identical tokens stay identical") {
    auto s = setup(toy());
    for (Eigen::Index i = 1; i < s.x.tokens.rows(); ++i) s.x.tokens.row(i) = s.x.tokens.row(0);
    const auto& layer = s.params.layers[0];
    for (const Matrix& y : {window_attention(s.x, layer.window, s.cfg).tokens,
                            cross_variable_attention(s.x, layer.crossvar, s.cfg).tokens,
                            anchor_attention(s.x, layer.anchor, s.cfg).tokens})
      for (Eigen::Index i = 1; i < y.rows(); ++i) CHECK((y.row(i) - y.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(77);
    const Matrix q = random_matrix(10, 8, rng, 3.0), k = random_matrix(10, 8, rng, 3.0);
    const Matrix ones = Matrix::Ones(10, 8);
    std::vector<AttentionGroup> groups = {{{0, 1, 2, 3}, {4, 5, 6}}, {{4, 5, 6, 7, 8, 9}, {0, 1, 2, 3, 7, 8, 9}}};
    const Matrix out = grouped_attention(q, k, ones, groups, 2);
    for (int i = 0; i < 10; ++i)
      for (int c = 0; c < 8; ++c) CHECK(out(i, c) == doctest::Approx(1.0).epsilon(1e-14));
    const Matrix big = grouped_attention(q * 1e3, k, random_matrix(10, 8, rng), groups, 2);
    CHECK(big.allFinite());
  }

  TEST_CASE("forward is deterministic and latent seeds matter") {
    AttentionConfig cfg = toy(8);
    const ModelParams p = ModelParams::init(cfg, 4);
    const auto in = random_inputs(cfg, 5);
    CHECK(forward(p, in, cfg) == forward(p, in, cfg));
    CHECK(forward(p, in, cfg, 1) == forward(p, in, cfg, 2));
    cfg.latent_noise_sigma = 0.1;
    const GridField a = forward(p, in, cfg, 1), b = forward(p, in, cfg, 2);
    CHECK(a == forward(p, in, cfg, 1));
    CHECK_FALSE(a == b);
    CHECK(a.units() == Units::percent);
    CHECK(a.spec() == in[0][0].spec());
  }

  TEST_CASE("without layers the model is decoder after embedding") {
    AttentionConfig cfg = toy(8);
    cfg.num_layers = 0;
    ModelParams p = ModelParams::init(cfg, 6);
    jitter(p, 7);
    const auto in = random_inputs(cfg, 8);
    const GridField out = forward(p, in, cfg);
    const int ps = cfg.patch_size, pc = cfg.patch_cols();
    double worst = 0.0;
    for (int r = 0; r < cfg.patch_rows(); ++r)
      for (int c = 0; c < pc; ++c) {
        Matrix patch(1, ps * ps * cfg.channels);
        for (int di = 0; di < ps; ++di)
          for (int dj = 0; dj < ps; ++dj)
            for (int ch = 0; ch < cfg.channels; ++ch)
              patch(0, (di * ps + dj) * cfg.channels + ch) = in[0][static_cast<std::size_t>(ch)].at(r * ps + di, c * ps + dj);
        const Matrix z = oracle::linear(oracle::linear(patch, p.embed[0]), p.decoder);
        for (int di = 0; di < ps; ++di)
          for (int dj = 0; dj < ps; ++dj)
            worst = std::max(worst, std::fabs(z(0, di * ps + dj) - out.at(r * ps + di, c * ps + dj)));
      }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("zero weights leave only the decoder bias") {
    const AttentionConfig cfg = toy(8);
    ModelParams p = ModelParams::zeros_like(ModelParams::init(cfg, 1));
    std::mt19937_64 rng(2);
    p.decoder.b = random_matrix(1, 64, rng);
    const GridField out = forward(p, random_inputs(cfg, 3), cfg);
    for (int i = 0; i < cfg.nlat; ++i)
      for (int j = 0; j < cfg.nlon; ++j) CHECK(out.at(i, j) == p.decoder.b(0, (i % 8) * 8 + j % 8));
  }

  TEST_CASE("analytic gradients match central differences") {
    const AttentionConfig cfg = toy(8);
    ModelParams p = ModelParams::init(cfg, 11);
    jitter(p, 12);
    const auto rep = grad_check(p, random_inputs(cfg, 13), cfg, 200, 14);
    CHECK(rep.probes.size() == 200);
    CHECK(rep.max_rel_error < 1e-6);

    AttentionConfig lin = cfg;
    lin.num_layers = 0;
    lin.noise_layer = -1;
    const auto r0 = grad_check(ModelParams::init(lin, 15), random_inputs(lin, 16), lin, 100, 17);
    CHECK(r0.max_rel_error < 1e-9);

    AttentionConfig noisy = cfg;
    noisy.latent_noise_sigma = 0.1;
    CHECK_THROWS_AS(grad_check(p, random_inputs(cfg, 13), noisy, 10), ConfigError);
  }

  TEST_CASE("gradient descent lowers the loss") {
    const AttentionConfig cfg = toy(8);
    ModelParams p = ModelParams::init(cfg, 21);
    const auto in = random_inputs(cfg, 22);
    std::mt19937_64 rng(23);
    const GridField target = fixtures::random_field(in[0][0].spec(), Units::percent, -1, 1, rng);
    const auto losses = fit_smoke(p, in, cfg, target, 20, 1e-3);
    REQUIRE(losses.size() == 21);
    CHECK(losses.back() < 0.9 * losses.front());
    CHECK(losses.back() == doctest::Approx(loss(p, in, cfg, &target)).epsilon(1e-12));
  }

  TEST_CASE("config validation") {
    AttentionConfig c = toy();
    c.embed_dim = 9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy();
    c.nlat = 20;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy();
    c.window_size = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy();
    c.noise_layer = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy();
    AttentionConfig two = toy();
    two.num_domains = 2;
    CHECK_THROWS_AS(tokenize(random_inputs(two, 1), ModelParams::init(c, 1), c), Error);
  }
}
