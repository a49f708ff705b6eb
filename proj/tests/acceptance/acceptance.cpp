// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "capeskit/attention/flops.hpp"
#include "capeskit/attention/kernels.hpp"
#include "capeskit/attention/model.hpp"
#include "capeskit/attention/pca.hpp"
#include "capeskit/attention/reference.hpp"
#include "capeskit/attention/tokens.hpp"
#include "capeskit/ensemble.hpp"
#include "capeskit/fusion.hpp"
#include "capeskit/io.hpp"
#include "capeskit/pipeline.hpp"
#include "capeskit/scaling.hpp"
#include "capeskit/seed.hpp"
#include "capeskit/svg.hpp"
#include "capeskit/verify.hpp"
#include "fixtures.hpp"
#include "jacobi.hpp"
#include "ps_oracle.hpp"

using namespace capeskit;
namespace fs = std::filesystem;
using attention::Matrix;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Collects failed checks for one criterion.
class Checks {
 public:
  void require(bool cond, const std::string& what) {
    if (!cond && failures_.size() < 5) failures_.push_back(what);
    ok_ = ok_ && cond;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome outcome() const {
    std::string d = notes_;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + std::string("failed: ") + f;
    return {ok_, d};
  }

 private:
  bool ok_ = true;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fmt(double v, int digits = 3) { return format_fixed(v, digits); }

AnomalyField flat_row(std::vector<double> v) {
  const GridSpec s = fixtures::grid(1, static_cast<int>(v.size()));
  return AnomalyField(s, std::move(v));
}

std::vector<double> values(const AnomalyField& a) { return {a.values().begin(), a.values().end()}; }

// ---------------------------------------------------------------------------

Outcome ps_formula() {
  Checks c;
  const auto obs = flat_row({30, -60, 10, 120});
  const auto b = verify::ps_breakdown(flat_row({25, -55, -5, 40}), obs);
  c.require(b == verify::PsBreakdown{4, 3, 1, 1, 1}, "breakdown {4,3,1,1,1}");
  const double ps = verify::ps_score(b);
  c.require(std::fabs(ps - 1200.0 / 14.0) <= 1e-9, "PS = 1200/14");
  c.require(verify::ps_score(verify::ps_breakdown(obs, obs)) == 100.0, "perfect forecast = 100");
  // Wrong sign everywhere and no anomaly above the first band.
  c.require(verify::ps_score(verify::ps_breakdown(flat_row({-5, 10, -15, 3}), flat_row({5, -10, 15, -3}))) == 0.0,
            "all-wrong-sign = 0");
  c.note("PS=" + fmt(ps, 12));
  return c.outcome();
}

Outcome ps_bruteforce() {
  Checks c;
  std::mt19937_64 rng(20240601);
  const GridSpec s = fixtures::grid(8, 8);
  int matches = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto fc = fixtures::random_anomaly(s, rng), ob = fixtures::random_anomaly(s, rng);
    const auto want = oracle::ps_counts(values(fc), values(ob));
    const auto got = verify::ps_breakdown(fc, ob);
    const bool eq = got == verify::PsBreakdown{want.n, want.n0, want.n1, want.n2, want.m};
    matches += eq;
    c.require(eq, "pair " + std::to_string(t));
  }
  c.note(std::to_string(matches) + "/1000 exact");
  return c.outcome();
}

Outcome attention_equivalence() {
  Checks c;
  std::mt19937_64 rng(31);
  auto pick = [&](std::initializer_list<int> xs) {
    std::vector<int> v(xs);
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  double worst = 0.0;
  int configs = 0, max_len = 0;
  while (configs < 20) {
    attention::AttentionConfig cfg;
    cfg.patch_size = pick({2, 4});
    cfg.nlat = cfg.patch_size * pick({2, 4, 6});
    cfg.nlon = cfg.patch_size * pick({2, 4, 8});
    cfg.window_size = pick({1, 2});
    cfg.num_domains = pick({1, 2, 3});
    cfg.channels = pick({1, 2});
    cfg.num_heads = pick({1, 2, 4});
    cfg.embed_dim = cfg.num_heads * pick({2, 4});
    cfg.num_layers = 1;
    cfg.num_anchors = 4;
    cfg.mlp_hidden = 8;
    cfg.layout = pick({0, 0, 1}) ? attention::Layout::channel_stack : attention::Layout::sequence_concat;
    if (configs == 0) {
      // Pin the upper end of the range: 3 domains x 4 x 8 patches = 96 tokens.
      cfg.patch_size = 4;
      cfg.nlat = 16;
      cfg.nlon = 32;
      cfg.window_size = 2;
      cfg.num_domains = 3;
      cfg.layout = attention::Layout::sequence_concat;
    }
    if (cfg.patch_rows() % cfg.window_size || cfg.patch_cols() % cfg.window_size || cfg.seq_len() > 96) continue;
    ++configs;
    max_len = std::max(max_len, cfg.seq_len());
    const std::uint64_t seed = derive_seed(31, "config", {static_cast<std::uint64_t>(configs)});
    auto params = attention::ModelParams::init(cfg, seed);
    std::mt19937_64 prng(seed);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto& t : attention::tensors(params))
      for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] += n(prng);
    const GridSpec spec{cfg.nlat, cfg.nlon, 0.0, 1.0, 0.0, 1.0};
    attention::ModelInputs in(static_cast<std::size_t>(cfg.num_domains));
    for (auto& d : in)
      for (int ch = 0; ch < cfg.channels; ++ch) d.push_back(fixtures::random_field(spec, Units::unitless, -2, 2, prng));
    const auto x = attention::tokenize(in, params, cfg);
    const auto& layer = params.layers[0];
    const double dw = (attention::window_attention(x, layer.window, cfg).tokens -
                       attention::dense_attention_oracle(x.tokens, attention::window_mask(x.tags, cfg), layer.window,
                                                         cfg.num_heads))
                          .cwiseAbs()
                          .maxCoeff();
    const double dc = (attention::cross_variable_attention(x, layer.crossvar, cfg).tokens -
                       attention::dense_attention_oracle(x.tokens, attention::location_mask(x.tags), layer.crossvar,
                                                         cfg.num_heads))
                          .cwiseAbs()
                          .maxCoeff();
    worst = std::max({worst, dw, dc});
    c.require(dw <= 1e-10 && dc <= 1e-10, "config " + std::to_string(configs) + " L=" + std::to_string(cfg.seq_len()));
  }
  std::ostringstream s;
  s << "20 configs, L<=" << max_len << ", max diff " << worst;
  c.note(s.str());
  return c.outcome();
}

Outcome linear_complexity() {
  Checks c;
  attention::AttentionConfig base;
  base.window_size = 2;
  base.num_domains = 3;
  base.num_anchors = 8;
  const auto f48 = attention::flop_count(base, 48), f96 = attention::flop_count(base, 96);
  c.require(f96.trilevel() == 2 * f48.trilevel(), "tri-level FLOPs exactly 2x");
  c.require(f96.dense == 4 * f48.dense, "dense FLOPs exactly 4x");

  // 256 tokens do not split into three equal streams; time with two.
  attention::AttentionConfig timing = base;
  timing.num_domains = 2;
  const auto small = attention::config_for_length(timing, 256), large = attention::config_for_length(timing, 1024);
  const double t1 = attention::time_trilevel(small, 5), t4 = attention::time_trilevel(large, 5);
  const double ratio = t4 / t1;
  c.require(ratio < 8.0, "time(1024)/time(256) < 8");
  c.note("FLOP ratios " + std::to_string(f96.trilevel() / f48.trilevel()) + "x/" +
         std::to_string(f96.dense / f48.dense) + "x, time ratio " + fmt(ratio, 2) + " (" + fmt(t1 * 1e3, 2) +
         " ms -> " + fmt(t4 * 1e3, 2) + " ms)");
  return c.outcome();
}

Outcome gradients() {
  Checks c;
  attention::AttentionConfig cfg;
  cfg.nlat = 16;
  cfg.nlon = 16;
  c.require(cfg.seq_len() == 12 && cfg.embed_dim == 32 && cfg.num_layers == 2, "toy model L=12, d=32, 2 layers");
  const auto params = attention::ModelParams::init(cfg, derive_seed(7, "model"));
  const auto in = pipeline::synthetic_inputs(cfg, {16, 16, 0.0, 1.0, 0.0, 1.0}, 6, derive_seed(7, "inputs"));
  const auto rep = attention::grad_check(params, in, cfg, 200, 7);
  c.require(rep.max_rel_error < 1e-6, "max relative error < 1e-6");
  std::ostringstream s;
  s << rep.probes.size() << " probes, max rel error " << rep.max_rel_error;
  c.note(s.str());
  return c.outcome();
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::vector<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  files = na.size();
  if (na != nb) return false;
  for (const auto& n : na)
    if (read_text(a / n) != read_text(b / n)) return false;
  return true;
}

Outcome ensemble_determinism() {
  Checks c;
  const pipeline::GenerateConfig cfg;
  const std::uint64_t seed = 2025;
  const auto e1 = pipeline::generate(pipeline::Mode::hybrid, cfg, seed);
  std::size_t num = 0, ai = 0;
  for (const auto& m : e1.members()) (m.meta.track == fusion::Track::numerical ? num : ai)++;
  c.require(num == 174 && ai == 1600 && e1.size() == 1774, "174 + 1600 = 1774 members");
  c.require(e1.spec().nlat == 32 && e1.spec().nlon == 32, "32x32 grid");

  const fs::path root = fs::temp_directory_path() / "capeskit_acceptance_gen";
  fs::remove_all(root);
  ensemble::write_ensemble_dir(e1, root / "a", &cfg.numerical);
  const auto e2 = pipeline::generate(pipeline::Mode::hybrid, cfg, seed);
  ensemble::write_ensemble_dir(e2, root / "b", &cfg.numerical);
  std::size_t files = 0;
  c.require(same_tree(root / "a", root / "b", files), "byte-identical directories");
  fs::remove_all(root);

  const auto setup = pipeline::ai_setup(cfg, seed);
  int checked = 0;
  for (const auto [i, j] : {std::pair{0, 0}, std::pair{17, 23}, std::pair{39, 39}}) {
    const auto m = ensemble::ai_member(setup.base, setup.params, cfg.attention, setup.perturbation, i, j);
    const auto& full = e1[174 + static_cast<std::size_t>(i) * 40 + static_cast<std::size_t>(j)];
    c.require(m.meta == full.meta && m.field == full.field, "isolated member (" + std::to_string(i) + "," +
                                                                std::to_string(j) + ")");
    ++checked;
  }
  c.note(std::to_string(e1.size()) + " members, " + std::to_string(files) + " identical files, " +
         std::to_string(checked) + " isolated members equal");
  return c.outcome();
}

fusion::EnsembleSet make_set(std::vector<std::vector<double>> rows, const GridSpec& s, const std::string& prefix) {
  std::vector<fusion::Member> ms;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    fusion::MemberMeta m;
    m.id = prefix + std::to_string(k);
    m.scheme_index = 0;
    ms.push_back({m, AnomalyField(s, std::move(rows[k]))});
  }
  return fusion::EnsembleSet(std::move(ms));
}

Outcome fusion_properties() {
  Checks c;
  std::mt19937_64 rng(77);
  const GridSpec s = fixtures::grid(6, 6);
  double worst_sum = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 9;
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < n; ++k) rows.push_back(values(fixtures::random_anomaly(s, rng)));
    const auto e = make_set(rows, s, "m");
    const auto w = fusion::weights_of(fusion::contribution_scores(e));
    double sum = 0.0;
    for (double x : w) {
      c.require(x >= 0.0, "nonnegative weights");
      sum += x;
    }
    worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));

    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<fusion::Member> shuffled;
    for (std::size_t k : perm) shuffled.push_back(e[k]);
    const auto w2 = fusion::weights_of(fusion::contribution_scores(fusion::EnsembleSet(shuffled)));
    for (std::size_t k = 0; k < perm.size(); ++k) c.require(w2[k] == w[perm[k]], "permutation equivariance");
  }
  c.require(worst_sum <= 1e-12, "weights sum to 1 within 1e-12");

  const auto v = values(fixtures::random_anomaly(s, rng));
  const auto same = fusion::contribution_scores(make_set({v, v, v, v}, s, "id"));
  for (const auto& m : same) c.require(m.weight == 0.25, "identical members give uniform weights");

  // 20 surrogate members around a fresh truth per seed, 30% of them negated.
  int wins = 0;
  const GridSpec big{32, 32, 0.0, 1.0, 0.0, 1.0};
  ensemble::PerturbationSpec p;
  p.n_init = 4;
  p.n_latent = 5;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const AnomalyField truth = scaling::synthetic_truth(big, seed, 60.0, 3.0);
    p.base_seed = derive_seed(seed, "ai");
    const auto pool =
        ensemble::build_surrogate_ensemble(ensemble::ai_member_metas(p), truth, {}, derive_seed(seed, "members"));
    std::vector<fusion::Member> ms;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      if (k % 10 < 3) {
        std::vector<double> neg = values(pool[k].field);
        for (double& x : neg) x = -x;
        ms.push_back({pool[k].meta, AnomalyField(big, std::move(neg))});
      } else {
        ms.push_back(pool[k]);
      }
    }
    const fusion::EnsembleSet e(std::move(ms));
    const auto fused = fusion::fuse(e, fusion::weights_of(fusion::contribution_scores(e)));
    const double ps_fused = verify::ps_score(verify::ps_breakdown(fused, truth));
    const double ps_mean = verify::ps_score(verify::ps_breakdown(fusion::ensemble_mean(e), truth));
    wins += ps_fused > ps_mean;
  }
  c.require(wins >= 80, "fused PS > mean PS in >= 80 of 100 trials");
  std::ostringstream sn;
  sn << "max |sum-1| " << worst_sum << ", adversarial wins " << wins << "/100";
  c.note(sn.str());
  return c.outcome();
}

Outcome scaling_law() {
  Checks c;
  const scaling::ScalingConfig cfg;
  const auto bench = scaling::synthetic_benchmark(cfg.benchmark, 42);
  const auto rows = scaling::skill_curve(bench.members, bench.truth, cfg, 42);
  c.require(rows.size() == 5 && rows.front().size == 11 && rows.back().size == 176, "sizes 11..176");
  std::vector<double> sizes, ps;
  for (const auto& r : rows) {
    sizes.push_back(r.size);
    ps.push_back(r.ps_mean);
    c.require(r.trials == 50 && r.n_ai == 10 * r.n_num, "50 trials at ratio 1:10");
  }
  const double rho = scaling::spearman(sizes, ps);
  c.require(rho > 0.0, "Spearman(size, PS) > 0");
  c.require(rows.back().fused_std_mean < rows.front().fused_std_mean, "fused std at 176 < at 11");
  std::string curve;
  for (const auto& r : rows) curve += (curve.empty() ? "" : " ") + fmt(r.ps_mean, 2);
  c.note("PS " + curve + ", rho " + fmt(rho, 3) + ", std " + fmt(rows.front().fused_std_mean, 2) + " -> " +
         fmt(rows.back().fused_std_mean, 2));
  return c.outcome();
}

Outcome pca() {
  Checks c;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  auto gaussian = [&](int r, int k) {
    Matrix m(r, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  const Matrix low = gaussian(50, 3) * gaussian(3, 10);
  const double low_err = attention::reconstruction_error(attention::fit_pca(low, 3), low);
  c.require(low_err < 1e-9, "rank-3 reconstruction < 1e-9");

  Matrix x = gaussian(50, 10);
  for (int j = 0; j < 10; ++j) x.col(j) *= 1.0 + 0.5 * (10 - j);
  const auto eig = oracle::jacobi_eigen(oracle::covariance(std::vector<double>(x.data(), x.data() + x.size()), 50, 10), 10);
  double prev = INFINITY, worst = 0.0;
  for (int k = 1; k <= 9; ++k) {
    const double err = attention::reconstruction_error(attention::fit_pca(x, k), x);
    const double want = oracle::tail_error(eig, 50, k);
    worst = std::max(worst, std::fabs(err - want) / std::max(1.0, want));
    c.require(err <= prev, "monotone in k");
    prev = err;
  }
  c.require(worst < 1e-9, "matches the eigen-tail oracle");
  std::ostringstream s;
  s << "rank-3 error " << low_err << ", oracle rel diff " << worst;
  c.note(s.str());
  return c.outcome();
}

Outcome round_trips() {
  Checks c;
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> dim(1, 12);
  std::uniform_real_distribution<double> origin(-80.0, 80.0), step(0.1, 3.0);
  const fs::path dir = fs::temp_directory_path() / "capeskit_acceptance_grd";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    const GridSpec s{dim(rng), dim(rng), origin(rng), step(rng), origin(rng) + 100.0, step(rng)};
    const Units u = t % 3 == 0 ? Units::mm : (t % 3 == 1 ? Units::percent : Units::unitless);
    std::vector<double> v = fixtures::uniform(s.cells(), -1e3, 1e3, rng);
    if (t % 5 == 0) v[0] = 1e-300;
    const GridField f(s, u, v);
    write_grid(f, dir / "f.grd");
    const bool eq = read_grid(dir / "f.grd") == f && parse_grid(format_grid(f)) == f;
    ok += eq;
    c.require(eq, "GRD1 field " + std::to_string(t));
  }
  fs::remove_all(dir);

  auto outputs = [] {
    const GridSpec s{16, 16, -20.0, 2.0, 100.0, 2.0};
    const AnomalyField truth = scaling::synthetic_truth(s, 3, 60.0, 3.0);
    ensemble::PerturbationSpec p;
    p.n_init = 2;
    p.n_latent = 3;
    const auto e = ensemble::build_surrogate_ensemble(ensemble::ai_member_metas(p), truth, {}, 4);
    const auto scores = fusion::contribution_scores(e);
    const auto fused = fusion::fuse(e, fusion::weights_of(scores));
    scaling::BenchmarkConfig bc;
    bc.grid = s;
    bc.n_init = 2;
    bc.n_latent = 5;
    scaling::ScalingConfig sc;
    sc.benchmark = bc;
    sc.sizes = {11};
    sc.trials = 3;
    const auto b = scaling::synthetic_benchmark(bc, 5);
    const auto rows = scaling::skill_curve(b.members, b.truth, sc, 6);
    std::vector<double> x, y;
    for (const auto& r : rows) x.push_back(r.size), y.push_back(r.ps_mean);
    attention::AttentionConfig ac;
    return svg::render_heatmap(fused.grid(), "fused") + svg::render_line_chart({{"PS", x, y}}, "curve", "size", "PS") +
           fusion::format_weights_csv(scores) + scaling::format_curve_csv(rows) +
           attention::format_flop_rows(attention::flop_count(ac, 48), 48);
  };
  const std::string first = outputs();
  c.require(first == outputs(), "SVG and CSV byte-identical across reruns");
  c.note(std::to_string(ok) + "/100 GRD1 identical, " + std::to_string(first.size()) + " bytes of SVG/CSV identical");
  return c.outcome();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "PS formula fidelity", 1.0, ps_formula},
      {2, "PS brute-force equivalence", 5.0, ps_bruteforce},
      {3, "window/cross-variable attention equals masked dense", 30.0, attention_equivalence},
      {4, "linear-complexity accounting", 120.0, linear_complexity},
      {5, "gradient correctness", 60.0, gradients},
      {6, "ensemble combinatorics and determinism", 120.0, ensemble_determinism},
      {7, "fusion properties", 60.0, fusion_properties},
      {8, "scaling-law property", 300.0, scaling_law},
      {9, "PCA", 1.0, pca},
      {10, "format round-trips", 5.0, round_trips},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < cr.budget_s;
    const bool pass = o.ok && in_budget;
    failed += !pass;
    std::printf("%s criterion %d: %s [%.3f s / budget %.0f s%s] %s\n", pass ? "PASS" : "FAIL", cr.id, cr.name, secs,
                cr.budget_s, in_budget ? "" : ", over budget", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
