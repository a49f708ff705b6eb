#include "capeskit/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>

#include "capeskit/error.hpp"
#include "capeskit/io.hpp"
#include "capeskit/reduce.hpp"
#include "capeskit/seed.hpp"
#include "capeskit/verify.hpp"

namespace capeskit::scaling {

using fusion::EnsembleSet;
using fusion::Member;
using fusion::Track;

void BenchmarkConfig::validate() const {
  grid.validate();
  if (!(climatology_mm > 0.0)) throw ConfigError("climatology_mm must be positive");
  if (!(amplitude >= 0.0)) throw ConfigError("amplitude must be >= 0");
  if (n_init < 1 || n_latent < 1) throw ConfigError("n_init and n_latent must be >= 1");
  numerical.validate();
}

AnomalyField synthetic_truth(const GridSpec& spec, std::uint64_t seed, double amplitude, double slope) {
  return AnomalyField(ensemble::correlated_field(spec, derive_seed(seed, "truth"), amplitude, slope));
}

void require_category_coverage(const AnomalyField& truth) {
  bool normal = false, first = false, second = false, extreme = false;
  for (double a : truth.values()) {
    const auto c = verify::classify(a);
    normal |= c.level == verify::Level::normal;
    first |= c.level == verify::Level::first;
    second |= c.level == verify::Level::second;
    extreme |= c.extreme;
  }
  if (!(normal && first && second && extreme))
    throw DomainError("benchmark-degenerate: truth must cover the normal, first-level, second-level and extreme bands");
}

Benchmark synthetic_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  AnomalyField truth = synthetic_truth(cfg.grid, seed, cfg.amplitude, cfg.truth_slope);
  require_category_coverage(truth);

  std::vector<fusion::MemberMeta> metas = ensemble::build_numerical_manifest(cfg.numerical);
  ensemble::PerturbationSpec p;
  p.n_init = cfg.n_init;
  p.n_latent = cfg.n_latent;
  p.base_seed = derive_seed(seed, "ai");
  for (auto& m : ensemble::ai_member_metas(p)) metas.push_back(std::move(m));

  EnsembleSet members = ensemble::build_surrogate_ensemble(metas, truth, cfg.skill, derive_seed(seed, "members"));
  Climatology clim(GridField::filled(cfg.grid, Units::mm, cfg.climatology_mm));
  return Benchmark{std::move(truth), std::move(clim), std::move(members)};
}

EnsembleSet subsample(const EnsembleSet& e, int n_num, int n_ai, std::uint64_t seed) {
  if (n_num < 0 || n_ai < 0 || n_num + n_ai == 0) throw DomainError("subsample needs a positive member count");
  std::vector<std::size_t> num, ai;
  for (std::size_t k = 0; k < e.size(); ++k) (e[k].meta.track == Track::numerical ? num : ai).push_back(k);
  if (static_cast<std::size_t>(n_num) > num.size() || static_cast<std::size_t>(n_ai) > ai.size())
    throw DomainError("insufficient members: requested " + std::to_string(n_num) + " numerical and " +
                      std::to_string(n_ai) + " ai, available " + std::to_string(num.size()) + " and " +
                      std::to_string(ai.size()));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  std::sample(num.begin(), num.end(), std::back_inserter(picked), n_num, rng);
  std::sample(ai.begin(), ai.end(), std::back_inserter(picked), n_ai, rng);
  std::vector<Member> out;
  out.reserve(picked.size());
  for (std::size_t k : picked) out.push_back(e[k]);
  std::sort(out.begin(), out.end(), [](const Member& a, const Member& b) { return a.meta.id < b.meta.id; });
  return EnsembleSet(std::move(out));
}

void ScalingConfig::validate() const {
  if (sizes.empty()) throw ConfigError("sizes must not be empty");
  if (ratio_num < 0 || ratio_ai < 0 || ratio_num + ratio_ai == 0) throw ConfigError("ratio must be positive");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  for (int s : sizes) composition(s);
  fusion.validate();
  benchmark.validate();
}

std::pair<int, int> ScalingConfig::composition(int size) const {
  const int unit = ratio_num + ratio_ai;
  if (size < 1 || size % unit != 0)
    throw ConfigError("size " + std::to_string(size) + " is not a positive multiple of " + std::to_string(unit) +
                      " (ratio " + std::to_string(ratio_num) + ":" + std::to_string(ratio_ai) + ")");
  return {size / unit * ratio_num, size / unit * ratio_ai};
}

namespace {

struct TrialStats {
  double ps = 0.0, acc = 0.0, fused_std = 0.0;
};

double field_std(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double mean = deterministic_sum(n, [&](std::size_t i) { return v[i]; }) / static_cast<double>(n);
  const double ss = deterministic_sum(n, [&](std::size_t i) { return (v[i] - mean) * (v[i] - mean); });
  return std::sqrt(ss / static_cast<double>(n - 1));
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  const double mean = s.value() / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  return {mean, std::sqrt(ss.value() / static_cast<double>(v.size() - 1))};
}

}  // namespace

std::vector<CurveRow> skill_curve(const EnsembleSet& pool, const AnomalyField& truth, const ScalingConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  require_compatible(pool.spec(), truth.spec(), "scaling truth");
  std::vector<int> sizes = cfg.sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  std::vector<CurveRow> rows;
  for (int size : sizes) {
    const auto [n_num, n_ai] = cfg.composition(size);
    std::vector<TrialStats> stats(static_cast<std::size_t>(cfg.trials));
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < cfg.trials; ++t) {
      try {
        const auto s = derive_seed(seed, "trial", {static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(t)});
        const EnsembleSet sub = subsample(pool, n_num, n_ai, s);
        const AnomalyField fused = fusion::fuse(sub, fusion::weights_of(fusion::contribution_scores(sub, cfg.fusion)));
        stats[static_cast<std::size_t>(t)] = {verify::ps_score(verify::ps_breakdown(fused, truth)),
                                              verify::acc(fused, truth), field_std(fused.values())};
      } catch (...) {
#pragma omp critical(capeskit_scaling_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<double> ps, acc, sd;
    for (const auto& s : stats) {
      ps.push_back(s.ps);
      acc.push_back(s.acc);
      sd.push_back(s.fused_std);
    }
    CurveRow r;
    r.size = size;
    r.n_num = n_num;
    r.n_ai = n_ai;
    r.trials = cfg.trials;
    std::tie(r.ps_mean, r.ps_std) = mean_std(ps);
    std::tie(r.acc_mean, r.acc_std) = mean_std(acc);
    r.fused_std_mean = mean_std(sd).first;
    rows.push_back(r);
  }
  return rows;
}

std::string format_curve_csv(const std::vector<CurveRow>& rows) {
  std::string out = "size,n_num,n_ai,trials,ps_mean,ps_std,acc_mean,acc_std\n";
  for (const auto& r : rows)
    out += std::to_string(r.size) + "," + std::to_string(r.n_num) + "," + std::to_string(r.n_ai) + "," +
           std::to_string(r.trials) + "," + format_fixed(r.ps_mean, 6) + "," + format_fixed(r.ps_std, 6) + "," +
           format_fixed(r.acc_mean, 6) + "," + format_fixed(r.acc_std, 6) + "\n";
  return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("spearman needs two equal-length series of length >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("spearman undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

const std::set<std::string>& scaling_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {"sizes",          "ratio",     "trials",      "alpha",  "nlat",     "nlon",
                               "climatology_mm", "amplitude", "truth_slope", "n_init", "n_latent"};
    for (const auto& s : ensemble::numerical_manifest_keys()) k.insert(s);
    for (const auto& s : ensemble::surrogate_keys()) k.insert(s);
    return k;
  }();
  return keys;
}

ScalingConfig scaling_config_from(const KeyValueConfig& kv, ScalingConfig c) {
  std::vector<long long> sizes(c.sizes.begin(), c.sizes.end());
  sizes = kv.get_int_list("sizes", sizes);
  c.sizes.assign(sizes.begin(), sizes.end());
  if (kv.has("ratio")) {
    const std::string r = kv.get_string("ratio", "");
    const auto colon = r.find(':');
    if (colon == std::string::npos) throw ConfigError("ratio must look like '1:10'");
    try {
      c.ratio_num = static_cast<int>(parse_int(r.substr(0, colon)));
      c.ratio_ai = static_cast<int>(parse_int(r.substr(colon + 1)));
    } catch (const ParseError&) {
      throw ConfigError("ratio must look like '1:10'");
    }
  }
  c.trials = static_cast<int>(kv.get_int("trials", c.trials));
  c.fusion.alpha = kv.get_double("alpha", c.fusion.alpha);
  auto& b = c.benchmark;
  b.grid.nlat = static_cast<int>(kv.get_int("nlat", b.grid.nlat));
  b.grid.nlon = static_cast<int>(kv.get_int("nlon", b.grid.nlon));
  b.climatology_mm = kv.get_double("climatology_mm", b.climatology_mm);
  b.amplitude = kv.get_double("amplitude", b.amplitude);
  b.truth_slope = kv.get_double("truth_slope", b.truth_slope);
  b.n_init = static_cast<int>(kv.get_int("n_init", b.n_init));
  b.n_latent = static_cast<int>(kv.get_int("n_latent", b.n_latent));
  b.numerical = ensemble::numerical_manifest_from(kv, b.numerical);
  b.skill = ensemble::surrogate_from(kv, b.skill);
  c.validate();
  return c;
}

}  // namespace capeskit::scaling
