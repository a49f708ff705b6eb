#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "capeskit/config_file.hpp"
#include "capeskit/ensemble.hpp"
#include "capeskit/fusion.hpp"
#include "capeskit/grid.hpp"

namespace capeskit::scaling {

/// Synthetic truth and the member pool drawn around it.
struct BenchmarkConfig {
  GridSpec grid{32, 32, 0.0, 1.0, 0.0, 1.0};
  double climatology_mm = 300.0;
  double amplitude = 60.0;  ///< truth anomaly std, percent
  double truth_slope = 3.0;
  ensemble::NumericalManifestConfig numerical;
  int n_init = 40;
  int n_latent = 40;
  ensemble::SurrogateConfig skill;

  void validate() const;
};

struct Benchmark {
  AnomalyField truth;
  Climatology climatology;
  fusion::EnsembleSet members;
};

/// Smooth seeded anomaly pattern with std `amplitude`.
AnomalyField synthetic_truth(const GridSpec& spec, std::uint64_t seed, double amplitude, double slope);

/// Throws DomainError ("benchmark-degenerate") unless the field has cells in
/// the normal, first and second bands and at least one extreme cell.
void require_category_coverage(const AnomalyField& truth);

/// Truth, a flat climatology and the full surrogate pool (numerical manifest
/// plus n_init x n_latent AI metas). Pure function of (cfg, seed).
Benchmark synthetic_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed);

/// Seeded uniform sampling without replacement within each track; members
/// of the result are ordered by id.
fusion::EnsembleSet subsample(const fusion::EnsembleSet& e, int n_num, int n_ai, std::uint64_t seed);

struct ScalingConfig {
  std::vector<int> sizes = {11, 22, 44, 88, 176};
  int ratio_num = 1;
  int ratio_ai = 10;
  int trials = 50;
  fusion::FusionConfig fusion;
  BenchmarkConfig benchmark;

  void validate() const;
  /// (n_num, n_ai) for a total size; throws ConfigError when the ratio does
  /// not divide it.
  std::pair<int, int> composition(int size) const;
};

struct CurveRow {
  int size = 0;
  int n_num = 0;
  int n_ai = 0;
  int trials = 0;
  double ps_mean = 0.0;
  double ps_std = 0.0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double fused_std_mean = 0.0;  ///< spatial std of the fused field, averaged over trials
};

/// Per size (ascending) and trial: subsample, fuse with contribution weights,
/// score against truth. Trial t of size s uses seed derive_seed(seed, "trial", {s, t}).
std::vector<CurveRow> skill_curve(const fusion::EnsembleSet& pool, const AnomalyField& truth, const ScalingConfig& cfg,
                                  std::uint64_t seed);

/// CSV `size,n_num,n_ai,trials,ps_mean,ps_std,acc_mean,acc_std` with header.
std::string format_curve_csv(const std::vector<CurveRow>& rows);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

const std::set<std::string>& scaling_keys();
ScalingConfig scaling_config_from(const KeyValueConfig& kv, ScalingConfig base = {});

}  // namespace capeskit::scaling
