#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tokens.hpp"
#include "capeskit/config_file.hpp"
#include "capeskit/fusion.hpp"
#include "capeskit/grid.hpp"

namespace capeskit::ensemble {

/// Dual perturbation of the AI track: n_init initial states, each run with
/// n_latent latent-noise draws.
struct PerturbationSpec {
  int n_init = 40;
  int n_latent = 40;
  std::uint64_t base_seed = 0;
  double field_sigma = 10.0;  ///< initial perturbation std, percent of each channel's std
  double spectral_slope = 3.0;
  double latent_sigma = 0.1;
  int noise_layer = -1;

  void validate() const;
};

/// Start dates x physics schemes, plus start dates x a two-parameter lattice.
struct NumericalManifestConfig {
  std::vector<std::string> start_dates = {"d0", "d1", "d2"};
  std::vector<std::string> schemes = {"s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8"};
  std::string param_axis_i = "param_a";
  std::string param_axis_j = "param_b";
  int param_steps_i = 7;
  int param_steps_j = 7;

  void validate() const;
  std::size_t member_count() const {
    return start_dates.size() * (schemes.size() + static_cast<std::size_t>(param_steps_i) * param_steps_j);
  }
};

/// Dates-major: for each date, its scheme members, then its parameter members
/// with param_i slow. Ids are `num-d<date>-s<scheme>` and `num-d<date>-p<i>-<j>`.
std::vector<fusion::MemberMeta> build_numerical_manifest(const NumericalManifestConfig& cfg);

/// Normalized lattice coordinate in [0,1]; 0 for a single-step axis.
double param_coordinate(int index, int steps);

/// Zero-mean random field with sample std `sigma` (percent units) from a
/// power spectrum (1 + |k|)^-slope: seeded complex Gaussian coefficients
/// scaled by (1 + |k|)^(-slope/2), inverse 2-D FFT, real part. Zero when
/// sigma is 0 or the grid has a single cell.
GridField correlated_field(const GridSpec& spec, std::uint64_t seed, double sigma, double slope);

/// Surrogate member error model: truth + bias + noise, both correlated fields.
struct SkillConfig {
  double bias_sigma = 0.0;
  double bias_slope = 4.0;
  double noise_sigma = 0.0;
  double noise_slope = 3.0;
};

struct SurrogateConfig {
  SkillConfig numerical{40.0, 4.0, 90.0, 3.0};
  SkillConfig ai{30.0, 4.0, 120.0, 3.0};

  const SkillConfig& of(fusion::Track t) const { return t == fusion::Track::numerical ? numerical : ai; }
};

/// Bias is keyed by the member's structural identity (scheme, parameter
/// point, or initial state) so members sharing it share the bias; noise is
/// keyed by member id.
AnomalyField surrogate_member(const fusion::MemberMeta& meta, const AnomalyField& truth, const SkillConfig& skill,
                              std::uint64_t seed);

fusion::EnsembleSet build_surrogate_ensemble(const std::vector<fusion::MemberMeta>& metas, const AnomalyField& truth,
                                             const SurrogateConfig& skill, std::uint64_t seed);

/// `ai-iXX-jXX`, zero-padded to the width of the larger count (at least 2).
std::string ai_member_id(int i, int j, const PerturbationSpec& p);

std::uint64_t init_seed(const PerturbationSpec& p, int i);
std::uint64_t latent_seed(const PerturbationSpec& p, int i, int j);

/// Metas in (i, j) lexicographic order.
std::vector<fusion::MemberMeta> ai_member_metas(const PerturbationSpec& p);

/// Base inputs plus the i-th initial perturbation, one correlated field per
/// (domain, channel).
attention::ModelInputs perturbed_inputs(const attention::ModelInputs& base, const PerturbationSpec& p, int i);

/// Member (i, j) alone; equal to its entry in build_ai_ensemble.
fusion::Member ai_member(const attention::ModelInputs& base, const attention::ModelParams& params,
                         const attention::AttentionConfig& cfg, const PerturbationSpec& p, int i, int j);

fusion::EnsembleSet build_ai_ensemble(const attention::ModelInputs& base, const attention::ModelParams& params,
                                      const attention::AttentionConfig& cfg, const PerturbationSpec& p);

/// Manifest line `id<TAB>track<TAB>key=value,...`.
std::string format_manifest_line(const fusion::MemberMeta& meta, const NumericalManifestConfig* numerical = nullptr);
fusion::MemberMeta parse_manifest_line(std::string_view line, int line_no);

inline constexpr const char* kManifestName = "manifest.tsv";

/// Writes manifest.tsv and one `<id>.grd` per member into `dir` (created).
void write_ensemble_dir(const fusion::EnsembleSet& e, const std::filesystem::path& dir,
                        const NumericalManifestConfig* numerical = nullptr);

/// Reads members in manifest order. Fields in mm are rejected unless a
/// climatology is given to convert them.
fusion::EnsembleSet read_ensemble_dir(const std::filesystem::path& dir, const Climatology* clim = nullptr);

const std::set<std::string>& perturbation_keys();
PerturbationSpec perturbation_from(const KeyValueConfig& kv, PerturbationSpec base = {});
const std::set<std::string>& numerical_manifest_keys();
NumericalManifestConfig numerical_manifest_from(const KeyValueConfig& kv, NumericalManifestConfig base = {});
const std::set<std::string>& surrogate_keys();
SurrogateConfig surrogate_from(const KeyValueConfig& kv, SurrogateConfig base = {});

}  // namespace capeskit::ensemble
