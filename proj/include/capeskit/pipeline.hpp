#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tokens.hpp"
#include "capeskit/config_file.hpp"
#include "capeskit/ensemble.hpp"
#include "capeskit/fusion.hpp"
#include "capeskit/grid.hpp"

namespace capeskit::pipeline {

enum class Mode { ai, numerical, hybrid };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

/// Everything `generate` reads from its config file.
struct GenerateConfig {
  attention::AttentionConfig attention;
  double lat0 = 0.0, dlat = 1.0, lon0 = 0.0, dlon = 1.0;
  int raw_variables = 6;  ///< synthetic variables per domain before PCA
  std::optional<std::filesystem::path> model;
  ensemble::PerturbationSpec perturbation;
  ensemble::NumericalManifestConfig numerical;
  ensemble::SurrogateConfig skill;
  double amplitude = 60.0;
  double truth_slope = 3.0;

  GridSpec grid() const { return {attention.nlat, attention.nlon, lat0, dlat, lon0, dlon}; }
};

const std::set<std::string>& generate_keys();

/// Unknown keys are rejected. With `model` set, the attention settings come
/// from the TLA1 file and attention keys in the config are an error.
GenerateConfig generate_config_from(const KeyValueConfig& kv);

/// Seeded correlated raw variables per domain, PCA-compressed per domain to
/// the configured channel count.
attention::ModelInputs synthetic_inputs(const attention::AttentionConfig& cfg, const GridSpec& spec,
                                        int raw_variables, std::uint64_t seed);

/// Backbone, base state and perturbation spec the AI track of `generate` uses.
struct AiSetup {
  attention::ModelParams params;
  attention::ModelInputs base;
  ensemble::PerturbationSpec perturbation;
};

AiSetup ai_setup(const GenerateConfig& cfg, std::uint64_t seed);

/// Members in manifest order: numerical (dates-major) then AI ((i, j) order).
/// Numerical members are surrogates around synthetic_truth(seed); AI members
/// run the backbone on perturbed synthetic inputs. Pure function of
/// (mode, cfg, seed).
fusion::EnsembleSet generate(Mode mode, const GenerateConfig& cfg, std::uint64_t seed);

}  // namespace capeskit::pipeline
