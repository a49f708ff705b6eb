#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "capeskit/attention/config.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/tokens.hpp"
#include "capeskit/grid.hpp"

namespace capeskit::attention {

/// Runs the backbone: embed, then per layer window -> cross-variable ->
/// anchor -> MLP (each pre-norm with residual), optional seeded latent noise
/// after the noise layer, and a linear decoder from the atmosphere tokens back
/// to the native grid. The output is an anomaly-percent field.
GridField forward(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                  std::optional<std::uint64_t> latent_seed = std::nullopt);

/// Token states entering the decoder.
TokenSequence encode(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                     std::optional<std::uint64_t> latent_seed = std::nullopt);

GridField decode(const ModelParams& params, const TokenSequence& x, const AttentionConfig& cfg,
                 const GridSpec& spec);

struct InputGradients {
  std::vector<std::vector<std::vector<double>>> values;  ///< [domain][channel][cell]
};

struct LossGradients {
  double loss = 0.0;
  ModelParams params;
  InputGradients inputs;
};

/// Loss = sum over cells of (output - target)^2, target zero when absent.
/// Reverse-mode gradients for every parameter and input value. The
/// deterministic path only: latent noise is not applied.
LossGradients loss_and_gradients(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                                 const GridField* target = nullptr);

double loss(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
            const GridField* target = nullptr);

struct GradProbe {
  std::string name;  ///< tensor name or "input[v][c]"
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradProbe> probes;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Error of one probe: |a - n| / max(|a|, |n|, floor). Relative for
/// gradients above the floor, absolute below it, where a central difference
/// at h = 1e-5 cannot resolve more than ~1e-9 anyway.
inline constexpr double kRelErrorFloor = 1.0;

/// Compares analytic gradients of the sum-of-squares loss against central
/// differences at `probe_count` seeded positions drawn over all parameters and
/// inputs. Requires latent_noise_sigma == 0.
GradCheckReport grad_check(const ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                           int probe_count, std::uint64_t seed = 0);

/// Fixed-step gradient descent towards `target`; returns the loss before each step
/// and the final loss.
std::vector<double> fit_smoke(ModelParams& params, const ModelInputs& inputs, const AttentionConfig& cfg,
                              const GridField& target, int steps, double step_size);

}  // namespace capeskit::attention
