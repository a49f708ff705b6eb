#pragma once

#include <cstdint>
#include <string>

#include "capeskit/attention/config.hpp"

namespace capeskit::attention {

/// Multiply-adds of the attention cores (scores plus weighted values) over all
/// layers for a sequence of length L. Projections are excluded: they cost the
/// same L d^2 for every variant.
///   window   = 2 L w^2 d
///   crossvar = 2 L S d     (S = tokens per location: domains, or 1 when stacked)
///   anchor   = 4 L m d     (aggregate m x L plus broadcast L x m)
///   dense    = 2 L^2 d
struct FlopCount {
  std::uint64_t window = 0;
  std::uint64_t crossvar = 0;
  std::uint64_t anchor = 0;
  std::uint64_t dense = 0;

  std::uint64_t trilevel() const { return window + crossvar + anchor; }
};

FlopCount flop_count(const AttentionConfig& cfg, std::uint64_t length);

/// CSV rows `level,L,flops` for window, crossvar, anchor, trilevel, dense (no header).
std::string format_flop_rows(const FlopCount& f, std::uint64_t length);

/// Picks a grid of patches realizing `length` tokens for timing: per-stream
/// patch count length / streams, factored into rows x cols with both divisible
/// by the window size and rows as close to square as possible. Throws
/// ConfigError when no such factorization exists.
AttentionConfig config_for_length(const AttentionConfig& base, int length);

/// Wall time in seconds of one window + cross-variable + anchor pass at this
/// config (median of `repeats`).
double time_trilevel(const AttentionConfig& cfg, int repeats, std::uint64_t seed = 1);

/// Same for the dense oracle over the full mask.
double time_dense(const AttentionConfig& cfg, int repeats, std::uint64_t seed = 1);

}  // namespace capeskit::attention
