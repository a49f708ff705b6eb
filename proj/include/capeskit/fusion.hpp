#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capeskit/grid.hpp"

namespace capeskit::fusion {

enum class Track { numerical, ai };

std::string_view to_string(Track t);
Track parse_track(std::string_view s);

/// Provenance of one ensemble member.
struct MemberMeta {
  std::string id;
  Track track = Track::numerical;
  std::optional<int> start_date_index;
  std::optional<int> scheme_index;
  std::optional<int> param_i;
  std::optional<int> param_j;
  std::optional<std::uint64_t> init_seed;
  std::optional<std::uint64_t> latent_seed;

  /// Numerical members carry a scheme or parameter index; AI members carry both seeds.
  void validate() const;
  bool operator==(const MemberMeta&) const = default;
};

struct Member {
  MemberMeta meta;
  AnomalyField field;
};

/// Non-empty ordered member list sharing one grid, with unique ids.
class EnsembleSet {
 public:
  explicit EnsembleSet(std::vector<Member> members);

  const std::vector<Member>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  const GridSpec& spec() const { return members_.front().field.spec(); }
  const Member& operator[](std::size_t i) const { return members_[i]; }

 private:
  std::vector<Member> members_;
};

struct FusionConfig {
  double alpha = 0.5;  ///< weight of sign consistency against anomaly magnitude
  double degenerate_fill = 0.5;
  void validate() const;
};

/// Per-cell median; even counts take the midpoint of the two central values.
AnomalyField ensemble_median(const EnsembleSet& e);

/// Fraction of cells whose sign matches the median's (verify::sign_hit rule).
double sign_consistency(const AnomalyField& member, const AnomalyField& median);

/// Mean |a| over cells.
double anomaly_magnitude(const AnomalyField& member);

struct MemberScore {
  std::string id;
  Track track;
  double s1 = 0.0;  ///< sign consistency
  double s2 = 0.0;  ///< anomaly magnitude
  double s1_norm = 0.0;
  double s2_norm = 0.0;
  double weight = 0.0;
};

/// Contribution scores in member order. Normalization and the weight sum run
/// in id order so the result does not depend on member order.
std::vector<MemberScore> contribution_scores(const EnsembleSet& e, const FusionConfig& cfg = {});

std::vector<double> weights_of(const std::vector<MemberScore>& scores);

/// Weighted per-cell sum of member anomalies. Weights must be nonnegative and
/// sum to 1 within 1e-9.
AnomalyField fuse(const EnsembleSet& e, const std::vector<double>& weights);

/// Plain mean, the unweighted baseline.
AnomalyField ensemble_mean(const EnsembleSet& e);

/// CSV `member_id,track,s1,s2,weight` with header.
std::string format_weights_csv(const std::vector<MemberScore>& scores);

}  // namespace capeskit::fusion
