#include "capeskit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "capeskit/error.hpp"
#include "capeskit/io.hpp"
#include "capeskit/reduce.hpp"
#include "capeskit/verify.hpp"

namespace capeskit::fusion {

std::string_view to_string(Track t) { return t == Track::numerical ? "numerical" : "ai"; }

Track parse_track(std::string_view s) {
  if (s == "numerical") return Track::numerical;
  if (s == "ai") return Track::ai;
  throw ParseError("unknown track '" + std::string(s) + "'", 0);
}

void MemberMeta::validate() const {
  if (id.empty()) throw DomainError("member id must not be empty");
  if (track == Track::numerical) {
    if (!scheme_index && !(param_i && param_j))
      throw DomainError("numerical member '" + id + "' needs a scheme or parameter index");
  } else if (!init_seed || !latent_seed) {
    throw DomainError("ai member '" + id + "' needs both seeds");
  }
}

EnsembleSet::EnsembleSet(std::vector<Member> members) : members_(std::move(members)) {
  if (members_.empty()) throw DomainError("ensemble must contain at least one member");
  std::unordered_set<std::string> ids;
  for (const auto& m : members_) {
    require_compatible(members_.front().field.spec(), m.field.spec(), "ensemble member " + m.meta.id);
    if (!ids.insert(m.meta.id).second) throw DomainError("duplicate member id '" + m.meta.id + "'");
  }
}

void FusionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fusion alpha must lie in [0,1]");
  if (!(degenerate_fill >= 0.0 && degenerate_fill <= 1.0))
    throw ConfigError("degenerate_fill must lie in [0,1]");
}

namespace {

std::vector<std::size_t> id_order(const EnsembleSet& e) {
  std::vector<std::size_t> order(e.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return e[a].meta.id < e[b].meta.id; });
  return order;
}

}  // namespace

AnomalyField ensemble_median(const EnsembleSet& e) {
  const std::size_t n = e.size();
  const auto cells = static_cast<std::ptrdiff_t>(e.spec().cells());
  std::vector<double> out(static_cast<std::size_t>(cells));
#pragma omp parallel
  {
    std::vector<double> col(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < cells; ++c) {
      for (std::size_t k = 0; k < n; ++k) col[k] = e[k].field[static_cast<std::size_t>(c)];
      const auto mid = col.begin() + static_cast<std::ptrdiff_t>(n / 2);
      std::nth_element(col.begin(), mid, col.end());
      double med = *mid;
      if (n % 2 == 0) med = 0.5 * (*std::max_element(col.begin(), mid) + med);
      out[static_cast<std::size_t>(c)] = med;
    }
  }
  return AnomalyField(e.spec(), std::move(out));
}

double sign_consistency(const AnomalyField& member, const AnomalyField& median) {
  require_compatible(member.spec(), median.spec(), "member vs median");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < member.size(); ++i)
    if (verify::sign_hit(member[i], median[i])) ++agree;
  return static_cast<double>(agree) / static_cast<double>(member.size());
}

double anomaly_magnitude(const AnomalyField& member) {
  const auto v = member.values();
  return deterministic_sum(v.size(), [&](std::size_t i) { return std::fabs(v[i]); }) /
         static_cast<double>(v.size());
}

std::vector<MemberScore> contribution_scores(const EnsembleSet& e, const FusionConfig& cfg) {
  cfg.validate();
  const std::size_t n = e.size();
  const AnomalyField median = ensemble_median(e);
  std::vector<MemberScore> scores(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const auto& m = e[static_cast<std::size_t>(k)];
    auto& s = scores[static_cast<std::size_t>(k)];
    s.id = m.meta.id;
    s.track = m.meta.track;
    s.s1 = sign_consistency(m.field, median);
    s.s2 = anomaly_magnitude(m.field);
  }

  auto normalize = [&](double MemberScore::*raw, double MemberScore::*norm) {
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end(),
                                              [&](const auto& a, const auto& b) { return a.*raw < b.*raw; });
    const double min = (*lo).*raw, max = (*hi).*raw;
    for (auto& s : scores) s.*norm = max > min ? (s.*raw - min) / (max - min) : cfg.degenerate_fill;
  };
  normalize(&MemberScore::s1, &MemberScore::s1_norm);
  normalize(&MemberScore::s2, &MemberScore::s2_norm);

  std::vector<double> raw(n);
  for (std::size_t k = 0; k < n; ++k)
    raw[k] = cfg.alpha * scores[k].s1_norm + (1.0 - cfg.alpha) * scores[k].s2_norm;
  CompensatedSum total;
  for (std::size_t k : id_order(e)) total.add(raw[k]);
  const double sum = total.value();
  for (std::size_t k = 0; k < n; ++k)
    scores[k].weight = sum > 0.0 ? raw[k] / sum : 1.0 / static_cast<double>(n);
  return scores;
}

std::vector<double> weights_of(const std::vector<MemberScore>& scores) {
  std::vector<double> w;
  w.reserve(scores.size());
  for (const auto& s : scores) w.push_back(s.weight);
  return w;
}

AnomalyField fuse(const EnsembleSet& e, const std::vector<double>& weights) {
  if (weights.size() != e.size())
    throw DomainError("weight count " + std::to_string(weights.size()) + " != member count " +
                      std::to_string(e.size()));
  CompensatedSum total;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("fusion weights must be nonnegative");
    total.add(w);
  }
  if (std::fabs(total.value() - 1.0) > 1e-9) throw DomainError("fusion weights must sum to 1");

  const auto order = id_order(e);
  const auto cells = static_cast<std::ptrdiff_t>(e.spec().cells());
  std::vector<double> out(static_cast<std::size_t>(cells));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    double acc = 0.0;
    for (std::size_t k : order) acc += weights[k] * e[k].field[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(c)] = acc;
  }
  return AnomalyField(e.spec(), std::move(out));
}

AnomalyField ensemble_mean(const EnsembleSet& e) {
  return fuse(e, std::vector<double>(e.size(), 1.0 / static_cast<double>(e.size())));
}

std::string format_weights_csv(const std::vector<MemberScore>& scores) {
  std::string out = "member_id,track,s1,s2,weight\n";
  for (const auto& s : scores) {
    out += s.id + "," + std::string(to_string(s.track)) + "," + format_double(s.s1) + "," +
           format_double(s.s2) + "," + format_double(s.weight) + "\n";
  }
  return out;
}

}  // namespace capeskit::fusion
