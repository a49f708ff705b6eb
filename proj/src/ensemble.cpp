#include "capeskit/ensemble.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <exception>
#include <optional>
#include <random>
#include <unsupported/Eigen/FFT>

#include "capeskit/attention/model.hpp"
#include "capeskit/error.hpp"
#include "capeskit/io.hpp"
#include "capeskit/reduce.hpp"
#include "capeskit/seed.hpp"

namespace capeskit::ensemble {

using fusion::Member;
using fusion::MemberMeta;
using fusion::Track;

void PerturbationSpec::validate() const {
  if (n_init < 1 || n_latent < 1) throw ConfigError("n_init and n_latent must be >= 1");
  if (!(field_sigma >= 0.0) || !(latent_sigma >= 0.0)) throw ConfigError("perturbation sigmas must be >= 0");
  if (!std::isfinite(spectral_slope)) throw ConfigError("spectral_slope must be finite");
}

void NumericalManifestConfig::validate() const {
  if (start_dates.empty()) throw ConfigError("numerical manifest needs at least one start date");
  if (param_steps_i < 0 || param_steps_j < 0) throw ConfigError("parameter steps must be >= 0");
  if (schemes.empty() && param_steps_i * param_steps_j == 0)
    throw ConfigError("numerical manifest needs schemes or a parameter lattice");
}

double param_coordinate(int index, int steps) {
  return steps <= 1 ? 0.0 : static_cast<double>(index) / static_cast<double>(steps - 1);
}

std::vector<MemberMeta> build_numerical_manifest(const NumericalManifestConfig& cfg) {
  cfg.validate();
  std::vector<MemberMeta> out;
  out.reserve(cfg.member_count());
  for (int d = 0; d < static_cast<int>(cfg.start_dates.size()); ++d) {
    const std::string date = "num-d" + std::to_string(d);
    for (int s = 0; s < static_cast<int>(cfg.schemes.size()); ++s) {
      MemberMeta m;
      m.id = date + "-s" + std::to_string(s);
      m.track = Track::numerical;
      m.start_date_index = d;
      m.scheme_index = s;
      out.push_back(std::move(m));
    }
    for (int i = 0; i < cfg.param_steps_i; ++i)
      for (int j = 0; j < cfg.param_steps_j; ++j) {
        MemberMeta m;
        m.id = date + "-p" + std::to_string(i) + "-" + std::to_string(j);
        m.track = Track::numerical;
        m.start_date_index = d;
        m.param_i = i;
        m.param_j = j;
        out.push_back(std::move(m));
      }
  }
  return out;
}

GridField correlated_field(const GridSpec& spec, std::uint64_t seed, double sigma, double slope) {
  spec.validate();
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("correlated_field sigma must be >= 0");
  const int ny = spec.nlat, nx = spec.nlon;
  const std::size_t n = spec.cells();
  if (sigma == 0.0 || n < 2) return GridField::filled(spec, Units::percent, 0.0);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<std::complex<double>> spectrum(n);
  for (int ky = 0; ky < ny; ++ky)
    for (int kx = 0; kx < nx; ++kx) {
      const double fy = std::min(ky, ny - ky), fx = std::min(kx, nx - kx);
      const double amp = std::pow(1.0 + std::hypot(fy, fx), -0.5 * slope);
      const double re = normal(rng), im = normal(rng);
      spectrum[static_cast<std::size_t>(ky) * nx + kx] = (ky == 0 && kx == 0) ? 0.0 : amp * std::complex<double>(re, im);
    }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in, out;
  in.resize(static_cast<std::size_t>(nx));
  for (int y = 0; y < ny; ++y) {
    std::copy_n(spectrum.begin() + static_cast<std::ptrdiff_t>(y) * nx, nx, in.begin());
    fft.inv(out, in);
    std::copy(out.begin(), out.end(), spectrum.begin() + static_cast<std::ptrdiff_t>(y) * nx);
  }
  in.resize(static_cast<std::size_t>(ny));
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) in[static_cast<std::size_t>(y)] = spectrum[static_cast<std::size_t>(y) * nx + x];
    fft.inv(out, in);
    for (int y = 0; y < ny; ++y) spectrum[static_cast<std::size_t>(y) * nx + x] = out[static_cast<std::size_t>(y)];
  }

  std::vector<double> v(n);
  CompensatedSum mean_sum;
  for (std::size_t i = 0; i < n; ++i) mean_sum.add(v[i] = spectrum[i].real());
  const double mean = mean_sum.value() / static_cast<double>(n);
  CompensatedSum ss;
  for (double& x : v) {
    x -= mean;
    ss.add(x * x);
  }
  const double sd = std::sqrt(ss.value() / static_cast<double>(n - 1));
  if (!(sd > 0.0)) return GridField::filled(spec, Units::percent, 0.0);
  for (double& x : v) x *= sigma / sd;
  return GridField(spec, Units::percent, std::move(v));
}

namespace {

std::uint64_t bias_seed(const MemberMeta& meta, std::uint64_t seed) {
  if (meta.track == Track::ai) return derive_seed(seed, "bias-init", {meta.init_seed.value_or(0)});
  if (meta.scheme_index) return derive_seed(seed, "bias-scheme", {static_cast<std::uint64_t>(*meta.scheme_index)});
  return derive_seed(seed, "bias-param",
                     {static_cast<std::uint64_t>(meta.param_i.value_or(0)),
                      static_cast<std::uint64_t>(meta.param_j.value_or(0))});
}

// Runs body(k) for k in [0, n) across threads, rethrowing the first failure.
template <class F>
void parallel_for(std::ptrdiff_t n, F&& body) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
#pragma omp critical(capeskit_ensemble_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  CompensatedSum s;
  for (double x : v) s.add(x);
  const double mean = s.value() / static_cast<double>(v.size());
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  return std::sqrt(ss.value() / static_cast<double>(v.size() - 1));
}

}  // namespace

AnomalyField surrogate_member(const MemberMeta& meta, const AnomalyField& truth, const SkillConfig& skill,
                              std::uint64_t seed) {
  const GridSpec& spec = truth.spec();
  const GridField bias = correlated_field(spec, bias_seed(meta, seed), skill.bias_sigma, skill.bias_slope);
  const GridField noise =
      correlated_field(spec, derive_seed(seed, "noise", {hash_role(meta.id)}), skill.noise_sigma, skill.noise_slope);
  std::vector<double> v(truth.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = truth[i] + bias[i] + noise[i];
  return AnomalyField(spec, std::move(v));
}

fusion::EnsembleSet build_surrogate_ensemble(const std::vector<MemberMeta>& metas, const AnomalyField& truth,
                                             const SurrogateConfig& skill, std::uint64_t seed) {
  std::vector<std::optional<Member>> slots(metas.size());
  parallel_for(static_cast<std::ptrdiff_t>(metas.size()), [&](std::ptrdiff_t k) {
    const MemberMeta& m = metas[static_cast<std::size_t>(k)];
    slots[static_cast<std::size_t>(k)] = Member{m, surrogate_member(m, truth, skill.of(m.track), seed)};
  });
  std::vector<Member> members;
  members.reserve(slots.size());
  for (auto& s : slots) members.push_back(std::move(*s));
  return fusion::EnsembleSet(std::move(members));
}

std::string ai_member_id(int i, int j, const PerturbationSpec& p) {
  const int width = std::max<int>(2, static_cast<int>(std::to_string(std::max(p.n_init, p.n_latent) - 1).size()));
  auto pad = [width](int v) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
  };
  return "ai-i" + pad(i) + "-j" + pad(j);
}

std::uint64_t init_seed(const PerturbationSpec& p, int i) {
  return derive_seed(p.base_seed, "init", {static_cast<std::uint64_t>(i)});
}

std::uint64_t latent_seed(const PerturbationSpec& p, int i, int j) {
  return derive_seed(p.base_seed, "latent", {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
}

std::vector<MemberMeta> ai_member_metas(const PerturbationSpec& p) {
  p.validate();
  std::vector<MemberMeta> out;
  out.reserve(static_cast<std::size_t>(p.n_init) * p.n_latent);
  for (int i = 0; i < p.n_init; ++i)
    for (int j = 0; j < p.n_latent; ++j) {
      MemberMeta m;
      m.id = ai_member_id(i, j, p);
      m.track = Track::ai;
      m.init_seed = init_seed(p, i);
      m.latent_seed = latent_seed(p, i, j);
      out.push_back(std::move(m));
    }
  return out;
}

attention::ModelInputs perturbed_inputs(const attention::ModelInputs& base, const PerturbationSpec& p, int i) {
  const std::uint64_t s = init_seed(p, i);
  attention::ModelInputs out;
  out.reserve(base.size());
  for (std::size_t v = 0; v < base.size(); ++v) {
    auto& domain = out.emplace_back();
    for (std::size_t c = 0; c < base[v].size(); ++c) {
      const GridField& f = base[v][c];
      const double sigma = p.field_sigma / 100.0 * sample_std(f.values());
      const GridField dx = correlated_field(f.spec(), derive_seed(s, "channel", {v, c}), sigma, p.spectral_slope);
      std::vector<double> vals(f.values().begin(), f.values().end());
      for (std::size_t k = 0; k < vals.size(); ++k) vals[k] += dx[k];
      domain.emplace_back(f.spec(), f.units(), std::move(vals));
    }
  }
  return out;
}

namespace {

attention::AttentionConfig member_config(attention::AttentionConfig cfg, const PerturbationSpec& p) {
  cfg.latent_noise_sigma = p.latent_sigma;
  cfg.noise_layer = p.noise_layer;
  cfg.validate();
  return cfg;
}

Member run_member(const attention::ModelInputs& perturbed, const attention::ModelParams& params,
                  const attention::AttentionConfig& cfg, const PerturbationSpec& p, int i, int j) {
  MemberMeta m;
  m.id = ai_member_id(i, j, p);
  m.track = Track::ai;
  m.init_seed = init_seed(p, i);
  m.latent_seed = latent_seed(p, i, j);
  return Member{m, AnomalyField(attention::forward(params, perturbed, cfg, m.latent_seed))};
}

}  // namespace

Member ai_member(const attention::ModelInputs& base, const attention::ModelParams& params,
                 const attention::AttentionConfig& cfg, const PerturbationSpec& p, int i, int j) {
  p.validate();
  if (i < 0 || i >= p.n_init || j < 0 || j >= p.n_latent) throw DomainError("member index out of range");
  return run_member(perturbed_inputs(base, p, i), params, member_config(cfg, p), p, i, j);
}

fusion::EnsembleSet build_ai_ensemble(const attention::ModelInputs& base, const attention::ModelParams& params,
                                      const attention::AttentionConfig& cfg, const PerturbationSpec& p) {
  p.validate();
  const attention::AttentionConfig mcfg = member_config(cfg, p);
  attention::check_inputs(base, mcfg);
  attention::check_shapes(params, mcfg);

  std::vector<attention::ModelInputs> states(static_cast<std::size_t>(p.n_init));
  parallel_for(p.n_init, [&](std::ptrdiff_t i) {
    states[static_cast<std::size_t>(i)] = perturbed_inputs(base, p, static_cast<int>(i));
  });
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(p.n_init) * p.n_latent;
  std::vector<std::optional<Member>> slots(static_cast<std::size_t>(total));
  parallel_for(total, [&](std::ptrdiff_t k) {
    const int i = static_cast<int>(k / p.n_latent), j = static_cast<int>(k % p.n_latent);
    slots[static_cast<std::size_t>(k)] = run_member(states[static_cast<std::size_t>(i)], params, mcfg, p, i, j);
  });
  std::vector<Member> members;
  members.reserve(slots.size());
  for (auto& s : slots) members.push_back(std::move(*s));
  return fusion::EnsembleSet(std::move(members));
}

namespace {

void check_id(const std::string& id, int line_no) {
  const bool ok = !id.empty() && id != "." && id != ".." && std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.';
  });
  if (!ok) throw ParseError("member id '" + id + "' must be non-empty and use only [A-Za-z0-9._-]", line_no);
}

std::uint64_t parse_u64(std::string_view s, int line_no) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("expected an unsigned integer, got '" + std::string(s) + "'", line_no);
  return v;
}

}  // namespace

std::string format_manifest_line(const MemberMeta& meta, const NumericalManifestConfig* numerical) {
  std::vector<std::string> kv;
  if (meta.start_date_index) kv.push_back("date=" + std::to_string(*meta.start_date_index));
  if (meta.scheme_index) kv.push_back("scheme=" + std::to_string(*meta.scheme_index));
  if (meta.param_i) kv.push_back("param_i=" + std::to_string(*meta.param_i));
  if (meta.param_j) kv.push_back("param_j=" + std::to_string(*meta.param_j));
  if (numerical && meta.param_i && meta.param_j) {
    kv.push_back("coord_i=" + format_double(param_coordinate(*meta.param_i, numerical->param_steps_i)));
    kv.push_back("coord_j=" + format_double(param_coordinate(*meta.param_j, numerical->param_steps_j)));
  }
  if (meta.init_seed) kv.push_back("init_seed=" + std::to_string(*meta.init_seed));
  if (meta.latent_seed) kv.push_back("latent_seed=" + std::to_string(*meta.latent_seed));
  std::string line = meta.id + "\t" + std::string(fusion::to_string(meta.track)) + "\t";
  for (std::size_t k = 0; k < kv.size(); ++k) line += (k ? "," : "") + kv[k];
  return line;
}

MemberMeta parse_manifest_line(std::string_view line, int line_no) {
  const auto t1 = line.find('\t');
  const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
  if (t2 == std::string_view::npos) throw ParseError("expected 'id<TAB>track<TAB>key=value,...'", line_no);
  MemberMeta m;
  m.id = std::string(line.substr(0, t1));
  check_id(m.id, line_no);
  try {
    m.track = fusion::parse_track(line.substr(t1 + 1, t2 - t1 - 1));
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line_no);
  }
  std::string_view rest = line.substr(t2 + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value, got '" + std::string(item) + "'", line_no);
    const std::string_view key = item.substr(0, eq), val = item.substr(eq + 1);
    auto small = [&]() { return static_cast<int>(parse_int(val, line_no)); };
    if (key == "date") m.start_date_index = small();
    else if (key == "scheme") m.scheme_index = small();
    else if (key == "param_i") m.param_i = small();
    else if (key == "param_j") m.param_j = small();
    else if (key == "init_seed") m.init_seed = parse_u64(val, line_no);
    else if (key == "latent_seed") m.latent_seed = parse_u64(val, line_no);
    else if (key == "coord_i" || key == "coord_j") {
      const double c = parse_double(val, line_no);
      if (!(c >= 0.0 && c <= 1.0)) throw ParseError("parameter coordinates must lie in [0,1]", line_no);
    } else {
      throw ParseError("unknown manifest key '" + std::string(key) + "'", line_no);
    }
  }
  try {
    m.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), line_no);
  }
  return m;
}

void write_ensemble_dir(const fusion::EnsembleSet& e, const std::filesystem::path& dir,
                        const NumericalManifestConfig* numerical) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory: " + ec.message());
  std::string manifest;
  for (const auto& m : e.members()) {
    check_id(m.meta.id, 0);
    manifest += format_manifest_line(m.meta, numerical) + "\n";
  }
  std::exception_ptr failure;
  const auto& members = e.members();
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(members.size()); ++k) {
    try {
      const auto& m = members[static_cast<std::size_t>(k)];
      write_grid(m.field.grid(), dir / (m.meta.id + ".grd"));
    } catch (...) {
#pragma omp critical(capeskit_ensemble_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  atomic_write(dir / kManifestName, manifest);
}

fusion::EnsembleSet read_ensemble_dir(const std::filesystem::path& dir, const Climatology* clim) {
  const std::filesystem::path manifest_path = dir / kManifestName;
  const std::string text = read_text(manifest_path);
  std::vector<MemberMeta> metas;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    try {
      metas.push_back(parse_manifest_line(line, line_no));
    } catch (const ParseError& e) {
      throw ParseError(manifest_path.string() + ": " + e.what(), 0);
    }
  }
  if (metas.empty()) throw DomainError(dir.string() + ": empty ensemble directory");
  std::vector<Member> members;
  members.reserve(metas.size());
  for (auto& meta : metas) {
    GridField f = read_grid(dir / (meta.id + ".grd"));
    if (f.units() == Units::percent) {
      members.push_back(Member{std::move(meta), AnomalyField(std::move(f))});
    } else if (f.units() == Units::mm && clim) {
      AnomalyField a = anomaly_percent(f, *clim);
      members.push_back(Member{std::move(meta), std::move(a)});
    } else {
      throw UnitError((dir / (meta.id + ".grd")).string() + ": member fields must be percent anomalies" +
                      (f.units() == Units::mm ? " (or mm with a climatology)" : ""));
    }
  }
  return fusion::EnsembleSet(std::move(members));
}

const std::set<std::string>& perturbation_keys() {
  static const std::set<std::string> keys = {"n_init",          "n_latent",      "field_sigma",
                                             "spectral_slope", "latent_noise_sigma", "noise_layer"};
  return keys;
}

PerturbationSpec perturbation_from(const KeyValueConfig& kv, PerturbationSpec p) {
  p.n_init = static_cast<int>(kv.get_int("n_init", p.n_init));
  p.n_latent = static_cast<int>(kv.get_int("n_latent", p.n_latent));
  p.field_sigma = kv.get_double("field_sigma", p.field_sigma);
  p.spectral_slope = kv.get_double("spectral_slope", p.spectral_slope);
  p.latent_sigma = kv.get_double("latent_noise_sigma", p.latent_sigma);
  p.noise_layer = static_cast<int>(kv.get_int("noise_layer", p.noise_layer));
  p.validate();
  return p;
}

const std::set<std::string>& numerical_manifest_keys() {
  static const std::set<std::string> keys = {"start_dates",  "schemes",       "param_axis_i",
                                             "param_axis_j", "param_steps_i", "param_steps_j"};
  return keys;
}

NumericalManifestConfig numerical_manifest_from(const KeyValueConfig& kv, NumericalManifestConfig c) {
  c.start_dates = kv.get_string_list("start_dates", c.start_dates);
  c.schemes = kv.get_string_list("schemes", c.schemes);
  c.param_axis_i = kv.get_string("param_axis_i", c.param_axis_i);
  c.param_axis_j = kv.get_string("param_axis_j", c.param_axis_j);
  c.param_steps_i = static_cast<int>(kv.get_int("param_steps_i", c.param_steps_i));
  c.param_steps_j = static_cast<int>(kv.get_int("param_steps_j", c.param_steps_j));
  c.validate();
  return c;
}

const std::set<std::string>& surrogate_keys() {
  static const std::set<std::string> keys = {
      "numerical_bias_sigma", "numerical_bias_slope", "numerical_noise_sigma", "numerical_noise_slope",
      "ai_bias_sigma",        "ai_bias_slope",        "ai_noise_sigma",        "ai_noise_slope"};
  return keys;
}

SurrogateConfig surrogate_from(const KeyValueConfig& kv, SurrogateConfig c) {
  auto read = [&](const std::string& prefix, SkillConfig& s) {
    s.bias_sigma = kv.get_double(prefix + "_bias_sigma", s.bias_sigma);
    s.bias_slope = kv.get_double(prefix + "_bias_slope", s.bias_slope);
    s.noise_sigma = kv.get_double(prefix + "_noise_sigma", s.noise_sigma);
    s.noise_slope = kv.get_double(prefix + "_noise_slope", s.noise_slope);
    if (!(s.bias_sigma >= 0.0) || !(s.noise_sigma >= 0.0))
      throw ConfigError(prefix + " surrogate sigmas must be >= 0");
  };
  read("numerical", c.numerical);
  read("ai", c.ai);
  return c;
}

}  // namespace capeskit::ensemble
