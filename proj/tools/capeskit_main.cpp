#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "capeskit/attention/flops.hpp"
#include "capeskit/attention/model.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/serialize.hpp"
#include "capeskit/config_file.hpp"
#include "capeskit/ensemble.hpp"
#include "capeskit/error.hpp"
#include "capeskit/fusion.hpp"
#include "capeskit/grid.hpp"
#include "capeskit/io.hpp"
#include "capeskit/pipeline.hpp"
#include "capeskit/scaling.hpp"
#include "capeskit/seed.hpp"
#include "capeskit/svg.hpp"
#include "capeskit/verify.hpp"

#ifndef CAPESKIT_VERSION
#define CAPESKIT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace capeskit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

// Raised when a command completes but its check fails (grad-check above tolerance).
struct CheckFailed {
  std::string message;
};

// Set by --manifest; replaces the default `<primary>.run.json` location.
std::string g_manifest_path;

class RunManifest {
 public:
  explicit RunManifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["version"] = CAPESKIT_VERSION;
    doc_["args"] = nlohmann::json::object();
    doc_["config"] = nlohmann::json::object();
    doc_["seed"] = nullptr;
    doc_["outputs"] = nlohmann::json::array();
    doc_["threads"] = omp_get_max_threads();
    doc_["reductions"] = "fixed-chunk compensated sums; results independent of thread count";
  }

  void arg(const std::string& name, const std::string& value) { doc_["args"][name] = value; }
  void config(const KeyValueConfig& kv) {
    for (const auto& [k, v] : kv.entries()) doc_["config"][k] = v;
  }
  void config_value(const std::string& k, const std::string& v) { doc_["config"][k] = v; }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  nlohmann::json& extra() { return doc_["results"]; }

  /// Sibling `<primary>.run.json`, so output directories stay reproducible.
  void write(const fs::path& primary) {
    fs::path target = primary;
    if (!target.has_filename()) target = target.parent_path();
    doc_["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path path = g_manifest_path.empty() ? fs::path(target.string() + ".run.json") : fs::path(g_manifest_path);
    atomic_write(path, doc_.dump(2) + "\n");
  }

 private:
  nlohmann::json doc_;
  std::chrono::steady_clock::time_point start_;
};

KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

AnomalyField as_anomaly(const GridField& f, const Climatology* clim, const std::string& what) {
  if (f.units() == Units::percent) return AnomalyField(f);
  if (f.units() == Units::mm && clim) return anomaly_percent(f, *clim);
  throw UnitError(what + ": expected mm (with a climatology) or percent anomalies, got " +
                  std::string(to_string(f.units())));
}

// ---- score -----------------------------------------------------------------

struct ScoreArgs {
  std::string forecast, obs, clim, mask, out;
  double floor = kDefaultClimatologyFloor;
};

int run_score(const ScoreArgs& a) {
  RunManifest manifest("score");
  manifest.arg("forecast", a.forecast);
  manifest.arg("obs", a.obs);
  manifest.arg("clim", a.clim);
  manifest.arg("mask", a.mask);
  manifest.arg("out", a.out);
  manifest.arg("floor", format_double(a.floor));

  const GridField fc = read_grid(a.forecast);
  const GridField ob = read_grid(a.obs);
  const Climatology clim(read_grid(a.clim), a.floor);
  std::optional<CellMask> mask;
  if (!a.mask.empty()) mask = CellMask::from_field(read_grid(a.mask));
  require_compatible(fc.spec(), ob.spec(), "forecast vs obs");
  require_compatible(fc.spec(), clim.spec(), "forecast vs climatology");
  if (fc.units() != ob.units()) throw UnitError("forecast and obs must share units");

  const AnomalyField af = as_anomaly(fc, &clim, a.forecast);
  const AnomalyField ao = as_anomaly(ob, &clim, a.obs);
  const CellMask* m = mask ? &*mask : nullptr;
  const verify::PsBreakdown b = verify::ps_breakdown(af, ao, m);
  const double ps = verify::ps_score(b);
  std::string acc_text = "nan";
  try {
    acc_text = format_fixed(verify::acc(af, ao, m), 6);
  } catch (const DomainError& e) {
    std::cerr << "warning: ACC undefined (" << e.what() << ")\n";
  }
  const double err = verify::rmse(fc, ob, m);

  std::string csv = "N,N0,N1,N2,M,PS,ACC,RMSE\n";
  csv += std::to_string(b.n) + "," + std::to_string(b.n0) + "," + std::to_string(b.n1) + "," + std::to_string(b.n2) +
         "," + std::to_string(b.m) + "," + format_fixed(ps, 3) + "," + acc_text + "," + format_fixed(err, 6) + "\n";
  atomic_write(a.out, csv);
  manifest.output(a.out);
  manifest.write(a.out);
  std::cout << csv;
  return kExitOk;
}

// ---- fuse ------------------------------------------------------------------

struct FuseArgs {
  std::string ensemble_dir, out_field, out_weights, clim;
  double alpha = 0.5;
};

int run_fuse(const FuseArgs& a) {
  RunManifest manifest("fuse");
  manifest.arg("ensemble-dir", a.ensemble_dir);
  manifest.arg("alpha", format_double(a.alpha));
  manifest.arg("out-field", a.out_field);
  manifest.arg("out-weights", a.out_weights);
  manifest.arg("clim", a.clim);

  if (!fs::is_directory(a.ensemble_dir)) throw IoError("not a directory: " + a.ensemble_dir);
  std::optional<Climatology> clim;
  if (!a.clim.empty()) clim.emplace(read_grid(a.clim));
  const fusion::EnsembleSet e = ensemble::read_ensemble_dir(a.ensemble_dir, clim ? &*clim : nullptr);
  fusion::FusionConfig cfg;
  cfg.alpha = a.alpha;
  const auto scores = fusion::contribution_scores(e, cfg);
  const AnomalyField fused = fusion::fuse(e, fusion::weights_of(scores));

  atomic_write(a.out_weights, fusion::format_weights_csv(scores));
  write_grid(clim ? anomaly_to_mm(fused, *clim) : fused.grid(), a.out_field);
  manifest.output(a.out_field);
  manifest.output(a.out_weights);
  manifest.extra()["members"] = e.size();
  manifest.write(a.out_field);
  std::cout << "fused " << e.size() << " members -> " << a.out_field << "\n";
  return kExitOk;
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string mode = "hybrid", config, out_dir;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
  RunManifest manifest("generate");
  manifest.arg("mode", a.mode);
  manifest.arg("config", a.config);
  manifest.arg("out-dir", a.out_dir);
  manifest.seed(a.seed);

  const pipeline::Mode mode = pipeline::parse_mode(a.mode);
  const KeyValueConfig kv = load_config(a.config);
  const pipeline::GenerateConfig cfg = pipeline::generate_config_from(kv);
  manifest.config(kv);

  const fusion::EnsembleSet e = pipeline::generate(mode, cfg, a.seed);
  ensemble::write_ensemble_dir(e, a.out_dir, &cfg.numerical);

  std::size_t n_num = 0;
  for (const auto& m : e.members()) n_num += m.meta.track == fusion::Track::numerical;
  manifest.output(a.out_dir);
  manifest.extra()["members"] = e.size();
  manifest.extra()["numerical"] = n_num;
  manifest.extra()["ai"] = e.size() - n_num;
  manifest.extra()["param_axes"] = {cfg.numerical.param_axis_i, cfg.numerical.param_axis_j};
  manifest.write(fs::path(a.out_dir).lexically_normal());
  std::cout << "wrote " << e.size() << " members (" << n_num << " numerical, " << e.size() - n_num << " ai) to "
            << a.out_dir << "\n";
  return kExitOk;
}

// ---- attn-bench --------------------------------------------------------------

struct BenchArgs {
  std::string config, lengths, out;
  int repeats = 3;
};

std::vector<int> parse_lengths(const std::string& text) {
  KeyValueConfig kv;
  kv.set("lengths", text);
  std::vector<int> out;
  for (long long v : kv.get_int_list("lengths", {})) {
    if (v < 1) throw ConfigError("lengths must be positive");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ConfigError("--lengths must list at least one length");
  return out;
}

attention::AttentionConfig load_attention_config(const std::string& path, KeyValueConfig* echo = nullptr) {
  const KeyValueConfig kv = load_config(path);
  kv.require_only(attention::attention_config_keys());
  if (echo) *echo = kv;
  attention::AttentionConfig cfg = attention::attention_config_from(kv);
  cfg.validate();
  return cfg;
}

int run_attn_bench(const BenchArgs& a) {
  RunManifest manifest("attn-bench");
  manifest.arg("config", a.config);
  manifest.arg("lengths", a.lengths);
  manifest.arg("out", a.out);
  manifest.arg("repeats", std::to_string(a.repeats));
  KeyValueConfig kv;
  const attention::AttentionConfig cfg = load_attention_config(a.config, &kv);
  manifest.config(kv);
  const std::vector<int> lengths = parse_lengths(a.lengths);
  if (a.repeats < 0) throw ConfigError("--repeats must be >= 0");

  std::string csv = "level,L,flops\n";
  for (int L : lengths) csv += attention::format_flop_rows(attention::flop_count(cfg, static_cast<std::uint64_t>(L)), L);
  std::vector<attention::AttentionConfig> sized;
  if (a.repeats > 0)
    for (int L : lengths) sized.push_back(attention::config_for_length(cfg, L));
  atomic_write(a.out, csv);
  manifest.output(a.out);
  std::cout << csv;

  if (a.repeats > 0) {
    std::cout << "L,trilevel_s,dense_s\n";
    auto& timings = manifest.extra()["timings"];
    for (std::size_t k = 0; k < lengths.size(); ++k) {
      const double tri = attention::time_trilevel(sized[k], a.repeats);
      const double dense = attention::time_dense(sized[k], a.repeats);
      std::cout << lengths[k] << "," << format_fixed(tri, 6) << "," << format_fixed(dense, 6) << "\n";
      timings.push_back({{"L", lengths[k]}, {"trilevel_s", tri}, {"dense_s", dense}});
    }
  }
  manifest.write(a.out);
  return kExitOk;
}

// ---- grad-check ------------------------------------------------------------

struct GradArgs {
  std::string config;
  int probes = 200;
  std::uint64_t seed = 7;
};

int run_grad_check(const GradArgs& a) {
  RunManifest manifest("grad-check");
  manifest.arg("config", a.config);
  manifest.arg("probes", std::to_string(a.probes));
  manifest.seed(a.seed);
  KeyValueConfig kv;
  const attention::AttentionConfig cfg = load_attention_config(a.config, &kv);
  manifest.config(kv);
  if (cfg.latent_noise_sigma != 0.0) throw ConfigError("grad-check needs latent_noise_sigma = 0");
  if (a.probes < 1) throw ConfigError("--probes must be >= 1");

  const GridSpec spec{cfg.nlat, cfg.nlon, 0.0, 1.0, 0.0, 1.0};
  const auto params = attention::ModelParams::init(cfg, derive_seed(a.seed, "model"));
  const auto inputs = pipeline::synthetic_inputs(cfg, spec, cfg.channels + 2, derive_seed(a.seed, "inputs"));
  const auto report = attention::grad_check(params, inputs, cfg, a.probes, derive_seed(a.seed, "probes"));
  constexpr double kTolerance = 1e-6;
  std::cout << "L=" << cfg.seq_len() << " probes=" << a.probes << " max_rel_error=" << report.max_rel_error << "\n";
  manifest.extra()["max_rel_error"] = report.max_rel_error;
  manifest.extra()["tolerance"] = kTolerance;
  manifest.extra()["seq_len"] = cfg.seq_len();
  const bool ok = report.max_rel_error < kTolerance;
  manifest.extra()["passed"] = ok;
  manifest.write("grad-check");
  if (!ok) throw CheckFailed{"gradient check failed: max relative error above 1e-6"};
  return kExitOk;
}

// ---- scaling -----------------------------------------------------------------

struct ScalingArgs {
  std::string config, out, svg;
};

int run_scaling(const ScalingArgs& a) {
  RunManifest manifest("scaling");
  manifest.arg("config", a.config);
  manifest.arg("out", a.out);
  manifest.arg("svg", a.svg);
  const KeyValueConfig kv = load_config(a.config);
  std::set<std::string> allowed = scaling::scaling_keys();
  allowed.insert("seed");
  kv.require_only(allowed);
  const scaling::ScalingConfig cfg = scaling::scaling_config_from(kv);
  const std::uint64_t seed = kv.get_u64("seed", 42);
  manifest.config(kv);
  manifest.seed(seed);

  const scaling::Benchmark bench = scaling::synthetic_benchmark(cfg.benchmark, seed);
  const auto rows = scaling::skill_curve(bench.members, bench.truth, cfg, seed);
  const std::string csv = scaling::format_curve_csv(rows);
  atomic_write(a.out, csv);
  manifest.output(a.out);
  if (!a.svg.empty()) {
    svg::Series ps{"mean PS", {}, {}};
    for (const auto& r : rows) {
      ps.x.push_back(r.size);
      ps.y.push_back(r.ps_mean);
    }
    atomic_write(a.svg, svg::render_line_chart({ps}, "Skill vs ensemble size", "ensemble size", "mean PS"));
    manifest.output(a.svg);
  }
  manifest.write(a.out);
  std::cout << csv;
  return kExitOk;
}

// ---- render ------------------------------------------------------------------

struct RenderArgs {
  std::string field, svg, clim, title;
};

int run_render(const RenderArgs& a) {
  RunManifest manifest("render");
  manifest.arg("field", a.field);
  manifest.arg("svg", a.svg);
  manifest.arg("clim", a.clim);
  const GridField f = read_grid(a.field);
  std::optional<Climatology> clim;
  if (!a.clim.empty()) clim.emplace(read_grid(a.clim));
  const AnomalyField anomaly = as_anomaly(f, clim ? &*clim : nullptr, a.field);
  const std::string title = a.title.empty() ? fs::path(a.field).filename().string() : a.title;
  atomic_write(a.svg, svg::render_heatmap(anomaly.grid(), title));
  manifest.output(a.svg);
  manifest.write(a.svg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capeskit: hybrid ensemble seasonal-forecast toolkit"};
  app.set_version_flag("--version", std::string(CAPESKIT_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--manifest", g_manifest_path, "run manifest path (default: <primary output>.run.json)");

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "PS/ACC/RMSE of a forecast against observations");
  sc->add_option("--forecast", score.forecast, "forecast GRD1 (mm or percent)")->required();
  sc->add_option("--obs", score.obs, "observed GRD1 (same units as forecast)")->required();
  sc->add_option("--clim", score.clim, "climatology GRD1 in mm")->required();
  sc->add_option("--mask", score.mask, "GRD1 mask, nonzero cells are scored");
  sc->add_option("--out", score.out, "output CSV")->required();
  sc->add_option("--floor", score.floor, "climatology floor in mm")->capture_default_str();

  FuseArgs fuse;
  auto* fu = app.add_subcommand("fuse", "contribution-weighted fusion of an ensemble directory");
  fu->add_option("--ensemble-dir", fuse.ensemble_dir, "directory with manifest.tsv and <id>.grd")->required();
  fu->add_option("--alpha", fuse.alpha, "weight of sign consistency vs anomaly magnitude")->capture_default_str();
  fu->add_option("--out-field", fuse.out_field, "fused GRD1")->required();
  fu->add_option("--out-weights", fuse.out_weights, "weights CSV")->required();
  fu->add_option("--clim", fuse.clim, "climatology GRD1; reads mm members and writes the fused field in mm");

  GenerateArgs gen;
  auto* ge = app.add_subcommand("generate", "build an ensemble directory");
  ge->add_option("--mode", gen.mode, "ai, numerical or hybrid")->capture_default_str();
  ge->add_option("--seed", gen.seed, "base seed")->capture_default_str();
  ge->add_option("--config", gen.config, "key = value config");
  ge->add_option("--out-dir", gen.out_dir, "output directory")->required();

  BenchArgs bench;
  auto* ab = app.add_subcommand("attn-bench", "FLOP counts and timings of tri-level vs dense attention");
  ab->add_option("--config", bench.config, "attention config");
  ab->add_option("--lengths", bench.lengths, "comma-separated sequence lengths")->required();
  ab->add_option("--out", bench.out, "FLOP CSV")->required();
  ab->add_option("--repeats", bench.repeats, "timing repeats per length (0 skips timing)")->capture_default_str();

  GradArgs grad;
  auto* gc = app.add_subcommand("grad-check", "analytic vs finite-difference gradients");
  gc->add_option("--config", grad.config, "attention config");
  gc->add_option("--probes", grad.probes, "number of probed entries")->capture_default_str();
  gc->add_option("--seed", grad.seed, "seed for parameters, inputs and probes")->capture_default_str();

  ScalingArgs scal;
  auto* sca = app.add_subcommand("scaling", "skill vs ensemble size on a synthetic benchmark");
  sca->add_option("--config", scal.config, "scaling config");
  sca->add_option("--out", scal.out, "curve CSV")->required();
  sca->add_option("--svg", scal.svg, "optional line chart");

  RenderArgs render;
  auto* re = app.add_subcommand("render", "SVG heatmap of an anomaly field");
  re->add_option("--field", render.field, "GRD1 field (percent, or mm with --clim)")->required();
  re->add_option("--svg", render.svg, "output SVG")->required();
  re->add_option("--clim", render.clim, "climatology GRD1 in mm");
  re->add_option("--title", render.title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    apply_thread_cap_from_env();
    if (*sc) return run_score(score);
    if (*fu) return run_fuse(fuse);
    if (*ge) return run_generate(gen);
    if (*ab) return run_attn_bench(bench);
    if (*gc) return run_grad_check(grad);
    if (*sca) return run_scaling(scal);
    if (*re) return run_render(render);
  } catch (const CheckFailed& e) {
    std::cerr << "error: " << e.message << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
