#include "capeskit/pipeline.hpp"

#include "capeskit/attention/model.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/pca.hpp"
#include "capeskit/attention/serialize.hpp"
#include "capeskit/error.hpp"
#include "capeskit/scaling.hpp"
#include "capeskit/seed.hpp"

namespace capeskit::pipeline {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::ai: return "ai";
    case Mode::numerical: return "numerical";
    case Mode::hybrid: return "hybrid";
  }
  return "hybrid";
}

Mode parse_mode(std::string_view s) {
  if (s == "ai") return Mode::ai;
  if (s == "numerical") return Mode::numerical;
  if (s == "hybrid") return Mode::hybrid;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected ai, numerical or hybrid)");
}

const std::set<std::string>& generate_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {"lat0", "dlat", "lon0", "dlon", "raw_variables", "model", "amplitude", "truth_slope"};
    for (const auto* group : {&attention::attention_config_keys(), &ensemble::perturbation_keys(),
                              &ensemble::numerical_manifest_keys(), &ensemble::surrogate_keys()})
      k.insert(group->begin(), group->end());
    return k;
  }();
  return keys;
}

GenerateConfig generate_config_from(const KeyValueConfig& kv) {
  kv.require_only(generate_keys());
  GenerateConfig c;
  if (kv.has("model")) {
    for (const auto& key : attention::attention_config_keys())
      if (kv.has(key) && key != "latent_noise_sigma" && key != "noise_layer")
        throw ConfigError("config key '" + key + "' conflicts with 'model' (the model file fixes it)");
    c.model = kv.get_string("model", "");
    c.attention = attention::load_model(*c.model).config;
  } else {
    c.attention = attention::attention_config_from(kv);
  }
  c.lat0 = kv.get_double("lat0", c.lat0);
  c.dlat = kv.get_double("dlat", c.dlat);
  c.lon0 = kv.get_double("lon0", c.lon0);
  c.dlon = kv.get_double("dlon", c.dlon);
  c.raw_variables = static_cast<int>(kv.get_int("raw_variables", c.raw_variables));
  c.perturbation = ensemble::perturbation_from(kv, c.perturbation);
  c.numerical = ensemble::numerical_manifest_from(kv, c.numerical);
  c.skill = ensemble::surrogate_from(kv, c.skill);
  c.amplitude = kv.get_double("amplitude", c.amplitude);
  c.truth_slope = kv.get_double("truth_slope", c.truth_slope);

  c.attention.latent_noise_sigma = c.perturbation.latent_sigma;
  c.attention.noise_layer = c.perturbation.noise_layer;
  c.attention.validate();
  c.grid().validate();
  if (c.raw_variables < c.attention.channels)
    throw ConfigError("raw_variables must be >= channels (PCA cannot add components)");
  if (!(c.amplitude >= 0.0)) throw ConfigError("amplitude must be >= 0");
  return c;
}

attention::ModelInputs synthetic_inputs(const attention::AttentionConfig& cfg, const GridSpec& spec,
                                        int raw_variables, std::uint64_t seed) {
  if (raw_variables < cfg.channels) throw ConfigError("raw_variables must be >= channels");
  attention::ModelInputs out;
  // A single cell carries no variance to decompose; every channel is zero.
  if (spec.cells() < 2) {
    for (int v = 0; v < cfg.num_domains; ++v)
      out.emplace_back(static_cast<std::size_t>(cfg.channels), GridField::filled(spec, Units::unitless, 0.0));
    return out;
  }
  for (int v = 0; v < cfg.num_domains; ++v) {
    std::vector<GridField> raw;
    for (int r = 0; r < raw_variables; ++r) {
      const GridField f = ensemble::correlated_field(
          spec, derive_seed(seed, "variable", {static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(r)}), 1.0,
          3.0);
      raw.emplace_back(spec, Units::unitless, std::vector<double>(f.values().begin(), f.values().end()));
    }
    const attention::PcaBasis basis = attention::fit_domain_pca(raw, cfg.channels);
    out.push_back(attention::compress_domain(raw, basis));
  }
  return out;
}

AiSetup ai_setup(const GenerateConfig& cfg, std::uint64_t seed) {
  AiSetup s{cfg.model ? attention::load_model(*cfg.model).params
                      : attention::ModelParams::init(cfg.attention, derive_seed(seed, "model")),
            synthetic_inputs(cfg.attention, cfg.grid(), cfg.raw_variables, derive_seed(seed, "inputs")),
            cfg.perturbation};
  s.perturbation.base_seed = derive_seed(seed, "ai");
  return s;
}

fusion::EnsembleSet generate(Mode mode, const GenerateConfig& cfg, std::uint64_t seed) {
  const GridSpec spec = cfg.grid();
  std::vector<fusion::Member> members;
  if (mode != Mode::ai) {
    const AnomalyField truth = scaling::synthetic_truth(spec, seed, cfg.amplitude, cfg.truth_slope);
    const auto metas = ensemble::build_numerical_manifest(cfg.numerical);
    const auto num = ensemble::build_surrogate_ensemble(metas, truth, cfg.skill, derive_seed(seed, "members"));
    members = num.members();
  }
  if (mode != Mode::numerical) {
    const AiSetup ai = ai_setup(cfg, seed);
    const auto e = ensemble::build_ai_ensemble(ai.base, ai.params, cfg.attention, ai.perturbation);
    members.insert(members.end(), e.members().begin(), e.members().end());
  }
  return fusion::EnsembleSet(std::move(members));
}

}  // namespace capeskit::pipeline
