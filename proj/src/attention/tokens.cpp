#include "capeskit/attention/tokens.hpp"

#include "capeskit/error.hpp"

namespace capeskit::attention {

std::vector<TokenTag> token_tags(const AttentionConfig& cfg) {
  std::vector<TokenTag> tags;
  tags.reserve(static_cast<std::size_t>(cfg.seq_len()));
  for (int v = 0; v < cfg.streams(); ++v)
    for (int r = 0; r < cfg.patch_rows(); ++r)
      for (int c = 0; c < cfg.patch_cols(); ++c) tags.push_back({v, r, c});
  return tags;
}

void check_inputs(const ModelInputs& inputs, const AttentionConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(inputs.size()) != cfg.num_domains)
    throw DomainError("expected " + std::to_string(cfg.num_domains) + " domains, got " +
                      std::to_string(inputs.size()));
  for (const auto& domain : inputs) {
    if (static_cast<int>(domain.size()) != cfg.channels)
      throw DomainError("expected " + std::to_string(cfg.channels) + " channels per domain");
    for (const auto& f : domain) {
      if (f.spec().nlat != cfg.nlat || f.spec().nlon != cfg.nlon)
        throw DomainError("input grid does not match the attention config");
      require_compatible(inputs.front().front().spec(), f.spec(), "model input domains");
    }
  }
}

Matrix patch_matrix(const ModelInputs& inputs, const AttentionConfig& cfg, int stream) {
  const int p = cfg.patch_size;
  const int ch = cfg.stream_channels();
  const int pc = cfg.patch_cols();
  Matrix m(cfg.patches(), p * p * ch);
  auto channel = [&](int c) -> const GridField& {
    if (cfg.layout == Layout::sequence_concat) return inputs[static_cast<std::size_t>(stream)][static_cast<std::size_t>(c)];
    return inputs[static_cast<std::size_t>(c / cfg.channels)][static_cast<std::size_t>(c % cfg.channels)];
  };
  for (int r = 0; r < cfg.patch_rows(); ++r)
    for (int c = 0; c < pc; ++c) {
      const int row = r * pc + c;
      for (int di = 0; di < p; ++di)
        for (int dj = 0; dj < p; ++dj)
          for (int k = 0; k < ch; ++k) m(row, (di * p + dj) * ch + k) = channel(k).at(r * p + di, c * p + dj);
    }
  return m;
}

TokenSequence tokenize(const ModelInputs& inputs, const ModelParams& params, const AttentionConfig& cfg) {
  check_inputs(inputs, cfg);
  if (static_cast<int>(params.embed.size()) != cfg.streams())
    throw ConfigError("embedding count does not match the token streams");
  TokenSequence seq;
  seq.tokens.resize(cfg.seq_len(), cfg.embed_dim);
  seq.tags = token_tags(cfg);
  const int np = cfg.patches();
  for (int s = 0; s < cfg.streams(); ++s) {
    const auto& e = params.embed[static_cast<std::size_t>(s)];
    Matrix t = patch_matrix(inputs, cfg, s) * e.w;
    t.rowwise() += e.b.row(0);
    seq.tokens.middleRows(static_cast<Eigen::Index>(s) * np, np) = t;
  }
  return seq;
}

}  // namespace capeskit::attention
