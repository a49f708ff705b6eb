#include "capeskit/attention/kernels.hpp"

#include "blocks.hpp"
#include "capeskit/error.hpp"

namespace capeskit::attention {

namespace {

void check_tag_range(const TokenTag& t, const AttentionConfig& cfg) {
  if (t.domain < 0 || t.domain >= cfg.streams() || t.row < 0 || t.row >= cfg.patch_rows() || t.col < 0 ||
      t.col >= cfg.patch_cols())
    throw DomainError("token tag out of range for the attention config");
}

void check_sequence(const TokenSequence& x, const AttentionConfig& cfg) {
  if (x.tokens.cols() != cfg.embed_dim) throw DomainError("token width does not match embed_dim");
  if (static_cast<Eigen::Index>(x.tags.size()) != x.tokens.rows()) throw DomainError("token/tag count mismatch");
}

}  // namespace

std::vector<AttentionGroup> window_groups(const std::vector<TokenTag>& tags, const AttentionConfig& cfg) {
  const int w = cfg.window_size;
  const int wr = cfg.patch_rows() / w, wc = cfg.patch_cols() / w;
  std::vector<AttentionGroup> groups(static_cast<std::size_t>(cfg.streams() * wr * wc));
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& t = tags[i];
    check_tag_range(t, cfg);
    auto& g = groups[static_cast<std::size_t>((t.domain * wr + t.row / w) * wc + t.col / w)];
    g.queries.push_back(static_cast<int>(i));
    g.keys.push_back(static_cast<int>(i));
  }
  std::erase_if(groups, [](const AttentionGroup& g) { return g.queries.empty(); });
  return groups;
}

std::vector<AttentionGroup> crossvar_groups(const std::vector<TokenTag>& tags, const AttentionConfig& cfg) {
  std::vector<AttentionGroup> groups(static_cast<std::size_t>(cfg.patches()));
  std::vector<unsigned> seen(groups.size(), 0);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& t = tags[i];
    check_tag_range(t, cfg);
    const auto loc = static_cast<std::size_t>(t.row * cfg.patch_cols() + t.col);
    const unsigned bit = 1u << t.domain;
    if (seen[loc] & bit) throw DomainError("duplicate domain token at one location");
    seen[loc] |= bit;
    groups[loc].queries.push_back(static_cast<int>(i));
    groups[loc].keys.push_back(static_cast<int>(i));
  }
  for (const auto& g : groups)
    if (static_cast<int>(g.queries.size()) != cfg.streams())
      throw DomainError("inconsistent tags: every location needs one token per stream");
  return groups;
}

Matrix layer_norm(const Matrix& x, const LayerNormParams& p) { return detail::ln_forward(x, p, nullptr); }

Matrix grouped_attention(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<AttentionGroup>& groups,
                         int heads) {
  if (heads < 1 || q.cols() % heads != 0 || k.cols() != q.cols() || v.cols() != q.cols() || k.rows() != v.rows())
    throw DomainError("grouped_attention shape mismatch");
  return detail::grouped_forward(q, k, v, groups, heads, nullptr);
}

TokenSequence window_attention(const TokenSequence& x, const AttentionWeights& w, const AttentionConfig& cfg) {
  check_sequence(x, cfg);
  return {detail::self_attention_forward(x.tokens, w, window_groups(x.tags, cfg), cfg.num_heads, nullptr), x.tags};
}

TokenSequence cross_variable_attention(const TokenSequence& x, const AttentionWeights& w,
                                       const AttentionConfig& cfg) {
  check_sequence(x, cfg);
  return {detail::self_attention_forward(x.tokens, w, crossvar_groups(x.tags, cfg), cfg.num_heads, nullptr), x.tags};
}

TokenSequence anchor_attention(const TokenSequence& x, const AnchorWeights& w, const AttentionConfig& cfg,
                               AnchorMode mode) {
  check_sequence(x, cfg);
  if (w.anchors.rows() < 1 || w.anchors.cols() != cfg.embed_dim) throw DomainError("anchor shape mismatch");
  return {detail::anchor_forward(x.tokens, w, cfg.num_heads, mode, nullptr), x.tags};
}

Matrix aggregate_anchors(const Matrix& normed_tokens, const AnchorWeights& w, int heads) {
  const Matrix qa = detail::linear_forward(w.anchors, w.agg_q);
  const Matrix k = detail::linear_forward(normed_tokens, w.agg_k);
  const Matrix v = detail::linear_forward(normed_tokens, w.agg_v);
  return detail::grouped_forward(qa, k, v,
                                 detail::all_to_all(static_cast<int>(w.anchors.rows()),
                                                    static_cast<int>(normed_tokens.rows())),
                                 heads, nullptr);
}

}  // namespace capeskit::attention
