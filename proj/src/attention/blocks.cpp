#include "blocks.hpp"

#include <cmath>
#include <numeric>

namespace capeskit::attention::detail {

Matrix ln_forward(const Matrix& x, const LayerNormParams& p, LnCache* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Matrix y = xhat.array().rowwise() * p.gamma.row(0).array();
  y.rowwise() += p.beta.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Matrix ln_backward(const Matrix& dy, const LnCache& c, const LayerNormParams& p, LayerNormParams& grad) {
  grad.gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  grad.beta += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * p.gamma.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

Matrix linear_forward(const Matrix& x, const Linear& l) {
  Matrix y = x * l.w;
  y.rowwise() += l.b.row(0);
  return y;
}

Matrix linear_backward(const Matrix& dy, const Matrix& x, const Linear& l, Linear& grad) {
  grad.w.noalias() += x.transpose() * dy;
  grad.b += dy.colwise().sum();
  return dy * l.w.transpose();
}

namespace {

Matrix gather(const Matrix& m, const std::vector<int>& rows, Eigen::Index col0, Eigen::Index width) {
  Matrix g(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]).segment(col0, width);
  return g;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

Matrix grouped_forward(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<AttentionGroup>& groups,
                       int heads, GroupedCache* cache) {
  const Eigen::Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  const auto total = static_cast<std::ptrdiff_t>(groups.size()) * heads;
  if (cache) cache->probs.assign(static_cast<std::size_t>(total), Matrix());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < total; ++t) {
    const auto& g = groups[static_cast<std::size_t>(t / heads)];
    const Eigen::Index col0 = (t % heads) * dh;
    const Matrix qg = gather(q, g.queries, col0, dh);
    const Matrix kg = gather(k, g.keys, col0, dh);
    const Matrix vg = gather(v, g.keys, col0, dh);
    Matrix s = (qg * kg.transpose()) * scale;
    softmax_rows(s);
    const Matrix o = s * vg;
    for (std::size_t i = 0; i < g.queries.size(); ++i)
      out.row(g.queries[i]).segment(col0, dh) = o.row(static_cast<Eigen::Index>(i));
    if (cache) cache->probs[static_cast<std::size_t>(t)] = std::move(s);
  }
  return out;
}

void grouped_backward(const Matrix& dout, const Matrix& q, const Matrix& k, const Matrix& v,
                      const std::vector<AttentionGroup>& groups, int heads, const GroupedCache& cache, Matrix& dq,
                      Matrix& dk, Matrix& dv) {
  const Eigen::Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Matrix::Zero(q.rows(), q.cols());
  dk = Matrix::Zero(k.rows(), k.cols());
  dv = Matrix::Zero(v.rows(), v.cols());
  const auto total = static_cast<std::ptrdiff_t>(groups.size()) * heads;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < total; ++t) {
    const auto& g = groups[static_cast<std::size_t>(t / heads)];
    const Eigen::Index col0 = (t % heads) * dh;
    const Matrix& p = cache.probs[static_cast<std::size_t>(t)];
    const Matrix qg = gather(q, g.queries, col0, dh);
    const Matrix kg = gather(k, g.keys, col0, dh);
    const Matrix vg = gather(v, g.keys, col0, dh);
    const Matrix dog = gather(dout, g.queries, col0, dh);

    const Matrix dp = dog * vg.transpose();
    const Matrix dvg = p.transpose() * dog;
    const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    const Matrix ds = p.array() * (dp.colwise() - row_dot).array();
    const Matrix dqg = (ds * kg) * scale;
    const Matrix dkg = (ds.transpose() * qg) * scale;

    for (std::size_t i = 0; i < g.queries.size(); ++i)
      dq.row(g.queries[i]).segment(col0, dh) += dqg.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < g.keys.size(); ++j) {
      dk.row(g.keys[j]).segment(col0, dh) += dkg.row(static_cast<Eigen::Index>(j));
      dv.row(g.keys[j]).segment(col0, dh) += dvg.row(static_cast<Eigen::Index>(j));
    }
  }
}

Matrix self_attention_forward(const Matrix& x, const AttentionWeights& w, const std::vector<AttentionGroup>& groups,
                              int heads, SelfAttentionCache* c) {
  SelfAttentionCache local;
  SelfAttentionCache& s = c ? *c : local;
  s.u = ln_forward(x, w.norm, &s.ln);
  s.q = linear_forward(s.u, w.q);
  s.k = linear_forward(s.u, w.k);
  s.v = linear_forward(s.u, w.v);
  s.attn = grouped_forward(s.q, s.k, s.v, groups, heads, c ? &s.grouped : nullptr);
  return x + linear_forward(s.attn, w.o);
}

Matrix self_attention_backward(const Matrix& dy, const AttentionWeights& w, const std::vector<AttentionGroup>& groups,
                               int heads, const SelfAttentionCache& c, AttentionWeights& grad) {
  const Matrix dattn = linear_backward(dy, c.attn, w.o, grad.o);
  Matrix dq, dk, dv;
  grouped_backward(dattn, c.q, c.k, c.v, groups, heads, c.grouped, dq, dk, dv);
  Matrix du = linear_backward(dq, c.u, w.q, grad.q);
  du += linear_backward(dk, c.u, w.k, grad.k);
  du += linear_backward(dv, c.u, w.v, grad.v);
  return dy + ln_backward(du, c.ln, w.norm, grad.norm);
}

std::vector<AttentionGroup> all_to_all(int queries, int keys) {
  AttentionGroup g;
  g.queries.resize(static_cast<std::size_t>(queries));
  g.keys.resize(static_cast<std::size_t>(keys));
  std::iota(g.queries.begin(), g.queries.end(), 0);
  std::iota(g.keys.begin(), g.keys.end(), 0);
  return {std::move(g)};
}

Matrix anchor_forward(const Matrix& x, const AnchorWeights& w, int heads, AnchorMode mode, AnchorCache* c) {
  AnchorCache local;
  AnchorCache& s = c ? *c : local;
  const int L = static_cast<int>(x.rows());
  const int m = static_cast<int>(w.anchors.rows());
  s.u = ln_forward(x, w.norm, &s.ln);
  if (mode == AnchorMode::two_phase) {
    s.qa = linear_forward(w.anchors, w.agg_q);
    s.k1 = linear_forward(s.u, w.agg_k);
    s.v1 = linear_forward(s.u, w.agg_v);
    s.states = grouped_forward(s.qa, s.k1, s.v1, all_to_all(m, L), heads, c ? &s.aggregate : nullptr);
  } else {
    s.states = w.anchors;
  }
  s.q2 = linear_forward(s.u, w.bc_q);
  s.k2 = linear_forward(s.states, w.bc_k);
  s.v2 = linear_forward(s.states, w.bc_v);
  s.attn = grouped_forward(s.q2, s.k2, s.v2, all_to_all(L, m), heads, c ? &s.broadcast : nullptr);
  return x + linear_forward(s.attn, w.bc_o);
}

Matrix anchor_backward(const Matrix& dy, const AnchorWeights& w, int heads, AnchorMode mode, const AnchorCache& c,
                       AnchorWeights& grad) {
  const int L = static_cast<int>(dy.rows());
  const int m = static_cast<int>(w.anchors.rows());
  const Matrix dattn = linear_backward(dy, c.attn, w.bc_o, grad.bc_o);
  Matrix dq2, dk2, dv2;
  grouped_backward(dattn, c.q2, c.k2, c.v2, all_to_all(L, m), heads, c.broadcast, dq2, dk2, dv2);
  Matrix du = linear_backward(dq2, c.u, w.bc_q, grad.bc_q);
  Matrix dstates = linear_backward(dk2, c.states, w.bc_k, grad.bc_k);
  dstates += linear_backward(dv2, c.states, w.bc_v, grad.bc_v);
  if (mode == AnchorMode::two_phase) {
    Matrix dqa, dk1, dv1;
    grouped_backward(dstates, c.qa, c.k1, c.v1, all_to_all(m, L), heads, c.aggregate, dqa, dk1, dv1);
    grad.anchors += linear_backward(dqa, w.anchors, w.agg_q, grad.agg_q);
    du += linear_backward(dk1, c.u, w.agg_k, grad.agg_k);
    du += linear_backward(dv1, c.u, w.agg_v, grad.agg_v);
  } else {
    grad.anchors += dstates;
  }
  return dy + ln_backward(du, c.ln, w.norm, grad.norm);
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

Matrix mlp_forward(const Matrix& x, const MlpWeights& w, MlpCache* c) {
  MlpCache local;
  MlpCache& s = c ? *c : local;
  s.u = ln_forward(x, w.norm, &s.ln);
  s.h = linear_forward(s.u, w.fc1);
  s.g = s.h.unaryExpr([](double v) { return gelu(v); });
  return x + linear_forward(s.g, w.fc2);
}

Matrix mlp_backward(const Matrix& dy, const MlpWeights& w, const MlpCache& c, MlpWeights& grad) {
  const Matrix dg = linear_backward(dy, c.g, w.fc2, grad.fc2);
  const Matrix dh = dg.array() * c.h.unaryExpr([](double v) { return gelu_grad(v); }).array();
  const Matrix du = linear_backward(dh, c.u, w.fc1, grad.fc1);
  return dy + ln_backward(du, c.ln, w.norm, grad.norm);
}

}  // namespace capeskit::attention::detail
