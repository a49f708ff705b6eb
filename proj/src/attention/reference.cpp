#include "capeskit/attention/reference.hpp"

#include <cmath>
#include <vector>

#include "capeskit/error.hpp"

namespace capeskit::attention {

AttentionMask AttentionMask::full(int length) {
  return {length, std::vector<unsigned char>(static_cast<std::size_t>(length) * length, 1)};
}

AttentionMask AttentionMask::identity(int length) {
  AttentionMask m{length, std::vector<unsigned char>(static_cast<std::size_t>(length) * length, 0)};
  for (int i = 0; i < length; ++i) m.allow[static_cast<std::size_t>(i) * length + i] = 1;
  return m;
}

AttentionMask window_mask(const std::vector<TokenTag>& tags, const AttentionConfig& cfg) {
  const int n = static_cast<int>(tags.size());
  const int w = cfg.window_size;
  AttentionMask m{n, std::vector<unsigned char>(static_cast<std::size_t>(n) * n, 0)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& a = tags[static_cast<std::size_t>(i)];
      const auto& b = tags[static_cast<std::size_t>(j)];
      m.allow[static_cast<std::size_t>(i) * n + j] =
          a.domain == b.domain && a.row / w == b.row / w && a.col / w == b.col / w;
    }
  return m;
}

AttentionMask location_mask(const std::vector<TokenTag>& tags) {
  const int n = static_cast<int>(tags.size());
  AttentionMask m{n, std::vector<unsigned char>(static_cast<std::size_t>(n) * n, 0)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& a = tags[static_cast<std::size_t>(i)];
      const auto& b = tags[static_cast<std::size_t>(j)];
      m.allow[static_cast<std::size_t>(i) * n + j] = a.row == b.row && a.col == b.col;
    }
  return m;
}

namespace {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix& m) {
  Rows r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return r;
}

Rows project(const Rows& x, const Linear& l) {
  const std::size_t in = static_cast<std::size_t>(l.w.rows()), out = static_cast<std::size_t>(l.w.cols());
  Rows y(x.size(), std::vector<double>(out));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double s = l.b(0, static_cast<Eigen::Index>(o));
      for (std::size_t c = 0; c < in; ++c) s += x[i][c] * l.w(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(o));
      y[i][o] = s;
    }
  return y;
}

Rows normalize(const Rows& x, const LayerNormParams& p) {
  Rows y = x;
  for (auto& row : y) {
    const double n = static_cast<double>(row.size());
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t c = 0; c < row.size(); ++c)
      row[c] = (row[c] - mean) * inv * p.gamma(0, static_cast<Eigen::Index>(c)) + p.beta(0, static_cast<Eigen::Index>(c));
  }
  return y;
}

}  // namespace

Matrix dense_attention_oracle(const Matrix& x, const AttentionMask& mask, const AttentionWeights& w, int heads) {
  const int L = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (mask.length != L || heads < 1 || d % heads != 0) throw DomainError("dense oracle shape mismatch");
  const int dh = d / heads;
  const Rows u = normalize(to_rows(x), w.norm);
  const Rows q = project(u, w.q), k = project(u, w.k), v = project(u, w.v);

  Rows attn(static_cast<std::size_t>(L), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  std::vector<double> score(static_cast<std::size_t>(L));
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < L; ++i) {
      double mx = -INFINITY;
      bool any = false;
      for (int j = 0; j < L; ++j) {
        if (!mask(i, j)) continue;
        double s = 0.0;
        for (int c = h * dh; c < (h + 1) * dh; ++c) s += q[i][c] * k[j][c];
        s /= std::sqrt(static_cast<double>(dh));
        score[j] = s;
        if (s > mx) mx = s;
        any = true;
      }
      if (!any) throw DomainError("dense oracle mask row allows no keys");
      double z = 0.0;
      for (int j = 0; j < L; ++j)
        if (mask(i, j)) z += std::exp(score[j] - mx);
      for (int j = 0; j < L; ++j) {
        if (!mask(i, j)) continue;
        const double p = std::exp(score[j] - mx) / z;
        for (int c = h * dh; c < (h + 1) * dh; ++c) attn[i][c] += p * v[j][c];
      }
    }
  }
  const Rows o = project(attn, w.o);
  Matrix y(L, d);
  for (int i = 0; i < L; ++i)
    for (int c = 0; c < d; ++c) y(i, c) = x(i, c) + o[i][c];
  return y;
}

}  // namespace capeskit::attention
