#include "capeskit/attention/pca.hpp"

#include <cmath>

#include "capeskit/error.hpp"

namespace capeskit::attention {

PcaBasis fit_pca(const Matrix& samples, int k) {
  const Eigen::Index n = samples.rows(), dims = samples.cols();
  if (n < 2) throw DomainError("PCA needs at least two samples");
  if (k < 1 || k > std::min<Eigen::Index>(n - 1, dims))
    throw DomainError("PCA k=" + std::to_string(k) + " exceeds min(n-1, D)");

  PcaBasis basis;
  basis.mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - basis.mean;
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw DomainError("PCA eigendecomposition failed");
  // Eigen sorts ascending.
  basis.components.resize(k, dims);
  basis.eigenvalues.resize(k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = dims - 1 - c;
    Eigen::RowVectorXd v = solver.eigenvectors().col(src).transpose();
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.components.row(c) = v;
    basis.eigenvalues(c) = std::max(0.0, solver.eigenvalues()(src));
  }
  return basis;
}

Matrix pca_project(const PcaBasis& basis, const Matrix& samples) {
  if (samples.cols() != basis.mean.size()) throw DomainError("PCA projection dimension mismatch");
  return (samples.rowwise() - basis.mean) * basis.components.transpose();
}

Matrix pca_reconstruct(const PcaBasis& basis, const Matrix& coefficients) {
  if (coefficients.cols() != basis.k()) throw DomainError("PCA coefficient count mismatch");
  Matrix x = coefficients * basis.components;
  x.rowwise() += basis.mean;
  return x;
}

double reconstruction_error(const PcaBasis& basis, const Matrix& samples) {
  return (samples - pca_reconstruct(basis, pca_project(basis, samples))).squaredNorm();
}

namespace {

Matrix cell_samples(const std::vector<GridField>& variables) {
  if (variables.empty()) throw DomainError("domain has no variables");
  const auto& spec = variables.front().spec();
  Matrix s(static_cast<Eigen::Index>(spec.cells()), static_cast<Eigen::Index>(variables.size()));
  for (std::size_t v = 0; v < variables.size(); ++v) {
    require_compatible(spec, variables[v].spec(), "domain variables");
    for (std::size_t i = 0; i < spec.cells(); ++i)
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = variables[v][i];
  }
  return s;
}

}  // namespace

PcaBasis fit_domain_pca(const std::vector<GridField>& variables, int k) { return fit_pca(cell_samples(variables), k); }

std::vector<GridField> compress_domain(const std::vector<GridField>& variables, const PcaBasis& basis) {
  const Matrix coeff = pca_project(basis, cell_samples(variables));
  std::vector<GridField> out;
  for (int c = 0; c < basis.k(); ++c) {
    std::vector<double> vals(static_cast<std::size_t>(coeff.rows()));
    for (Eigen::Index i = 0; i < coeff.rows(); ++i) vals[static_cast<std::size_t>(i)] = coeff(i, c);
    out.emplace_back(variables.front().spec(), Units::unitless, std::move(vals));
  }
  return out;
}

}  // namespace capeskit::attention
