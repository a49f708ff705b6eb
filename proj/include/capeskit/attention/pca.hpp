#pragma once

#include <vector>

#include "capeskit/attention/tensor.hpp"
#include "capeskit/grid.hpp"

namespace capeskit::attention {

struct PcaBasis {
  Eigen::RowVectorXd mean;      ///< per-variable column means (length D)
  Matrix components;            ///< k x D, orthonormal rows, descending variance
  Eigen::VectorXd eigenvalues;  ///< k sample-covariance eigenvalues, descending

  int k() const { return static_cast<int>(components.rows()); }
};

/// Top-k principal axes of an n x D sample matrix (rows are samples). Each
/// component's largest-magnitude entry is made positive. Requires n >= 2 and
/// k <= min(n - 1, D). Rank-deficient data is fine.
PcaBasis fit_pca(const Matrix& samples, int k);

/// Coefficients (n x k) of centered samples on the components.
Matrix pca_project(const PcaBasis& basis, const Matrix& samples);

/// mean + coefficients * components.
Matrix pca_reconstruct(const PcaBasis& basis, const Matrix& coefficients);

/// Squared Frobenius norm of samples minus their reconstruction.
double reconstruction_error(const PcaBasis& basis, const Matrix& samples);

/// Fits PCA across the variables of one domain, treating each grid cell as a
/// sample (D = variable count).
PcaBasis fit_domain_pca(const std::vector<GridField>& variables, int k);

/// The k principal-component channels of a domain, as unitless fields.
std::vector<GridField> compress_domain(const std::vector<GridField>& variables, const PcaBasis& basis);

}  // namespace capeskit::attention
