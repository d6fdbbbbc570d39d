#pragma once

#include <cstddef>
#include <vector>

#include "eegcsr/tensor.hpp"

namespace eegcsr::kpca {

// Fitted polynomial-kernel PCA. dual_coefficients holds unit-norm
// eigenvectors of the centered kernel matrix (so alpha^T K_c alpha = lambda
// per component); projecting the training set therefore yields column j with
// second moment lambda_j. eigenvalues stores the full positive spectrum in
// descending order (not just the kept components) so explained-variance
// ratios are exact.
struct KpcaModel {
    Tensor training_vectors;  // [N x D_in]
    double gamma = 0.0;
    double coef0 = 1.0;
    int degree = 3;
    Tensor row_means;         // [N] row means of the uncentered training kernel
    double grand_mean = 0.0;
    std::vector<double> eigenvalues;
    Tensor dual_coefficients; // [N x n_components]
    std::size_t n_components = 0;
    Tensor training_projections; // [N x n_components]
};

double poly_kernel(const double* x, const double* y, std::size_t n, double gamma, double coef0,
                   int degree);
double poly_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma,
                   double coef0, int degree);

// Eigendecomposition of the double-centered kernel matrix. Components whose
// eigenvalue falls at or below 1e-10 * lambda_max count as rank-deficient;
// asking for more components than the usable rank is an error reporting that
// rank. Per-component sign is fixed by making the largest-magnitude dual
// coefficient positive.
KpcaModel fit_kpca(const Tensor& x, std::size_t n_components, double gamma, double coef0,
                   int degree = 3);

// Out-of-sample projection via the centered kernel against the training set.
Tensor transform(const KpcaModel& model, const Tensor& x);

// Cumulative explained-variance ratios over the positive spectrum;
// non-decreasing with final value 1.
std::vector<double> explained_variance(const KpcaModel& model);

} // namespace eegcsr::kpca
