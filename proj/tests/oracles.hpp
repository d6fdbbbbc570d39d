#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "eegcsr/tensor.hpp"

// Independent reference implementations used only by tests. Each one takes a
// deliberately different algorithmic route from the library code it checks.
namespace oracles {

// Sum of path probabilities over every length-T path whose collapse equals
// `labels`, by full enumeration of all K^T paths (rows of `probs` are linear
// probabilities). Practical for K^T up to a few million.
double ctc_brute_force(const eegcsr::Tensor& probs, const std::vector<int>& labels, int blank);

// Aggregate every path by its collapsed labeling: labeling -> total mass.
std::map<std::vector<int>, double> ctc_labeling_masses(const eegcsr::Tensor& probs, int blank);

// Dense symmetric eigendecomposition by cyclic Jacobi rotations, descending
// eigenvalues, unit-norm columns in `vectors`.
struct JacobiEigen {
    std::vector<double> values;
    eegcsr::Tensor vectors; // [n x n], column c pairs with values[c]
};
JacobiEigen jacobi_eigen_symmetric(const eegcsr::Tensor& a, int max_sweeps = 100);

// Central finite difference d f / d x.
double central_difference(const std::function<double(double)>& f, double x, double eps);

// Relative agreement check with an absolute floor for near-zero values.
bool close_rel(double got, double want, double rel_tol, double abs_floor);

} // namespace oracles
