#include "eegcsr/kpca.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eegcsr::kpca {

double poly_kernel(const double* x, const double* y, std::size_t n, double gamma, double coef0,
                   int degree) {
    if (degree < 1) throw std::invalid_argument("kernel degree must be >= 1");
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * y[i];
    return std::pow(gamma * dot + coef0, degree);
}

double poly_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma,
                   double coef0, int degree) {
    if (x.size() != y.size())
        throw std::invalid_argument("poly_kernel length mismatch: " + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()));
    return poly_kernel(x.data(), y.data(), x.size(), gamma, coef0, degree);
}

KpcaModel fit_kpca(const Tensor& x, std::size_t n_components, double gamma, double coef0,
                   int degree) {
    if (x.rank() != 2)
        throw std::invalid_argument("fit_kpca expects an [N x D] matrix, got rank " +
                                    std::to_string(x.rank()));
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n_components < 1) throw std::invalid_argument("n_components must be >= 1");
    if (n_components > n)
        throw std::invalid_argument("n_components (" + std::to_string(n_components) +
                                    ") exceeds the number of training rows (" + std::to_string(n) +
                                    ")");
    if (d == 0) throw std::invalid_argument("training vectors must have at least one column");

    KpcaModel model;
    model.training_vectors = x;
    model.gamma = gamma;
    model.coef0 = coef0;
    model.degree = degree;
    model.n_components = n_components;

    Eigen::MatrixXd k(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = poly_kernel(x.row_ptr(i), x.row_ptr(j), d, gamma, coef0, degree);
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }

    // Double centering: K_c = K - 1K - K1 + 1K1 where 1 is the all-(1/N)
    // matrix. Row means of the raw kernel double as the transform statistics.
    Eigen::VectorXd row_means = k.rowwise().mean();
    const double grand_mean = row_means.mean();
    Eigen::MatrixXd kc = k;
    kc.colwise() -= row_means;
    kc.rowwise() -= row_means.transpose();
    kc.array() += grand_mean;

    model.row_means = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) model.row_means[i] = row_means(static_cast<Eigen::Index>(i));
    model.grand_mean = grand_mean;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(kc);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("kernel eigendecomposition failed to converge");

    // Eigen returns ascending order; walk backwards for descending.
    std::vector<std::pair<double, Eigen::Index>> spectrum;
    for (Eigen::Index i = static_cast<Eigen::Index>(n); i-- > 0;) {
        double ev = solver.eigenvalues()(i);
        if (ev < 0.0 && ev > -1e-10) ev = 0.0; // clamp numerical negatives
        spectrum.emplace_back(ev, i);
    }

    const double lambda_max = spectrum.empty() ? 0.0 : std::max(spectrum.front().first, 0.0);
    const double rank_floor = 1e-10 * lambda_max;
    std::size_t usable = 0;
    for (const auto& [ev, idx] : spectrum) {
        (void)idx;
        if (ev > rank_floor && ev > 0.0) ++usable;
    }
    if (usable < n_components)
        throw std::invalid_argument("centered kernel has usable rank " + std::to_string(usable) +
                                    ", cannot extract " + std::to_string(n_components) +
                                    " components");

    for (std::size_t i = 0; i < usable; ++i) model.eigenvalues.push_back(spectrum[i].first);

    model.dual_coefficients = Tensor({n, n_components});
    for (std::size_t c = 0; c < n_components; ++c) {
        Eigen::VectorXd v = solver.eigenvectors().col(spectrum[c].second);
        // Deterministic sign: largest-magnitude coefficient positive.
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        for (std::size_t i = 0; i < n; ++i)
            model.dual_coefficients.at(i, c) = v(static_cast<Eigen::Index>(i));
    }

    // Training projections are K_c * alpha; with unit eigenvectors this is
    // lambda_c * v_c per column.
    model.training_projections = Tensor({n, n_components});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < n_components; ++c)
            model.training_projections.at(i, c) =
                model.eigenvalues[c] * model.dual_coefficients.at(i, c);
    }
    return model;
}

Tensor transform(const KpcaModel& model, const Tensor& x) {
    if (x.rank() != 2)
        throw std::invalid_argument("transform expects an [M x D] matrix, got rank " +
                                    std::to_string(x.rank()));
    const std::size_t n = model.training_vectors.rows();
    const std::size_t d = model.training_vectors.cols();
    if (x.cols() != d)
        throw std::invalid_argument("transform dimension mismatch: model trained on " +
                                    std::to_string(d) + " columns, input has " +
                                    std::to_string(x.cols()));
    const std::size_t m = x.rows();
    Tensor out({m, model.n_components});
    std::vector<double> krow(n);
    for (std::size_t q = 0; q < m; ++q) {
        double mean_k = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            krow[i] = poly_kernel(x.row_ptr(q), model.training_vectors.row_ptr(i), d, model.gamma,
                                  model.coef0, model.degree);
            mean_k += krow[i];
        }
        mean_k /= static_cast<double>(n);
        // Centered out-of-sample kernel row:
        //   kc_i = k_i - row_means_i - mean(k) + grand_mean
        for (std::size_t i = 0; i < n; ++i)
            krow[i] += model.grand_mean - model.row_means[i] - mean_k;
        double* dst = out.row_ptr(q);
        for (std::size_t c = 0; c < model.n_components; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += krow[i] * model.dual_coefficients.at(i, c);
            dst[c] = acc;
        }
    }
    return out;
}

std::vector<double> explained_variance(const KpcaModel& model) {
    if (model.eigenvalues.empty())
        throw std::logic_error("explained_variance on an unfitted model");
    double total = 0.0;
    for (double ev : model.eigenvalues) total += ev;
    std::vector<double> out;
    out.reserve(model.eigenvalues.size());
    double acc = 0.0;
    for (double ev : model.eigenvalues) {
        acc += ev;
        out.push_back(acc / total);
    }
    return out;
}

} // namespace eegcsr::kpca
