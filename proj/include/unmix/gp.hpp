#pragma once

#include "unmix/types.hpp"

#include <utility>
#include <vector>

namespace unmix {

enum class KernelKind { Gaussian, Linear };

struct KernelSpec {
    KernelKind kind = KernelKind::Gaussian;
    double bandwidth = 1.0;  // gaussian only, must be > 0
};

/// Pairwise kernel evaluations over the rows of `inputs`. Gaussian entries
/// lie in (0,1] with an exactly-unit diagonal; linear entries are dot
/// products.
Matrix gram_matrix(const KernelSpec& kernel, const Matrix& inputs);

double median_pairwise_distance(const Matrix& inputs);

/// 1/2 r'(K+s2 I)^-1 r + 1/2 log|K+s2 I| + L/2 log(2 pi), with the standard
/// stabilizing jitter of 1e-10 trace(K)/L on the diagonal.
double negative_log_marginal_likelihood(const KernelSpec& kernel, double noise_variance,
                                        const Matrix& inputs, const Vector& targets);

inline double negative_log_marginal_likelihood(double bandwidth, double noise_variance,
                                               const Matrix& inputs, const Vector& targets) {
    return negative_log_marginal_likelihood(KernelSpec{KernelKind::Gaussian, bandwidth},
                                            noise_variance, inputs, targets);
}

/// Analytic gradient of the above with respect to (log bandwidth,
/// log noise_variance).
Eigen::Vector2d nlml_gradient(double bandwidth, double noise_variance, const Matrix& inputs,
                              const Vector& targets);

struct FitOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    double min_noise_variance = 1e-9;
    // (bandwidth, noise variance) starting points; empty selects the default
    // data-driven grid: s in {median distance, 3x median} crossed with
    // sigma2 in {1e-2, 1e-4} x var(targets).
    std::vector<std::pair<double, double>> starts;
};

struct HyperFit {
    double bandwidth;
    double noise_variance;
    double nlml;
};

/// Multi-start quasi-Newton descent of the negative log marginal likelihood
/// in log-parameter space. Deterministic for fixed inputs and starts.
HyperFit fit_hyperparameters(const Matrix& inputs, const Vector& targets,
                             const FitOptions& options = {});

/// GP regression model over endmember-space inputs (one row per band).
struct GpModel {
    KernelSpec kernel;
    double noise_variance = 0.0;
    Matrix inputs;          // L x R
    Vector targets;         // L
    Matrix gram;            // K
    Eigen::LLT<Matrix> factor;  // chol(K + (sigma2 + jitter) I)
    Vector alpha_weights;   // (K + sigma2 I)^-1 r

    static GpModel fit(Matrix inputs, Vector targets, const KernelSpec& kernel,
                       double noise_variance);

    Vector predictive_mean(const Matrix& test_inputs) const;
    Matrix predictive_cov(const Matrix& test_inputs) const;

    /// Fitting residual at the training inputs, sigma2 (K + sigma2 I)^-1 r.
    /// Equals r minus the predictive mean at the training inputs.
    Spectrum fitting_residual() const;
};

/// Precomputed residual operator for a fixed input set: maps observations to
/// GP fitting errors. Lets per-pixel detection reuse one O(L^3)
/// factorization across a whole image.
struct ResidualSmoother {
    Matrix h;  // sigma2 (K + sigma2 I)^-1, symmetric L x L

    Spectrum operator()(const Spectrum& r) const { return h * r; }
};

ResidualSmoother residual_smoother(const Matrix& inputs, const KernelSpec& kernel,
                                   double noise_variance);

}  // namespace unmix
