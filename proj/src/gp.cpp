#include "unmix/gp.hpp"

#include <algorithm>
#include <cmath>

namespace unmix {

namespace {

constexpr double kJitterScale = 1e-10;

Matrix squared_distances(const Matrix& inputs) {
    const Vector norms = inputs.rowwise().squaredNorm();
    Matrix d2 = norms.replicate(1, inputs.rows()) + norms.transpose().replicate(inputs.rows(), 1)
                - 2.0 * inputs * inputs.transpose();
    return d2.cwiseMax(0.0);
}

double jitter_for(const Matrix& gram) {
    return kJitterScale * gram.trace() / static_cast<double>(gram.rows());
}

Eigen::LLT<Matrix> factorize(const Matrix& gram, double noise_variance) {
    Matrix a = gram;
    a.diagonal().array() += noise_variance + jitter_for(gram);
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(
            "Cholesky factorization of the Gram matrix failed; "
            "increase the noise variance or the jitter");
    }
    return llt;
}

}  // namespace

Matrix gram_matrix(const KernelSpec& kernel, const Matrix& inputs) {
    if (!inputs.allFinite()) throw ValidationError("kernel inputs must be finite");
    if (kernel.kind == KernelKind::Linear) {
        return inputs * inputs.transpose();
    }
    if (!(kernel.bandwidth > 0.0)) {
        throw std::invalid_argument("gaussian kernel bandwidth must be positive");
    }
    Matrix k = (-squared_distances(inputs) / (2.0 * kernel.bandwidth * kernel.bandwidth)).array().exp();
    k.diagonal().setOnes();
    return k;
}

double median_pairwise_distance(const Matrix& inputs) {
    const Eigen::Index n = inputs.rows();
    if (n < 2) return 1.0;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            dists.push_back((inputs.row(i) - inputs.row(j)).norm());
        }
    }
    const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid;
}

double negative_log_marginal_likelihood(const KernelSpec& kernel, double noise_variance,
                                        const Matrix& inputs, const Vector& targets) {
    const Matrix k = gram_matrix(kernel, inputs);
    const auto llt = factorize(k, noise_variance);
    const Vector alpha = llt.solve(targets);
    const double l = static_cast<double>(inputs.rows());
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        log_det += 2.0 * std::log(llt.matrixLLT()(i, i));
    }
    return 0.5 * targets.dot(alpha) + 0.5 * log_det + 0.5 * l * std::log(2.0 * M_PI);
}

Eigen::Vector2d nlml_gradient(double bandwidth, double noise_variance, const Matrix& inputs,
                              const Vector& targets) {
    const Matrix d2 = squared_distances(inputs);
    Matrix k = (-d2 / (2.0 * bandwidth * bandwidth)).array().exp();
    k.diagonal().setOnes();
    const auto llt = factorize(k, noise_variance);
    const Vector alpha = llt.solve(targets);
    const Matrix a_inv = llt.solve(Matrix::Identity(inputs.rows(), inputs.rows()));

    // dNLML/dtheta = 1/2 tr((A^-1 - aa') dA/dtheta)
    const Matrix g = a_inv - alpha * alpha.transpose();
    const Matrix dk_dlog_s = k.cwiseProduct(d2) / (bandwidth * bandwidth);
    Eigen::Vector2d grad;
    grad(0) = 0.5 * g.cwiseProduct(dk_dlog_s).sum();
    grad(1) = 0.5 * noise_variance * (a_inv.trace() - alpha.squaredNorm());
    return grad;
}

HyperFit fit_hyperparameters(const Matrix& inputs, const Vector& targets,
                             const FitOptions& options) {
    if (inputs.rows() <= inputs.cols()) {
        throw std::invalid_argument("need more bands than input dimensions to fit");
    }
    const double med = std::max(median_pairwise_distance(inputs), 1e-12);
    const double var = std::max(
        (targets.array() - targets.mean()).square().sum() / std::max<double>(targets.size(), 1),
        1e-12);

    std::vector<std::pair<double, double>> starts = options.starts;
    if (starts.empty()) {
        starts = {{med, 1e-2 * var}, {med, 1e-4 * var}, {3.0 * med, 1e-2 * var},
                  {3.0 * med, 1e-4 * var}};
    }

    const double lo_s = std::log(1e-3 * med);
    const double hi_s = std::log(1e3 * med);
    const double lo_n = std::log(options.min_noise_variance);
    const double hi_n = std::log(1e6 * var);
    auto clip = [&](Eigen::Vector2d x) {
        x(0) = std::clamp(x(0), lo_s, hi_s);
        x(1) = std::clamp(x(1), lo_n, hi_n);
        return x;
    };
    auto objective = [&](const Eigen::Vector2d& x) {
        return negative_log_marginal_likelihood(std::exp(x(0)), std::exp(x(1)), inputs, targets);
    };
    auto gradient = [&](const Eigen::Vector2d& x) {
        return nlml_gradient(std::exp(x(0)), std::exp(x(1)), inputs, targets);
    };

    bool any_start = false;
    Eigen::Vector2d best_x = Eigen::Vector2d::Zero();
    double best_f = std::numeric_limits<double>::infinity();

    for (const auto& [s0, n0] : starts) {
        Eigen::Vector2d x = clip({std::log(s0), std::log(std::max(n0, options.min_noise_variance))});
        double f;
        Eigen::Vector2d g;
        try {
            f = objective(x);
            g = gradient(x);
        } catch (const NumericalError&) {
            continue;  // this start is numerically unusable
        }
        any_start = true;
        Matrix h = Matrix::Identity(2, 2);  // inverse Hessian approximation
        for (int iter = 0; iter < options.max_iterations; ++iter) {
            if (g.cwiseAbs().maxCoeff() <= options.gradient_tolerance) break;
            Eigen::Vector2d direction = -h * g;
            if (direction.dot(g) > -1e-14) {
                direction = -g;
                h = Matrix::Identity(2, 2);
            }
            double step = 1.0;
            Eigen::Vector2d x_new = x;
            double f_new = f;
            bool moved = false;
            while (step > 1e-14) {
                x_new = clip(x + step * direction);
                try {
                    f_new = objective(x_new);
                } catch (const NumericalError&) {
                    step *= 0.5;
                    continue;
                }
                if (f_new <= f + 1e-4 * (x_new - x).dot(g)) {
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
            Eigen::Vector2d g_new;
            try {
                g_new = gradient(x_new);
            } catch (const NumericalError&) {
                x = x_new;
                f = f_new;
                break;
            }
            const Eigen::Vector2d sk = x_new - x;
            const Eigen::Vector2d yk = g_new - g;
            const double sy = sk.dot(yk);
            if (sy > 1e-12) {
                const Matrix i2 = Matrix::Identity(2, 2);
                const Matrix v = i2 - sk * yk.transpose() / sy;
                h = v * h * v.transpose() + sk * sk.transpose() / sy;
            } else {
                h = Matrix::Identity(2, 2);
            }
            x = x_new;
            f = f_new;
            g = g_new;
        }
        if (f < best_f) {
            best_f = f;
            best_x = x;
        }
    }
    if (!any_start) {
        throw NumericalError("hyperparameter fit failed: no start point factorized");
    }
    return {std::exp(best_x(0)), std::exp(best_x(1)), best_f};
}

GpModel GpModel::fit(Matrix inputs, Vector targets, const KernelSpec& kernel,
                     double noise_variance) {
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("GP input rows must match target length");
    }
    GpModel model;
    model.kernel = kernel;
    model.noise_variance = noise_variance;
    model.gram = gram_matrix(kernel, inputs);
    model.factor = factorize(model.gram, noise_variance);
    model.alpha_weights = model.factor.solve(targets);
    model.inputs = std::move(inputs);
    model.targets = std::move(targets);
    return model;
}

namespace {

Matrix cross_gram(const KernelSpec& kernel, const Matrix& test, const Matrix& train) {
    if (test.cols() != train.cols()) {
        throw std::invalid_argument("test inputs have wrong column count");
    }
    if (kernel.kind == KernelKind::Linear) return test * train.transpose();
    Matrix k(test.rows(), train.rows());
    const double denom = 2.0 * kernel.bandwidth * kernel.bandwidth;
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
        for (Eigen::Index j = 0; j < train.rows(); ++j) {
            k(i, j) = std::exp(-(test.row(i) - train.row(j)).squaredNorm() / denom);
        }
    }
    return k;
}

}  // namespace

Vector GpModel::predictive_mean(const Matrix& test_inputs) const {
    return cross_gram(kernel, test_inputs, inputs) * alpha_weights;
}

Matrix GpModel::predictive_cov(const Matrix& test_inputs) const {
    const Matrix k_star = cross_gram(kernel, test_inputs, inputs);
    const Matrix k_star_star = gram_matrix(kernel, test_inputs);
    Matrix cov = k_star_star - k_star * factor.solve(k_star.transpose());
    return 0.5 * (cov + cov.transpose());  // symmetrize away solve round-off
}

Spectrum GpModel::fitting_residual() const {
    return (noise_variance + jitter_for(gram)) * alpha_weights;
}

ResidualSmoother residual_smoother(const Matrix& inputs, const KernelSpec& kernel,
                                   double noise_variance) {
    const Matrix k = gram_matrix(kernel, inputs);
    const auto llt = factorize(k, noise_variance);
    const double effective = noise_variance + jitter_for(k);
    ResidualSmoother smoother;
    smoother.h = effective * llt.solve(Matrix::Identity(inputs.rows(), inputs.rows()));
    return smoother;
}

}  // namespace unmix
