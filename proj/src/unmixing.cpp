#include "unmix/unmixing.hpp"

#include "unmix/detail/parallel.hpp"
#include "unmix/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace unmix {

Vector ls_abundances(const EndmemberMatrix& m, const Spectrum& r) {
    if (r.size() != m.bands()) throw std::invalid_argument("spectrum length mismatch");
    Eigen::ColPivHouseholderQR<Matrix> qr(m.entries);
    if (qr.rank() < m.count()) throw NumericalError("endmember matrix is rank deficient");
    return qr.solve(r);
}

Vector fcls(const EndmemberMatrix& m, const Spectrum& r) {
    if (r.size() != m.bands()) throw std::invalid_argument("spectrum length mismatch");
    const int n = m.count();
    const Matrix gram = 2.0 * m.entries.transpose() * m.entries;
    const Vector rhs = 2.0 * m.entries.transpose() * r;

    std::vector<bool> active(n, false);  // pinned at zero
    Vector alpha = Vector::Constant(n, 1.0 / n);
    constexpr double kTol = 1e-12;

    const int max_iterations = 100 * n;
    for (int iteration = 0; iteration < max_iterations; ++iteration) {
        // Equality-constrained solve on the free set.
        std::vector<int> free_set;
        for (int i = 0; i < n; ++i) {
            if (!active[i]) free_set.push_back(i);
        }
        const int f = static_cast<int>(free_set.size());
        Matrix kkt = Matrix::Zero(f + 1, f + 1);
        Vector kkt_rhs(f + 1);
        for (int a = 0; a < f; ++a) {
            for (int b = 0; b < f; ++b) kkt(a, b) = gram(free_set[a], free_set[b]);
            kkt(a, f) = 1.0;
            kkt(f, a) = 1.0;
            kkt_rhs(a) = rhs(free_set[a]);
        }
        kkt_rhs(f) = 1.0;
        const Vector solution = kkt.fullPivLu().solve(kkt_rhs);
        Vector candidate = Vector::Zero(n);
        for (int a = 0; a < f; ++a) candidate(free_set[a]) = solution(a);
        const double mu = solution(f);

        const double min_free = f ? candidate(free_set[0]) : 0.0;
        double lowest = min_free;
        for (int a = 1; a < f; ++a) lowest = std::min(lowest, candidate(free_set[a]));

        if (lowest >= -kTol) {
            alpha = candidate.cwiseMax(0.0);
            // KKT multipliers of the pinned variables must be nonnegative.
            const Vector gradient = gram * alpha - rhs;
            int release = -1;
            double most_negative = -1e-9;
            for (int i = 0; i < n; ++i) {
                if (!active[i]) continue;
                const double multiplier = gradient(i) + mu;
                if (multiplier < most_negative) {
                    most_negative = multiplier;
                    release = i;
                }
            }
            if (release < 0) return alpha;
            active[release] = false;
            continue;
        }

        // Step from the last feasible alpha toward the candidate until the
        // first free variable hits zero; pin the blockers.
        double theta = 1.0;
        for (int a = 0; a < f; ++a) {
            const int i = free_set[a];
            if (candidate(i) < -kTol && alpha(i) > candidate(i)) {
                theta = std::min(theta, alpha(i) / (alpha(i) - candidate(i)));
            }
        }
        alpha += theta * (candidate - alpha);
        for (int a = 0; a < f; ++a) {
            const int i = free_set[a];
            if (alpha(i) <= kTol) {
                alpha(i) = 0.0;
                active[i] = true;
            }
        }
        // Keep at least one variable free so the sum constraint stays solvable.
        if (std::all_of(active.begin(), active.end(), [](bool b) { return b; })) {
            Eigen::Index best;
            alpha.maxCoeff(&best);
            active[static_cast<int>(best)] = false;
        }
    }
    throw NumericalError("constrained least squares did not converge");
}

Spectrum gp_reconstruct(const EndmemberMatrix& m, const Spectrum& r,
                        const FitOptions& options) {
    const auto fit = fit_hyperparameters(m.entries, r, options);
    const auto model = GpModel::fit(m.entries, r, {KernelKind::Gaussian, fit.bandwidth},
                                    fit.noise_variance);
    return r - model.fitting_residual();
}

UnmixResult detect_then_unmix(const SceneImage& image, const EndmemberMatrix& m, double pfa,
                              const GpSettings& gp) {
    const int n = image.size();
    const int l = image.bands();
    UnmixResult result;
    result.calibration = calibrate_threshold(m, image, pfa, gp);

    const LinearModel lm = build_linear_model(m);
    const GpResidualEngine engine(m, image, gp);
    const double tau = result.calibration.tau;

    result.labels.resize(static_cast<std::size_t>(n));
    result.has_abundance.assign(static_cast<std::size_t>(n), false);
    result.abundances = Matrix::Zero(n, m.count());
    result.reconstruction.resize(n, l);
    result.squared_errors.resize(n);

    detail::parallel_for(n, gp.threads, [&](int i) {
        const Spectrum r = image.pixels.row(i).transpose();
        const Spectrum e_nlin = engine.residual(r);
        const Spectrum e_lin = linear_residual(lm, r);
        const double t = test_statistic(e_nlin, e_lin).value;
        if (t < tau) {
            result.labels[static_cast<std::size_t>(i)] = PixelLabel::Nonlinear;
            result.reconstruction.row(i) = (r - e_nlin).transpose();
        } else {
            result.labels[static_cast<std::size_t>(i)] = PixelLabel::Linear;
            const Vector alpha = fcls(m, r);
            result.abundances.row(i) = alpha.transpose();
            result.has_abundance[static_cast<std::size_t>(i)] = true;
            result.reconstruction.row(i) = (m.entries * alpha).transpose();
        }
        result.squared_errors(i) =
            (r - result.reconstruction.row(i).transpose()).squaredNorm();
    });
    return result;
}

double abundance_rmse(const Matrix& truth, const Matrix& estimate) {
    if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
        throw std::invalid_argument("abundance matrices differ in shape");
    }
    if (truth.size() == 0) throw std::invalid_argument("empty abundance matrices");
    return std::sqrt((truth - estimate).squaredNorm() /
                     static_cast<double>(truth.size()));
}

double reconstruction_rmse(const Matrix& pixels, const Matrix& reconstruction) {
    if (pixels.rows() != reconstruction.rows() || pixels.cols() != reconstruction.cols()) {
        throw std::invalid_argument("reconstruction shape mismatch");
    }
    if (pixels.size() == 0) throw std::invalid_argument("empty image");
    return std::sqrt((pixels - reconstruction).squaredNorm() /
                     static_cast<double>(pixels.size()));
}

PipelineMetrics pipeline_metrics(const SceneImage& image, const EndmemberMatrix& m,
                                 const UnmixResult& result, const GpSettings& gp,
                                 const std::optional<Matrix>& clean_pixels) {
    const int n = image.size();
    const int l = image.bands();
    PipelineMetrics metrics;
    for (const PixelLabel label : result.labels) {
        metrics.linear_count += label == PixelLabel::Linear;
        metrics.nonlinear_count += label == PixelLabel::Nonlinear;
    }

    Matrix fcls_recon(n, l);
    Matrix gp_recon(n, l);
    Matrix fcls_abundances(n, m.count());
    const GpResidualEngine engine(m, image, gp);
    detail::parallel_for(n, gp.threads, [&](int i) {
        const Spectrum r = image.pixels.row(i).transpose();
        const Vector alpha = fcls(m, r);
        fcls_abundances.row(i) = alpha.transpose();
        fcls_recon.row(i) = (m.entries * alpha).transpose();
        gp_recon.row(i) = (r - engine.residual(r)).transpose();
    });

    metrics.rmse_full_reconstruction = reconstruction_rmse(image.pixels, result.reconstruction);
    metrics.rmse_fcls_all = reconstruction_rmse(image.pixels, fcls_recon);
    metrics.rmse_gp_all = reconstruction_rmse(image.pixels, gp_recon);

    if (clean_pixels) {
        metrics.rmse_vs_clean = reconstruction_rmse(*clean_pixels, result.reconstruction);
        metrics.rmse_vs_clean_fcls_all = reconstruction_rmse(*clean_pixels, fcls_recon);
        metrics.rmse_vs_clean_gp_all = reconstruction_rmse(*clean_pixels, gp_recon);
    }

    if (image.truth && image.truth->abundances.rows() == n) {
        // Abundance error over truly-linear pixels. The detect-then-unmix
        // figure is restricted to the pixels it actually routed linearly.
        std::vector<int> truly_linear;
        std::vector<int> both;
        for (int i = 0; i < n; ++i) {
            if (image.truth->labels[static_cast<std::size_t>(i)] != PixelLabel::Linear) continue;
            truly_linear.push_back(i);
            if (result.has_abundance[static_cast<std::size_t>(i)]) both.push_back(i);
        }
        auto subset_rmse = [&](const Matrix& estimate, const std::vector<int>& rows) {
            if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
            double total = 0.0;
            for (const int i : rows) {
                total += (image.truth->abundances.row(i) - estimate.row(i)).squaredNorm();
            }
            return std::sqrt(total / (static_cast<double>(rows.size()) * m.count()));
        };
        metrics.rmse_linear_subset = subset_rmse(result.abundances, both);
        metrics.rmse_linear_subset_fcls_all = subset_rmse(fcls_abundances, truly_linear);
    }
    return metrics;
}

void write_abundance_csv(const UnmixResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const auto r = result.abundances.cols();
    out << "pixel_index";
    for (Eigen::Index j = 0; j < r; ++j) out << ",alpha_" << (j + 1);
    out << ",label\n";
    for (std::size_t i = 0; i < result.labels.size(); ++i) {
        out << i;
        for (Eigen::Index j = 0; j < r; ++j) {
            out << ',';
            if (result.has_abundance[i]) {
                out << format_double(result.abundances(static_cast<Eigen::Index>(i), j));
            } else {
                out << "nan";
            }
        }
        out << ',' << to_string(result.labels[i]) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_metrics_json(const PipelineMetrics& metrics, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["counts"]["linear"] = metrics.linear_count;
    doc["counts"]["nonlinear"] = metrics.nonlinear_count;
    doc["rmse_full_reconstruction"] = metrics.rmse_full_reconstruction;
    doc["rmse_fcls_all"] = metrics.rmse_fcls_all;
    doc["rmse_gp_all"] = metrics.rmse_gp_all;
    if (metrics.rmse_vs_clean) {
        doc["rmse_vs_clean"] = *metrics.rmse_vs_clean;
        doc["rmse_vs_clean_fcls_all"] = *metrics.rmse_vs_clean_fcls_all;
        doc["rmse_vs_clean_gp_all"] = *metrics.rmse_vs_clean_gp_all;
    }
    if (metrics.rmse_linear_subset) {
        doc["rmse_linear_subset"] = *metrics.rmse_linear_subset;
        doc["rmse_linear_subset_fcls_all"] = *metrics.rmse_linear_subset_fcls_all;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace unmix
