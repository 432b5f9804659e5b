#include "unmix/detector.hpp"

#include "unmix/detail/parallel.hpp"
#include "unmix/rng.hpp"
#include "unmix/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace unmix {

LinearModel build_linear_model(const EndmemberMatrix& m) {
    const Matrix& em = m.entries;
    const Eigen::Index l = em.rows();
    const Eigen::Index r = em.cols();
    Eigen::ColPivHouseholderQR<Matrix> qr(em);
    if (qr.rank() < r) {
        throw NumericalError("endmember matrix is rank deficient; projector undefined");
    }
    const Matrix q = qr.householderQ() * Matrix::Identity(l, r);
    LinearModel model;
    model.projector = Matrix::Identity(l, l) - q * q.transpose();
    model.rank = static_cast<int>(l - r);
    return model;
}

Spectrum linear_residual(const LinearModel& model, const Spectrum& r) {
    if (r.size() != model.projector.rows()) {
        throw std::invalid_argument("spectrum length does not match projector");
    }
    return model.projector * r;
}

TestStatistic test_statistic_from_squares(double e_nlin_sq, double e_lin_sq) {
    if (e_nlin_sq < 0.0 || e_lin_sq < 0.0) {
        throw std::invalid_argument("residual energies must be nonnegative");
    }
    const double total = e_nlin_sq + e_lin_sq;
    if (total <= 0.0) {
        throw std::domain_error("both residuals are zero; statistic undefined");
    }
    return {2.0 * e_nlin_sq / total, e_lin_sq, e_nlin_sq};
}

TestStatistic test_statistic(const Spectrum& e_nlin, const Spectrum& e_lin) {
    return test_statistic_from_squares(e_nlin.squaredNorm(), e_lin.squaredNorm());
}

BetaParams fit_beta(const std::vector<double>& t_samples) {
    std::vector<double> unit;
    unit.reserve(t_samples.size());
    for (double t : t_samples) {
        if (!(t > 0.0 && t < 2.0)) {
            throw ValidationError("detection statistics must lie strictly inside (0, 2)");
        }
        unit.push_back(0.5 * t);
    }
    return fit_beta_unit(unit);
}

GpResidualEngine::GpResidualEngine(const EndmemberMatrix& m, const SceneImage& image,
                                   const GpSettings& settings)
    : inputs_(m.entries), settings_(settings) {
    const int n = image.size();
    if (n == 0) throw std::invalid_argument("image is empty");
    const int k = std::min(std::max(settings.subsample, 1), n);

    // Seeded partial Fisher-Yates pick of k pixels.
    std::vector<int> indices(n);
    for (int i = 0; i < n; ++i) indices[i] = i;
    CounterRng rng(settings.seed, substream(stream_domain::kGpSubsample, 0));
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(indices[i], indices[j]);
    }

    if (settings.per_pixel) {
        // Representative hyperparameters for noise injection: medians of
        // per-pixel fits over the subsample.
        std::vector<double> bandwidths, noises;
        for (int i = 0; i < k; ++i) {
            const auto fit = fit_hyperparameters(
                inputs_, image.pixels.row(indices[i]).transpose(), settings.fit);
            bandwidths.push_back(fit.bandwidth);
            noises.push_back(fit.noise_variance);
        }
        auto median = [](std::vector<double> v) {
            const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
            std::nth_element(v.begin(), mid, v.end());
            return *mid;
        };
        bandwidth_ = median(bandwidths);
        noise_variance_ = median(noises);
    } else {
        Spectrum mean = Spectrum::Zero(image.bands());
        for (int i = 0; i < k; ++i) mean += image.pixels.row(indices[i]).transpose();
        mean /= static_cast<double>(k);
        const auto fit = fit_hyperparameters(inputs_, mean, settings.fit);
        bandwidth_ = fit.bandwidth;
        noise_variance_ = fit.noise_variance;
        smoother_ = residual_smoother(inputs_, {KernelKind::Gaussian, bandwidth_},
                                      noise_variance_);
    }
}

Spectrum GpResidualEngine::residual(const Spectrum& r) const {
    if (!settings_.per_pixel) return smoother_(r);
    const auto fit = fit_hyperparameters(inputs_, r, settings_.fit);
    return GpModel::fit(inputs_, r, {KernelKind::Gaussian, fit.bandwidth}, fit.noise_variance)
        .fitting_residual();
}

HyperFit GpResidualEngine::fit_for(const Spectrum& r) const {
    if (settings_.per_pixel) return fit_hyperparameters(inputs_, r, settings_.fit);
    return {bandwidth_, noise_variance_,
            negative_log_marginal_likelihood(bandwidth_, noise_variance_, inputs_, r)};
}

namespace {

Vector statistics_for(const Matrix& pixels, const LinearModel& lm,
                      const GpResidualEngine& engine, int threads) {
    const int n = static_cast<int>(pixels.rows());
    Vector t(n);
    detail::parallel_for(n, threads, [&](int i) {
        const Spectrum r = pixels.row(i).transpose();
        t(i) = test_statistic(engine.residual(r), linear_residual(lm, r)).value;
    });
    return t;
}

}  // namespace

Vector image_statistics(const EndmemberMatrix& m, const SceneImage& image,
                        const GpSettings& gp) {
    const LinearModel lm = build_linear_model(m);
    const GpResidualEngine engine(m, image, gp);
    return statistics_for(image.pixels, lm, engine, gp.threads);
}

CalibrationResult calibrate_threshold(const EndmemberMatrix& m, const SceneImage& image,
                                      double pfa, const GpSettings& gp) {
    if (!(pfa > 0.0 && pfa < 1.0)) throw std::invalid_argument("pfa must lie in (0, 1)");
    if (image.size() == 0) throw std::invalid_argument("image is empty");
    const LinearModel lm = build_linear_model(m);
    const GpResidualEngine engine(m, image, gp);

    // Unconstrained least-squares abundances, then the linear surrogate
    // image M A_hat, which satisfies the linear hypothesis by construction.
    const Eigen::ColPivHouseholderQR<Matrix> qr(m.entries);
    const Matrix abundances = qr.solve(image.pixels.transpose());  // R x N
    Matrix surrogate = (m.entries * abundances).transpose();       // N x L

    const double sigma = std::sqrt(engine.noise_variance());
    const int n = image.size();
    const int l = image.bands();
    detail::parallel_for(n, gp.threads, [&](int i) {
        CounterRng rng(gp.seed, substream(stream_domain::kCalibrationNoise,
                                          static_cast<std::uint64_t>(i)));
        for (int b = 0; b < l; ++b) surrogate(i, b) += sigma * rng.next_normal();
    });

    const Vector t = statistics_for(surrogate, lm, engine, gp.threads);

    CalibrationResult result;
    result.h0_samples.assign(t.data(), t.data() + t.size());
    result.beta = fit_beta(result.h0_samples);
    result.pfa = pfa;
    result.tau = 2.0 * beta_inverse_cdf(result.beta, pfa);
    result.gp_bandwidth = engine.bandwidth();
    result.gp_noise_variance = engine.noise_variance();
    return result;
}

DetectionMap detect_image(const EndmemberMatrix& m, const SceneImage& image, double tau,
                          const GpSettings& gp) {
    const Vector t = image_statistics(m, image, gp);
    DetectionMap map;
    map.statistics = t;
    map.labels.resize(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        map.labels[static_cast<std::size_t>(i)] =
            t(i) < tau ? PixelLabel::Nonlinear : PixelLabel::Linear;
    }
    return map;
}

RocCurve roc_curve(const Vector& statistics, const std::vector<PixelLabel>& labels) {
    if (static_cast<std::size_t>(statistics.size()) != labels.size()) {
        throw std::invalid_argument("statistics and labels differ in length");
    }
    std::size_t n_linear = 0, n_nonlinear = 0;
    for (const PixelLabel label : labels) {
        n_linear += label == PixelLabel::Linear;
        n_nonlinear += label == PixelLabel::Nonlinear;
    }
    if (n_linear == 0 || n_nonlinear == 0) {
        throw ValidationError("ROC needs both linearly and nonlinearly mixed pixels");
    }

    std::vector<int> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return statistics(a) < statistics(b); });

    RocCurve curve;
    curve.points.push_back({statistics(order.front()), 0.0, 0.0});
    std::size_t below_linear = 0, below_nonlinear = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double value = statistics(order[i]);
        // consume the tie group at `value`; it counts only for thresholds above
        std::size_t j = i;
        while (j < order.size() && statistics(order[j]) == value) {
            const PixelLabel label = labels[static_cast<std::size_t>(order[j])];
            below_linear += label == PixelLabel::Linear;
            below_nonlinear += label == PixelLabel::Nonlinear;
            ++j;
        }
        const double threshold =
            j < order.size() ? statistics(order[j]) : value + 1.0;
        curve.points.push_back({threshold,
                                static_cast<double>(below_linear) / n_linear,
                                static_cast<double>(below_nonlinear) / n_nonlinear});
        i = j;
    }

    curve.auc = 0.0;
    for (std::size_t p = 1; p < curve.points.size(); ++p) {
        const auto& a = curve.points[p - 1];
        const auto& b = curve.points[p];
        curve.auc += (b.pfa - a.pfa) * 0.5 * (a.pd + b.pd);
    }
    return curve;
}

double detection_rate_at(const RocCurve& curve, double pfa_budget) {
    double best = 0.0;
    for (const auto& point : curve.points) {
        if (point.pfa <= pfa_budget) best = std::max(best, point.pd);
    }
    return best;
}

void write_detection_csv(const DetectionMap& map, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "pixel_index,T,label\n";
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        out << i << ',' << format_double(map.statistics(static_cast<Eigen::Index>(i))) << ','
            << to_string(map.labels[i]) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "threshold,pfa,pd\n";
    for (const auto& point : curve.points) {
        out << format_double(point.threshold) << ',' << format_double(point.pfa) << ','
            << format_double(point.pd) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_calibration_json(const CalibrationResult& calibration,
                            const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["alpha"] = calibration.beta.alpha;
    doc["beta"] = calibration.beta.beta;
    doc["tau"] = calibration.tau;
    doc["pfa"] = calibration.pfa;
    doc["n_samples"] = calibration.h0_samples.size();
    doc["gp_bandwidth"] = calibration.gp_bandwidth;
    doc["gp_noise_variance"] = calibration.gp_noise_variance;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace unmix
