#pragma once

#include "unmix/beta_dist.hpp"
#include "unmix/gp.hpp"
#include "unmix/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace unmix {

/// Orthogonal projector onto the complement of span(M), built from a QR
/// factorization of M. Annihilates every linear mixture.
struct LinearModel {
    Matrix projector;  // L x L, idempotent, P M = 0
    int rank;          // L - R
};

LinearModel build_linear_model(const EndmemberMatrix& m);

Spectrum linear_residual(const LinearModel& model, const Spectrum& r);

struct TestStatistic {
    double value;      // 2 e_nlin^2 / (e_nlin^2 + e_lin^2), in [0, 2]
    double e_lin_sq;
    double e_nlin_sq;
};

TestStatistic test_statistic(const Spectrum& e_nlin, const Spectrum& e_lin);
TestStatistic test_statistic_from_squares(double e_nlin_sq, double e_lin_sq);

/// Maximum-likelihood beta fit of detection statistics in (0, 2); values are
/// rescaled to (0, 1) by halving before the fit.
BetaParams fit_beta(const std::vector<double>& t_samples);

struct GpSettings {
    bool per_pixel = false;  // default: one shared hyperparameter fit per image
    int subsample = 64;      // pixels behind the shared fit
    FitOptions fit;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// GP fitting-residual provider for a whole image. Shared mode fits
/// hyperparameters once on the mean spectrum of a seeded pixel subsample and
/// precomputes the smoother; per-pixel mode refits for every spectrum.
class GpResidualEngine {
  public:
    GpResidualEngine(const EndmemberMatrix& m, const SceneImage& image,
                     const GpSettings& settings);

    Spectrum residual(const Spectrum& r) const;

    /// Hyperparameters in effect for one spectrum (per-pixel mode refits;
    /// shared mode reports the image-wide values). Used for diagnostics.
    HyperFit fit_for(const Spectrum& r) const;

    double bandwidth() const { return bandwidth_; }
    double noise_variance() const { return noise_variance_; }

  private:
    Matrix inputs_;  // rows of M
    GpSettings settings_;
    double bandwidth_ = 0.0;       // shared fit (per-pixel mode: subsample median)
    double noise_variance_ = 0.0;
    ResidualSmoother smoother_;    // shared mode only
};

struct CalibrationResult {
    BetaParams beta;
    double tau;      // threshold on the T scale (0, 2)
    double pfa;
    std::vector<double> h0_samples;
    double gp_bandwidth;
    double gp_noise_variance;
};

/// Builds a linear surrogate image M*A_hat from unconstrained least-squares
/// abundances, adds white noise at the GP-estimated variance, computes the
/// statistic for every surrogate pixel, fits a beta law, and places the
/// threshold at its pfa-quantile.
CalibrationResult calibrate_threshold(const EndmemberMatrix& m, const SceneImage& image,
                                      double pfa, const GpSettings& gp);

/// Statistic for every pixel of an image; order follows pixel order.
Vector image_statistics(const EndmemberMatrix& m, const SceneImage& image,
                        const GpSettings& gp);

/// Labels nonlinear where T < tau (ties stay linear).
DetectionMap detect_image(const EndmemberMatrix& m, const SceneImage& image, double tau,
                          const GpSettings& gp);

struct RocPoint {
    double threshold;
    double pfa;
    double pd;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc;
};

/// Threshold sweep with the "nonlinear iff T < tau" orientation; AUC by
/// trapezoid over (PFA, PD).
RocCurve roc_curve(const Vector& statistics, const std::vector<PixelLabel>& labels);

/// Largest PD among sweep points with PFA <= the given budget.
double detection_rate_at(const RocCurve& curve, double pfa_budget);

void write_detection_csv(const DetectionMap& map, const std::filesystem::path& path);
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
void write_calibration_json(const CalibrationResult& calibration,
                            const std::filesystem::path& path);

}  // namespace unmix
