#pragma once

#include "unmix/detector.hpp"
#include "unmix/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace unmix {

/// Unconstrained least squares via QR; the residual is orthogonal to span(M).
Vector ls_abundances(const EndmemberMatrix& m, const Spectrum& r);

/// Fully constrained least squares: minimizes |r - M a|^2 subject to a >= 0
/// and sum(a) = 1, by active-set iteration on the nonnegativity constraints.
Vector fcls(const EndmemberMatrix& m, const Spectrum& r);

/// GP predictive mean at the training inputs (per-spectrum hyperparameter
/// fit); the nonlinear-branch reconstruction.
Spectrum gp_reconstruct(const EndmemberMatrix& m, const Spectrum& r,
                        const FitOptions& options = {});

struct UnmixResult {
    std::vector<PixelLabel> labels;
    Matrix abundances;               // N x R, valid where has_abundance
    std::vector<bool> has_abundance; // true on the linear branch
    Matrix reconstruction;           // N x L, branch output per pixel
    Vector squared_errors;           // per-pixel |r - r_hat|^2
    CalibrationResult calibration;
};

/// Calibrates the detector at the given PFA, routes linear-labeled pixels to
/// FCLS (reconstruction M a) and nonlinear-labeled pixels to the GP
/// reconstruction.
UnmixResult detect_then_unmix(const SceneImage& image, const EndmemberMatrix& m, double pfa,
                              const GpSettings& gp);

/// sqrt( sum |a_n - a_hat_n|^2 / (N R) )
double abundance_rmse(const Matrix& truth, const Matrix& estimate);

/// sqrt( sum |r_n - r_hat_n|^2 / (N L) )
double reconstruction_rmse(const Matrix& pixels, const Matrix& reconstruction);

struct PipelineMetrics {
    std::size_t linear_count = 0;
    std::size_t nonlinear_count = 0;
    // Reconstruction RMSE against the observed image for the three
    // strategies: detect-then-unmix, FCLS everywhere, GP everywhere.
    double rmse_full_reconstruction = 0.0;
    double rmse_fcls_all = 0.0;
    double rmse_gp_all = 0.0;
    // Same comparison against a noiseless reference, when one is available.
    std::optional<double> rmse_vs_clean;
    std::optional<double> rmse_vs_clean_fcls_all;
    std::optional<double> rmse_vs_clean_gp_all;
    // Abundance RMSE over truly-linear pixels (ground truth required):
    // detect-then-unmix restricted to its linear-labeled subset, and FCLS
    // everywhere on the full truly-linear subset.
    std::optional<double> rmse_linear_subset;
    std::optional<double> rmse_linear_subset_fcls_all;
};

/// Runs the two single-strategy baselines next to an existing result.
PipelineMetrics pipeline_metrics(const SceneImage& image, const EndmemberMatrix& m,
                                 const UnmixResult& result, const GpSettings& gp,
                                 const std::optional<Matrix>& clean_pixels = std::nullopt);

void write_abundance_csv(const UnmixResult& result, const std::filesystem::path& path);
void write_metrics_json(const PipelineMetrics& metrics, const std::filesystem::path& path);

}  // namespace unmix
