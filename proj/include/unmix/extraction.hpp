#pragma once

#include "unmix/detector.hpp"
#include "unmix/lp.hpp"
#include "unmix/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace unmix {

/// Affine dimensionality reduction: centroid plus the top R-1 principal
/// directions, with a deterministic sign convention (largest-magnitude entry
/// of each basis vector is positive).
struct ReducedData {
    Matrix projected;  // N x (R-1)
    Matrix basis;      // L x (R-1), orthonormal
    Vector centroid;   // L
};

ReducedData affine_reduce(const Matrix& pixels, int endmember_count);

inline ReducedData affine_reduce(const SceneImage& image, int endmember_count) {
    return affine_reduce(image.pixels, endmember_count);
}

/// Vertex selection by iterated orthogonal-subspace random projections over
/// affine-lifted coordinates. Returns observed pixel spectra as columns.
EndmemberMatrix vca(const Matrix& pixels, int endmember_count, std::uint64_t seed);

inline EndmemberMatrix vca(const SceneImage& image, int endmember_count, std::uint64_t seed) {
    return vca(image.pixels, endmember_count, seed);
}

struct MvesResult {
    EndmemberMatrix endmembers;
    std::vector<double> sweep_volumes;  // simplex volume after each sweep
    int sweeps = 0;
};

/// Minimum-volume enclosing simplex via alternating row-wise linear programs
/// on the inverse-simplex parameterization in reduced coordinates.
MvesResult mves(const Matrix& pixels, int endmember_count);

inline MvesResult mves(const SceneImage& image, int endmember_count) {
    return mves(image.pixels, endmember_count);
}

/// Barycentric coordinates of reduced points with respect to R vertices
/// given in reduced coordinates ((R-1) x R). Rows sum to one; enclosure
/// means all entries >= 0.
Matrix barycentric_coordinates(const Matrix& points, const Matrix& vertices);

struct IterativeParams {
    int max_iterations = 10;        // N_max
    double epsilon = 0.05;          // stop when max(T) - min(T) <= epsilon
    double relax_factor = 0.9;      // r_f
    double relax_increment = 0.01;  // r_inc = 0.1 / N_max
    double pfa = 0.05;
};

struct IterationRecord {
    int iteration;
    int surviving_pixels;
    double tau_r;
    int discarded;
    double t_min;
    double t_max;
    Matrix endmembers;  // estimate entering this iteration
};

struct IterativeTrace {
    std::vector<IterationRecord> records;
    double tau = 0.0;  // calibrated once up front
};

struct IterativeResult {
    EndmemberMatrix endmembers;
    IterativeTrace trace;
};

/// Thrown when pixel removal leaves fewer than 5R survivors; carries the
/// trace accumulated so far.
struct EarlyStopError : NumericalError {
    EarlyStopError(const std::string& message, IterativeTrace partial_trace)
        : NumericalError(message), trace(std::move(partial_trace)) {}
    IterativeTrace trace;
};

/// Alternates endmember estimation with nonlinear-pixel removal: estimate
/// with the enclosing-simplex extractor, calibrate the detection threshold
/// once, then repeatedly discard pixels whose statistic falls at or below a
/// relaxed threshold that tightens every iteration.
IterativeResult iterative_endmember_estimation(const SceneImage& image, int endmember_count,
                                               const IterativeParams& params,
                                               const GpSettings& gp);

// Evaluation helpers.
double spectral_angle(const Vector& a, const Vector& b);

/// Column assignment minimizing total spectral angle (exhaustive over
/// permutations; intended for R <= 8). Returns, per reference column, the
/// matching estimate column index.
std::vector<int> match_columns(const Matrix& estimate, const Matrix& reference);

double mean_spectral_angle(const Matrix& estimate, const Matrix& reference);

void write_iterative_trace_csv(const IterativeTrace& trace,
                               const std::optional<Matrix>& reference,
                               const std::filesystem::path& path);
void write_mves_trace_csv(const MvesResult& result, const std::filesystem::path& path);

}  // namespace unmix
