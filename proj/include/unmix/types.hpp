#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace unmix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A single reflectance spectrum over L bands.
using Spectrum = Eigen::VectorXd;

// Error taxonomy. The CLI maps these onto exit codes; library callers can
// catch the specific category they care about.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PixelLabel : std::uint8_t { Linear, Nonlinear, Unclassified };

const char* to_string(PixelLabel label);
PixelLabel parse_pixel_label(const std::string& text);

/// L x R matrix whose columns are endmember spectra. Construction validates
/// the shape constraints required downstream: at least two endmembers,
/// strictly more bands than endmembers (the linear projector needs positive
/// rank L - R), finite entries, and pairwise-distinct columns.
struct EndmemberMatrix {
    Matrix entries;  // L x R

    EndmemberMatrix() = default;
    explicit EndmemberMatrix(Matrix m);

    int bands() const { return static_cast<int>(entries.rows()); }
    int count() const { return static_cast<int>(entries.cols()); }
};

/// Per-pixel ground truth carried by synthetic scenes.
struct GroundTruth {
    std::vector<PixelLabel> labels;     // N
    Matrix abundances;                  // N x R
    Vector eta_d;                       // N, 0 for linear pixels
    std::optional<Matrix> endmembers;   // true M (L x R) when known
};

/// N pixels by L bands, flat layout. Spatial arrangement (width/height) is
/// carried separately by callers that need to render maps.
struct SceneImage {
    Matrix pixels;  // N x L
    std::optional<GroundTruth> truth;

    int size() const { return static_cast<int>(pixels.rows()); }
    int bands() const { return static_cast<int>(pixels.cols()); }
};

/// Throws ValidationError unless truth arrays (when present) match N.
void validate_scene(const SceneImage& image);

struct DetectionMap {
    std::vector<PixelLabel> labels;
    Vector statistics;  // test statistic T per pixel, in [0, 2]
};

}  // namespace unmix
