#include "unmix/types.hpp"

namespace unmix {

const char* to_string(PixelLabel label) {
    switch (label) {
        case PixelLabel::Linear: return "linear";
        case PixelLabel::Nonlinear: return "nonlinear";
        case PixelLabel::Unclassified: return "unclassified";
    }
    return "unclassified";
}

PixelLabel parse_pixel_label(const std::string& text) {
    if (text == "linear") return PixelLabel::Linear;
    if (text == "nonlinear") return PixelLabel::Nonlinear;
    if (text == "unclassified") return PixelLabel::Unclassified;
    throw FormatError("unknown pixel label: " + text);
}

EndmemberMatrix::EndmemberMatrix(Matrix m) : entries(std::move(m)) {
    const auto L = entries.rows();
    const auto R = entries.cols();
    if (R < 2) {
        throw ValidationError("endmember matrix needs at least 2 columns, got " +
                              std::to_string(R));
    }
    if (L <= R) {
        throw ValidationError("endmember matrix needs more bands than endmembers (L=" +
                              std::to_string(L) + ", R=" + std::to_string(R) + ")");
    }
    if (!entries.allFinite()) {
        throw ValidationError("endmember matrix has non-finite entries");
    }
    const double scale = entries.cwiseAbs().maxCoeff();
    const double tol = 1e-12 * std::max(scale, 1.0);
    for (Eigen::Index i = 0; i < R; ++i) {
        for (Eigen::Index j = i + 1; j < R; ++j) {
            if ((entries.col(i) - entries.col(j)).cwiseAbs().maxCoeff() <= tol) {
                throw ValidationError("endmember columns " + std::to_string(i) + " and " +
                                      std::to_string(j) + " coincide");
            }
        }
    }
}

void validate_scene(const SceneImage& image) {
    if (!image.truth) return;
    const auto n = static_cast<std::size_t>(image.size());
    const GroundTruth& gt = *image.truth;
    if (gt.labels.size() != n) {
        throw ValidationError("ground-truth label count does not match pixel count");
    }
    if (gt.abundances.size() != 0 && static_cast<std::size_t>(gt.abundances.rows()) != n) {
        throw ValidationError("ground-truth abundance rows do not match pixel count");
    }
    if (gt.eta_d.size() != 0 && static_cast<std::size_t>(gt.eta_d.size()) != n) {
        throw ValidationError("ground-truth eta_d length does not match pixel count");
    }
}

}  // namespace unmix
