#pragma once

#include "unmix/rng.hpp"
#include "unmix/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace unmix {

enum class MixingFamily { Lmm, Gbm, Pnmm };

const char* to_string(MixingFamily family);
MixingFamily parse_mixing_family(const std::string& text);

/// Linear and nonlinear scaling applied to a generated pixel so that the
/// requested fraction of its energy comes from the nonlinear term while the
/// total energy stays equal to the plain linear mixture's.
struct ScalingFactors {
    double k;      // scales the linear part, sqrt(1 - eta_d)
    double gamma;  // scales the nonlinear term, >= 0
};

/// Flat Dirichlet draw: uniform over the (R-1)-simplex.
Vector sample_abundance_uniform(int endmember_count, CounterRng& rng);

Spectrum lmm_pixel(const EndmemberMatrix& m, const Vector& alpha);

/// Sum of alpha_i * alpha_j * (m_i .* m_j) over all endmember pairs i < j.
Spectrum gbm_nonlinear_term(const EndmemberMatrix& m, const Vector& alpha);

/// Entrywise power of the linear mixture.
Spectrum pnmm_nonlinear_term(const EndmemberMatrix& m, const Vector& alpha, double xi);

/// Solves for (k, gamma) such that r = k*M*alpha + gamma*nu has the same
/// energy as M*alpha and a nonlinear energy fraction of exactly eta_d.
ScalingFactors solve_scaling(double eta_d, const EndmemberMatrix& m, const Vector& alpha,
                             const Spectrum& nu);

/// Fraction of pixel energy attributable to the nonlinear contribution:
/// (2 r_lin' r_nlin + |r_nlin|^2) / |r_lin + r_nlin|^2.
double degree_of_nonlinearity(const Spectrum& r_lin, const Spectrum& r_nlin);

struct SceneConfig {
    int pixel_count = 0;
    double proportion_lmm = 1.0;
    double proportion_gbm = 0.0;
    double proportion_pnmm = 0.0;
    double eta_d = 0.5;
    double xi = 3.0;
    double noise_variance = 0.001;
    std::optional<Vector> fixed_abundance;  // normalized to sum 1; empty = uniform draws
    std::uint64_t seed = 0;

    // Endmember source when no file is given: bundled synthetic spectra.
    int bands = 100;
    int endmember_count = 3;
    std::optional<std::filesystem::path> endmember_file;
    int decimate = 1;

    void validate() const;
};

using KeyValueMap = std::map<std::string, std::string>;

/// Flat "key = value" file; '#' starts a comment line.
KeyValueMap parse_key_value_file(const std::filesystem::path& path);

SceneConfig scene_config_from_map(const KeyValueMap& map);

/// Bundled smooth reflectance spectra: sums of 3-5 Gaussian bumps over the
/// 0.4-2.5 um range, deterministic in the seed. Columns are guaranteed
/// distinct and well conditioned.
EndmemberMatrix synthetic_endmembers(int bands, int count, std::uint64_t seed);

struct GeneratedScene {
    SceneImage image;
    Matrix noiseless;         // N x L pixels before noise injection
    double empirical_snr_db;  // metadata only; +inf when noise_variance == 0
};

/// Deterministic in (config, M): pixel i draws only from streams keyed by i.
/// Pixels are laid out as the LMM block, then GBM, then PNMM.
GeneratedScene generate_scene(const SceneConfig& config, const EndmemberMatrix& m);

}  // namespace unmix
