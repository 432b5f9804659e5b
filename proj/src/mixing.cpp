#include "unmix/mixing.hpp"

#include "unmix/scene_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace unmix {

const char* to_string(MixingFamily family) {
    switch (family) {
        case MixingFamily::Lmm: return "lmm";
        case MixingFamily::Gbm: return "gbm";
        case MixingFamily::Pnmm: return "pnmm";
    }
    return "lmm";
}

MixingFamily parse_mixing_family(const std::string& text) {
    if (text == "lmm") return MixingFamily::Lmm;
    if (text == "gbm") return MixingFamily::Gbm;
    if (text == "pnmm") return MixingFamily::Pnmm;
    throw FormatError("unknown mixing family: " + text);
}

Vector sample_abundance_uniform(int endmember_count, CounterRng& rng) {
    if (endmember_count < 2) {
        throw std::invalid_argument("abundance sampling needs at least 2 endmembers");
    }
    // Normalized exponential spacings give a flat Dirichlet.
    Vector draw(endmember_count);
    double total = 0.0;
    for (int i = 0; i < endmember_count; ++i) {
        draw(i) = -std::log(rng.next_open());
        total += draw(i);
    }
    return draw / total;
}

Spectrum lmm_pixel(const EndmemberMatrix& m, const Vector& alpha) {
    if (alpha.size() != m.count()) {
        throw std::invalid_argument("abundance length does not match endmember count");
    }
    return m.entries * alpha;
}

Spectrum gbm_nonlinear_term(const EndmemberMatrix& m, const Vector& alpha) {
    if (alpha.size() != m.count()) {
        throw std::invalid_argument("abundance length does not match endmember count");
    }
    Spectrum nu = Spectrum::Zero(m.bands());
    for (int i = 0; i < m.count(); ++i) {
        for (int j = i + 1; j < m.count(); ++j) {
            nu += alpha(i) * alpha(j) *
                  m.entries.col(i).cwiseProduct(m.entries.col(j));
        }
    }
    return nu;
}

Spectrum pnmm_nonlinear_term(const EndmemberMatrix& m, const Vector& alpha, double xi) {
    Spectrum base = lmm_pixel(m, alpha);
    const bool integral = xi == std::floor(xi);
    if (!integral && (base.array() < 0.0).any()) {
        throw std::domain_error("negative linear mixture with fractional exponent");
    }
    return base.array().pow(xi);
}

ScalingFactors solve_scaling(double eta_d, const EndmemberMatrix& m, const Vector& alpha,
                             const Spectrum& nu) {
    if (!(eta_d >= 0.0 && eta_d < 1.0)) {
        throw std::invalid_argument("eta_d must lie in [0, 1)");
    }
    if (eta_d == 0.0) return {1.0, 0.0};

    const Spectrum linear = lmm_pixel(m, alpha);
    const double nu_sq = nu.squaredNorm();
    const double lin_sq = linear.squaredNorm();
    if (nu_sq <= 0.0 || lin_sq <= 0.0) {
        throw std::domain_error("nonlinear term is zero; requested eta_d is infeasible");
    }
    const double k = std::sqrt(1.0 - eta_d);
    // Positive root of gamma^2 |nu|^2 + 2 k gamma (nu'M a) - (1-k^2)|M a|^2 = 0,
    // written in the conjugate form: both cross and constant terms are
    // nonnegative here, so no cancellation.
    const double cross = k * nu.dot(linear);
    const double target = (1.0 - k * k) * lin_sq;
    const double gamma = target / (cross + std::sqrt(cross * cross + nu_sq * target));
    return {k, gamma};
}

double degree_of_nonlinearity(const Spectrum& r_lin, const Spectrum& r_nlin) {
    if (r_lin.size() != r_nlin.size()) {
        throw std::invalid_argument("spectra lengths differ");
    }
    const double total = (r_lin + r_nlin).squaredNorm();
    if (total <= 0.0) throw std::domain_error("zero total energy");
    return (2.0 * r_lin.dot(r_nlin) + r_nlin.squaredNorm()) / total;
}

void SceneConfig::validate() const {
    if (pixel_count <= 0) throw std::invalid_argument("pixel count must be positive");
    const double total = proportion_lmm + proportion_gbm + proportion_pnmm;
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("family proportions must sum to 1");
    }
    if (proportion_lmm < 0 || proportion_gbm < 0 || proportion_pnmm < 0) {
        throw std::invalid_argument("family proportions must be nonnegative");
    }
    if (!(eta_d >= 0.0 && eta_d < 1.0)) throw std::invalid_argument("eta_d must lie in [0, 1)");
    if (noise_variance < 0.0) throw std::invalid_argument("noise variance must be nonnegative");
    if (decimate <= 0) throw std::invalid_argument("decimate must be positive");
    if (!endmember_file) {
        if (endmember_count < 2) throw std::invalid_argument("need at least 2 endmembers");
        if (bands <= endmember_count) throw std::invalid_argument("need bands > endmembers");
    }
    if (fixed_abundance && (fixed_abundance->array() < 0.0).any()) {
        throw std::invalid_argument("fixed abundance entries must be nonnegative");
    }
}

KeyValueMap parse_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    KeyValueMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](const std::string& s) {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r\n");
            return s.substr(b, e - b + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key = value");
        }
        map[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return map;
}

namespace {

double map_double(const KeyValueMap& map, const std::string& key, double fallback) {
    const auto it = map.find(key);
    return it == map.end() ? fallback : parse_double(it->second, "config key " + key);
}

long map_long(const KeyValueMap& map, const std::string& key, long fallback) {
    return std::lround(map_double(map, key, static_cast<double>(fallback)));
}

}  // namespace

SceneConfig scene_config_from_map(const KeyValueMap& map) {
    SceneConfig config;
    config.pixel_count = static_cast<int>(map_long(map, "pixels", 0));
    config.bands = static_cast<int>(map_long(map, "bands", config.bands));
    config.endmember_count =
        static_cast<int>(map_long(map, "endmembers", config.endmember_count));
    config.proportion_lmm = map_double(map, "proportion_lmm", -1.0);
    config.proportion_gbm = map_double(map, "proportion_gbm", 0.0);
    config.proportion_pnmm = map_double(map, "proportion_pnmm", 0.0);
    if (config.proportion_lmm < 0.0) {
        config.proportion_lmm = 1.0 - config.proportion_gbm - config.proportion_pnmm;
    }
    config.eta_d = map_double(map, "eta_d", config.eta_d);
    config.xi = map_double(map, "xi", config.xi);
    config.noise_variance = map_double(map, "noise_variance", config.noise_variance);
    config.decimate = static_cast<int>(map_long(map, "decimate", 1));
    config.seed = static_cast<std::uint64_t>(map_long(map, "seed", 0));
    if (const auto it = map.find("endmember_file"); it != map.end() && !it->second.empty()) {
        config.endmember_file = it->second;
    }
    if (const auto it = map.find("abundance"); it != map.end() && it->second != "uniform") {
        std::stringstream ss(it->second);
        std::string field;
        std::vector<double> values;
        while (std::getline(ss, field, ',')) {
            values.push_back(parse_double(field, "abundance"));
        }
        Vector alpha = Eigen::Map<const Vector>(values.data(),
                                                static_cast<Eigen::Index>(values.size()));
        const double sum = alpha.sum();
        if (sum <= 0.0) throw std::invalid_argument("fixed abundance must have positive sum");
        config.fixed_abundance = alpha / sum;  // tolerate inputs that do not sum to 1
    }
    return config;
}

EndmemberMatrix synthetic_endmembers(int bands, int count, std::uint64_t seed) {
    if (count < 2 || bands <= count) {
        throw std::invalid_argument("synthetic endmembers need count >= 2 and bands > count");
    }
    Vector wavelength(bands);
    for (int i = 0; i < bands; ++i) {
        wavelength(i) = 0.4 + 2.1 * static_cast<double>(i) / static_cast<double>(bands - 1);
    }
    Matrix m(bands, count);
    auto draw_column = [&](int column, int attempt) {
        CounterRng rng(seed, substream(stream_domain::kEndmembers,
                                       static_cast<std::uint64_t>(column) * 97 + attempt));
        const int bumps = 3 + static_cast<int>(rng.next_below(3));
        const double baseline = 0.05 + 0.10 * rng.next_double();
        Vector v = Vector::Constant(bands, baseline);
        for (int b = 0; b < bumps; ++b) {
            const double center = 0.45 + 2.0 * rng.next_double();
            const double width = 0.08 + 0.42 * rng.next_double();
            const double amplitude = 0.15 + 0.45 * rng.next_double();
            v.array() += amplitude *
                         (-(wavelength.array() - center).square() / (2.0 * width * width)).exp();
        }
        const double peak = v.maxCoeff();
        if (peak > 1.1) v *= (0.9 + 0.2 * rng.next_double()) / peak;
        m.col(column) = v;
    };
    for (int c = 0; c < count; ++c) draw_column(c, 0);

    // Redraw columns until the matrix is comfortably full rank; the detector
    // and extractors all assume distinct, independent signatures.
    for (int attempt = 1; attempt <= 32; ++attempt) {
        Eigen::JacobiSVD<Matrix> svd(m);
        const double cond = svd.singularValues()(0) /
                            svd.singularValues()(svd.singularValues().size() - 1);
        if (cond < 1e4) break;
        draw_column(static_cast<int>((attempt - 1) % count), attempt);
    }
    return EndmemberMatrix(std::move(m));
}

GeneratedScene generate_scene(const SceneConfig& config, const EndmemberMatrix& m) {
    config.validate();
    const int n = config.pixel_count;
    const int r = m.count();
    const int l = m.bands();
    if (config.fixed_abundance && config.fixed_abundance->size() != r) {
        throw std::invalid_argument("fixed abundance length does not match endmember count");
    }

    const int n_lmm = static_cast<int>(std::lround(config.proportion_lmm * n));
    const int n_gbm = static_cast<int>(std::lround(config.proportion_gbm * n));
    const int n_pnmm = n - n_lmm - n_gbm;
    if (n_pnmm < 0) throw std::invalid_argument("family proportions round past pixel count");

    SceneImage image;
    image.pixels.resize(n, l);
    GroundTruth truth;
    truth.labels.resize(n);
    truth.abundances.resize(n, r);
    truth.eta_d.resize(n);
    truth.endmembers = m.entries;

    Matrix noiseless(n, l);
    const double sigma = std::sqrt(config.noise_variance);
    double noiseless_energy = 0.0;
    for (int i = 0; i < n; ++i) {
        CounterRng alpha_rng(config.seed, substream(stream_domain::kAbundance,
                                                    static_cast<std::uint64_t>(i)));
        const Vector alpha = config.fixed_abundance
                                 ? *config.fixed_abundance
                                 : sample_abundance_uniform(r, alpha_rng);
        const MixingFamily family = i < n_lmm              ? MixingFamily::Lmm
                                    : i < n_lmm + n_gbm    ? MixingFamily::Gbm
                                                           : MixingFamily::Pnmm;
        Spectrum clean;
        if (family == MixingFamily::Lmm || config.eta_d == 0.0) {
            clean = lmm_pixel(m, alpha);
            truth.labels[i] = PixelLabel::Linear;
            truth.eta_d(i) = 0.0;
        } else {
            const Spectrum nu = family == MixingFamily::Gbm
                                    ? gbm_nonlinear_term(m, alpha)
                                    : pnmm_nonlinear_term(m, alpha, config.xi);
            const auto scaling = solve_scaling(config.eta_d, m, alpha, nu);
            clean = scaling.k * lmm_pixel(m, alpha) + scaling.gamma * nu;
            truth.labels[i] = PixelLabel::Nonlinear;
            truth.eta_d(i) = config.eta_d;
        }
        truth.abundances.row(i) = alpha.transpose();
        noiseless.row(i) = clean.transpose();
        noiseless_energy += clean.squaredNorm();

        if (sigma > 0.0) {
            CounterRng noise_rng(config.seed, substream(stream_domain::kNoise,
                                                        static_cast<std::uint64_t>(i)));
            for (int b = 0; b < l; ++b) clean(b) += sigma * noise_rng.next_normal();
        }
        image.pixels.row(i) = clean.transpose();
    }
    image.truth = std::move(truth);

    GeneratedScene out;
    out.image = std::move(image);
    out.noiseless = std::move(noiseless);
    out.empirical_snr_db =
        config.noise_variance > 0.0
            ? 10.0 * std::log10(noiseless_energy / n / (l * config.noise_variance))
            : std::numeric_limits<double>::infinity();
    return out;
}

}  // namespace unmix
