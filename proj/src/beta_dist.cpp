#include "unmix/beta_dist.hpp"

#include "unmix/types.hpp"

#include <algorithm>
#include <cmath>

namespace unmix {

double digamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("digamma needs x > 0");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("trigamma needs x > 0");
    double result = 0.0;
    while (x < 6.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += inv * (1.0 + 0.5 * inv +
                     inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))));
    return result;
}

namespace {

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Continued fraction for the incomplete beta function, modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-15;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericalError("incomplete beta continued fraction did not converge");
}

void check_params(const BetaParams& p) {
    if (!(p.alpha > 0.0) || !(p.beta > 0.0) || !std::isfinite(p.alpha) || !std::isfinite(p.beta)) {
        throw std::invalid_argument("beta shape parameters must be positive and finite");
    }
}

}  // namespace

double beta_pdf(const BetaParams& params, double x) {
    check_params(params);
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp((params.alpha - 1.0) * std::log(x) + (params.beta - 1.0) * std::log1p(-x) -
                    log_beta(params.alpha, params.beta));
}

double beta_cdf(const BetaParams& params, double x) {
    check_params(params);
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double a = params.alpha;
    const double b = params.beta;
    const double front =
        std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(b, a)) *
                     beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_inverse_cdf(const BetaParams& params, double p) {
    check_params(params);
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must lie in (0, 1)");

    double lo = 0.0, hi = 1.0;
    double x = params.alpha / (params.alpha + params.beta);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = beta_cdf(params, x) - p;
        if (std::abs(f) <= 1e-12) return x;
        if (f > 0.0) {
            hi = x;
        } else {
            lo = x;
        }
        const double density = beta_pdf(params, x);
        double next = density > 0.0 ? x - f / density : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) < 1e-16 && std::abs(f) <= 1e-10) return x;
        x = next;
    }
    if (std::abs(beta_cdf(params, x) - p) > 1e-10) {
        throw NumericalError("beta quantile iteration did not converge");
    }
    return x;
}

BetaParams fit_beta_unit(const std::vector<double>& samples) {
    if (samples.size() < 30) {
        throw ValidationError("beta fit needs at least 30 samples");
    }
    double mean = 0.0;
    double log_x = 0.0, log_1mx = 0.0;
    for (double s : samples) {
        if (!(s > 0.0 && s < 1.0)) {
            throw ValidationError("beta fit samples must lie strictly inside the interval");
        }
        mean += s;
        log_x += std::log(s);
        log_1mx += std::log1p(-s);
    }
    const double n = static_cast<double>(samples.size());
    mean /= n;
    log_x /= n;
    log_1mx /= n;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= n;
    if (var <= 0.0) throw ValidationError("beta fit is degenerate: zero sample variance");

    // Method of moments start; falls back to (1,1) when over-dispersed.
    double common = mean * (1.0 - mean) / var - 1.0;
    double a = common > 0.0 ? mean * common : 1.0;
    double b = common > 0.0 ? (1.0 - mean) * common : 1.0;
    a = std::max(a, 1e-3);
    b = std::max(b, 1e-3);

    for (int iter = 0; iter < 100; ++iter) {
        const double psi_ab = digamma(a + b);
        const double f1 = digamma(a) - psi_ab - log_x;
        const double f2 = digamma(b) - psi_ab - log_1mx;
        const double tri_ab = trigamma(a + b);
        const double j11 = trigamma(a) - tri_ab;
        const double j22 = trigamma(b) - tri_ab;
        const double j12 = -tri_ab;
        const double det = j11 * j22 - j12 * j12;
        if (std::abs(det) < 1e-300) break;
        double da = (f1 * j22 - f2 * j12) / det;
        double db = (f2 * j11 - f1 * j12) / det;
        double scale = 1.0;
        while ((a - scale * da <= 0.0 || b - scale * db <= 0.0) && scale > 1e-12) scale *= 0.5;
        a -= scale * da;
        b -= scale * db;
        if (std::abs(scale * da) < 1e-10 && std::abs(scale * db) < 1e-10) break;
    }
    return {a, b};
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("KS statistic needs samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

double ks_critical_value(std::size_t n, double significance) {
    if (n == 0 || !(significance > 0.0 && significance < 1.0)) {
        throw std::invalid_argument("KS critical value needs n > 0 and significance in (0,1)");
    }
    return std::sqrt(-0.5 * std::log(significance / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace unmix
