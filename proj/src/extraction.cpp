#include "unmix/extraction.hpp"

#include "unmix/rng.hpp"
#include "unmix/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace unmix {

ReducedData affine_reduce(const Matrix& pixels, int endmember_count) {
    const int n = static_cast<int>(pixels.rows());
    const int r = endmember_count;
    if (r < 2) throw std::invalid_argument("need at least 2 endmembers");
    if (n < r) throw std::invalid_argument("need at least R pixels to reduce");

    ReducedData reduced;
    reduced.centroid = pixels.colwise().mean().transpose();
    Matrix centered = pixels.rowwise() - reduced.centroid.transpose();
    Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv(r - 2) <= 1e-12 * std::max(sv(0), 1e-30) || sv(0) == 0.0) {
        throw NumericalError("extraction failed: data rank below R-1");
    }
    Matrix basis = svd.matrixV().leftCols(r - 1);
    for (int j = 0; j < r - 1; ++j) {
        Eigen::Index argmax;
        basis.col(j).cwiseAbs().maxCoeff(&argmax);
        if (basis(argmax, j) < 0.0) basis.col(j) = -basis.col(j);
    }
    reduced.basis = basis;
    reduced.projected = centered * basis;
    return reduced;
}

EndmemberMatrix vca(const Matrix& pixels, int endmember_count, std::uint64_t seed) {
    const int r = endmember_count;
    const int n = static_cast<int>(pixels.rows());
    const ReducedData reduced = affine_reduce(pixels, r);

    // Affine lift: coordinates plus a constant row, so extreme points of the
    // affine hull maximize the projections below.
    Matrix lifted(r, n);
    lifted.topRows(r - 1) = reduced.projected.transpose();
    lifted.row(r - 1).setOnes();

    CounterRng rng(seed, substream(stream_domain::kVca, 0));
    Matrix selected = Matrix::Zero(r, r);
    selected(r - 1, 0) = 1.0;
    std::vector<int> picked(static_cast<std::size_t>(r), 0);
    for (int k = 0; k < r; ++k) {
        Vector direction(r);
        double norm = 0.0;
        do {
            Vector w(r);
            for (int i = 0; i < r; ++i) w(i) = rng.next_normal();
            const Matrix a = selected.leftCols(std::max(k, 1));
            direction = w - a * a.completeOrthogonalDecomposition().solve(w);
            norm = direction.norm();
        } while (norm < 1e-12);
        direction /= norm;
        Eigen::Index argmax;
        (lifted.transpose() * direction).cwiseAbs().maxCoeff(&argmax);
        picked[static_cast<std::size_t>(k)] = static_cast<int>(argmax);
        selected.col(k) = lifted.col(argmax);
    }

    Matrix endmembers(pixels.cols(), r);
    for (int k = 0; k < r; ++k) {
        endmembers.col(k) = pixels.row(picked[static_cast<std::size_t>(k)]).transpose();
    }
    return EndmemberMatrix(std::move(endmembers));
}

Matrix barycentric_coordinates(const Matrix& points, const Matrix& vertices) {
    const int r = static_cast<int>(vertices.cols());
    const int dim = static_cast<int>(vertices.rows());
    if (dim != r - 1) throw std::invalid_argument("vertices must be (R-1) x R");
    if (points.cols() != dim) throw std::invalid_argument("points must be N x (R-1)");
    Matrix basis(dim, dim);
    for (int j = 0; j < dim; ++j) basis.col(j) = vertices.col(j) - vertices.col(r - 1);
    const auto lu = basis.fullPivLu();
    if (!lu.isInvertible()) throw NumericalError("degenerate simplex vertices");
    Matrix coords(points.rows(), r);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Vector s = lu.solve(points.row(i).transpose() - vertices.col(r - 1));
        coords.row(i).head(dim) = s.transpose();
        coords(i, r - 1) = 1.0 - s.sum();
    }
    return coords;
}

namespace {

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// Deterministic affinely-independent seed vertices: farthest point from the
// centroid, then successive farthest-from-affine-hull points.
Matrix initial_vertices(const Matrix& projected, int r) {
    const int n = static_cast<int>(projected.rows());
    const int dim = r - 1;
    std::vector<int> chosen;
    Eigen::Index first;
    projected.rowwise().norm().maxCoeff(&first);
    chosen.push_back(static_cast<int>(first));
    while (static_cast<int>(chosen.size()) < r) {
        const int k = static_cast<int>(chosen.size());
        const Vector origin = projected.row(chosen[0]).transpose();
        Matrix dirs(dim, std::max(k - 1, 0));
        for (int j = 1; j < k; ++j) {
            dirs.col(j - 1) = projected.row(chosen[j]).transpose() - origin;
        }
        std::optional<Eigen::CompleteOrthogonalDecomposition<Matrix>> cod;
        if (k > 1) cod.emplace(dirs);
        int best = -1;
        double best_dist = -1.0;
        for (int i = 0; i < n; ++i) {
            const Vector d = projected.row(i).transpose() - origin;
            const double dist = k == 1 ? d.norm() : (d - dirs * cod->solve(d)).norm();
            if (dist > best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        if (best_dist <= 1e-12) throw NumericalError("extraction failed: degenerate data");
        chosen.push_back(best);
    }
    Matrix vertices(dim, r);
    for (int j = 0; j < r; ++j) vertices.col(j) = projected.row(chosen[j]).transpose();
    return vertices;
}

// Scales vertices about their centroid until every point sits inside with a
// small margin; the alternating LPs need a feasible start.
Matrix inflate_to_enclose(const Matrix& projected, Matrix vertices) {
    const int r = static_cast<int>(vertices.cols());
    const Matrix coords = barycentric_coordinates(projected, vertices);
    const double min_coord = coords.minCoeff();
    const double margin = 1e-9;
    double kappa = 1.0;
    if (min_coord < margin) {
        kappa = 1.001 * (1.0 / r - min_coord) / (1.0 / r - margin);
    }
    const Vector center = vertices.rowwise().mean();
    for (int j = 0; j < r; ++j) {
        vertices.col(j) = center + kappa * (vertices.col(j) - center);
    }
    return vertices;
}

// Cofactor row of det(H) with respect to row i: det(H) = sum_j H(i,j) C(i,j).
Vector cofactor_row(const Matrix& h, int row) {
    const int d = static_cast<int>(h.rows());
    Vector c(d);
    if (d == 1) {
        c(0) = 1.0;
        return c;
    }
    Matrix minor(d - 1, d - 1);
    for (int j = 0; j < d; ++j) {
        int mi = 0;
        for (int i2 = 0; i2 < d; ++i2) {
            if (i2 == row) continue;
            int mj = 0;
            for (int j2 = 0; j2 < d; ++j2) {
                if (j2 == j) continue;
                minor(mi, mj++) = h(i2, j2);
            }
            ++mi;
        }
        const double sign = ((row + j) % 2 == 0) ? 1.0 : -1.0;
        c(j) = sign * minor.determinant();
    }
    return c;
}

}  // namespace

MvesResult mves(const Matrix& pixels, int endmember_count) {
    const int r = endmember_count;
    const int dim = r - 1;
    const ReducedData reduced = affine_reduce(pixels, r);
    const Matrix& x = reduced.projected;  // N x dim
    const int n = static_cast<int>(x.rows());

    Matrix vertices = inflate_to_enclose(x, initial_vertices(x, r));
    Matrix basis(dim, dim);
    for (int j = 0; j < dim; ++j) basis.col(j) = vertices.col(j) - vertices.col(r - 1);
    Matrix h = basis.inverse();
    Vector g = h * vertices.col(r - 1);

    // Row LP over eta = (h_i, g_i): the enclosure constraints
    //   0 <= h_i' x_n - g_i <= 1 - sum_{j != i} (h_j' x_n - g_j)
    // are linear in eta, and det(H) is linear in the row. Each row LP is
    // solved through its dual (R equality constraints over 2N variables),
    // which keeps the dense tableau small; the primal row comes back as the
    // dual multipliers.
    MvesResult result;
    double last_volume = std::numeric_limits<double>::infinity();
    const int max_sweeps = 50;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (int row = 0; row < dim; ++row) {
            const Vector cof = cofactor_row(h, row);
            // Residual slack from the other rows, per point.
            Vector other = Vector::Ones(n);
            for (int j = 0; j < dim; ++j) {
                if (j == row) continue;
                other -= (x * h.row(j).transpose() - Vector::Constant(n, g(j)));
            }
            // Primal rows: [-x_n, +1] eta <= 0 and [x_n, -1] eta <= other_n.
            Matrix g_rows(2 * n, r);
            Vector h_rhs(2 * n);
            g_rows.topRows(n).leftCols(dim) = -x;
            g_rows.topRows(n).col(dim).setOnes();
            h_rhs.head(n).setZero();
            g_rows.bottomRows(n).leftCols(dim) = x;
            g_rows.bottomRows(n).col(dim) = -Vector::Ones(n);
            h_rhs.tail(n) = other;

            Vector objective = Vector::Zero(r);
            objective.head(dim) = cof;

            double best_value = h.row(row).head(dim).dot(cof.head(dim));
            Vector best_eta(r);
            best_eta.head(dim) = h.row(row).transpose();
            best_eta(dim) = g(row);
            bool improved = false;
            for (const double sign : {1.0, -1.0}) {
                LpProblem dual;
                dual.sense = LpSense::Minimize;
                dual.objective = h_rhs;
                dual.constraints = g_rows.transpose();
                dual.rhs = sign * objective;
                dual.row_types.assign(static_cast<std::size_t>(r), LpRow::Equal);
                const LpSolution sol = solve_lp(dual);
                if (sol.status != LpStatus::Optimal) {
                    throw NumericalError("enclosing-simplex row subproblem failed");
                }
                // Strong duality: the dual optimum equals the primal max of
                // sign * cof' h_i, and the equality-row multipliers are an
                // optimal primal eta (feasible for the shared constraints).
                const double det_value = sign * sol.objective;
                if (std::abs(det_value) > std::abs(best_value) * (1.0 + 1e-12)) {
                    best_value = det_value;
                    best_eta = sol.row_duals;
                    improved = true;
                }
            }
            if (improved) {
                h.row(row) = best_eta.head(dim).transpose();
                g(row) = best_eta(dim);
            }
        }
        const double det = h.determinant();
        if (det == 0.0) throw NumericalError("enclosing simplex degenerated");
        const double volume = std::exp(-log_factorial(dim)) / std::abs(det);
        result.sweep_volumes.push_back(volume);
        result.sweeps = sweep + 1;
        if (std::isfinite(last_volume) &&
            std::abs(last_volume - volume) <= 1e-6 * last_volume) {
            break;
        }
        last_volume = volume;
    }

    // Vertices back out of the inverse parameterization, then up to L-space.
    const Matrix b = h.inverse();
    Matrix final_vertices(dim, r);
    final_vertices.col(r - 1) = b * g;
    for (int j = 0; j < dim; ++j) {
        final_vertices.col(j) = b * (Vector::Unit(dim, j) + g);
    }
    Matrix endmembers(pixels.cols(), r);
    for (int j = 0; j < r; ++j) {
        endmembers.col(j) = reduced.centroid + reduced.basis * final_vertices.col(j);
    }
    result.endmembers = EndmemberMatrix(std::move(endmembers));
    return result;
}

IterativeResult iterative_endmember_estimation(const SceneImage& image, int endmember_count,
                                               const IterativeParams& params,
                                               const GpSettings& gp) {
    if (!(params.relax_factor > 0.0 && params.relax_factor <= 1.0)) {
        throw std::invalid_argument("relax factor must lie in (0, 1]");
    }
    if (params.relax_increment < 0.0) {
        throw std::invalid_argument("relax increment must be nonnegative");
    }
    const int r = endmember_count;
    const int min_survivors = 5 * r;

    Matrix surviving = image.pixels;
    IterativeTrace trace;

    EndmemberMatrix estimate = mves(surviving, r).endmembers;

    SceneImage view;
    view.pixels = surviving;
    const CalibrationResult calibration =
        calibrate_threshold(estimate, view, params.pfa, gp);
    trace.tau = calibration.tau;

    double relax = params.relax_factor;
    double tau_r = relax * calibration.tau;
    double t_max = 1.0, t_min = 0.0;
    int iteration = 1;
    while (t_max - t_min > params.epsilon && iteration < params.max_iterations) {
        view.pixels = surviving;
        const Vector t = image_statistics(estimate, view, gp);

        std::vector<int> keep;
        keep.reserve(static_cast<std::size_t>(t.size()));
        for (int i = 0; i < t.size(); ++i) {
            if (t(i) > tau_r) keep.push_back(i);
        }
        IterationRecord record;
        record.iteration = iteration;
        record.tau_r = tau_r;
        record.discarded = static_cast<int>(t.size()) - static_cast<int>(keep.size());
        record.surviving_pixels = static_cast<int>(keep.size());
        record.endmembers = estimate.entries;

        if (static_cast<int>(keep.size()) < min_survivors) {
            record.t_min = t.minCoeff();
            record.t_max = t.maxCoeff();
            trace.records.push_back(std::move(record));
            throw EarlyStopError("pixel removal left fewer than 5R survivors", trace);
        }
        Matrix next(static_cast<Eigen::Index>(keep.size()), surviving.cols());
        double mn = std::numeric_limits<double>::infinity();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < keep.size(); ++k) {
            next.row(static_cast<Eigen::Index>(k)) = surviving.row(keep[k]);
            mn = std::min(mn, t(keep[k]));
            mx = std::max(mx, t(keep[k]));
        }
        surviving = std::move(next);
        // T range over the survivors drives the stopping rule.
        t_min = mn;
        t_max = mx;
        record.t_min = mn;
        record.t_max = mx;
        trace.records.push_back(std::move(record));

        relax += params.relax_increment;
        tau_r = relax * calibration.tau;
        ++iteration;
        estimate = mves(surviving, r).endmembers;
    }

    IterativeResult result;
    result.endmembers = std::move(estimate);
    result.trace = std::move(trace);
    return result;
}

double spectral_angle(const Vector& a, const Vector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("zero spectrum has no angle");
    return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

std::vector<int> match_columns(const Matrix& estimate, const Matrix& reference) {
    const int r = static_cast<int>(reference.cols());
    if (estimate.cols() != r || estimate.rows() != reference.rows()) {
        throw std::invalid_argument("column matching needs same-shape matrices");
    }
    Matrix angles(r, r);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
            angles(i, j) = spectral_angle(estimate.col(i), reference.col(j));
        }
    }
    std::vector<int> perm(static_cast<std::size_t>(r));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_total = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int j = 0; j < r; ++j) total += angles(perm[static_cast<std::size_t>(j)], j);
        if (total < best_total) {
            best_total = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double mean_spectral_angle(const Matrix& estimate, const Matrix& reference) {
    const auto assignment = match_columns(estimate, reference);
    double total = 0.0;
    for (int j = 0; j < reference.cols(); ++j) {
        total += spectral_angle(estimate.col(assignment[static_cast<std::size_t>(j)]),
                                reference.col(j));
    }
    return total / static_cast<double>(reference.cols());
}

void write_iterative_trace_csv(const IterativeTrace& trace,
                               const std::optional<Matrix>& reference,
                               const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "iteration,surviving_pixels,tau_r";
    if (reference) out << ",sam_to_reference";
    out << '\n';
    for (const auto& record : trace.records) {
        out << record.iteration << ',' << record.surviving_pixels << ','
            << format_double(record.tau_r);
        if (reference) {
            out << ',' << format_double(mean_spectral_angle(record.endmembers, *reference));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_mves_trace_csv(const MvesResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "sweep,volume\n";
    for (std::size_t i = 0; i < result.sweep_volumes.size(); ++i) {
        out << (i + 1) << ',' << format_double(result.sweep_volumes[i]) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace unmix
