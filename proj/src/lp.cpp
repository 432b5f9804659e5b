#include "unmix/lp.hpp"

#include <cmath>
#include <limits>

namespace unmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotEps = 1e-9;
constexpr double kCostEps = 1e-9;

// Mapping from a standard-form column back to an original variable.
struct ColumnOrigin {
    int variable = -1;   // original variable index, -1 for slack/artificial
    double sign = 1.0;   // +1 for x+ part, -1 for x- part or mirrored vars
};

struct Standardizer {
    // min cost' z, rows' z = rhs, z >= 0, rhs >= 0
    Matrix rows;
    Vector rhs;
    Vector cost;
    double objective_offset = 0.0;
    double objective_sign = 1.0;  // multiply reported objective by this
    std::vector<ColumnOrigin> origins;
    std::vector<double> row_signs;  // per original row, +-1 after rhs flip
    Vector shifts;                  // per original variable
    int structural_columns = 0;
};

Standardizer standardize(const LpProblem& p) {
    const int n = static_cast<int>(p.objective.size());
    const int m = static_cast<int>(p.rhs.size());
    if (p.constraints.rows() != m || p.constraints.cols() != n ||
        static_cast<int>(p.row_types.size()) != m) {
        throw std::invalid_argument("LP dimensions are inconsistent");
    }
    Vector lower = p.lower.size() ? p.lower : Vector::Zero(n);
    Vector upper = p.upper.size() ? p.upper : Vector::Constant(n, kInf);
    if (lower.size() != n || upper.size() != n) {
        throw std::invalid_argument("LP bound lengths are inconsistent");
    }
    if (!p.constraints.allFinite() || !p.rhs.allFinite() || !p.objective.allFinite()) {
        throw std::invalid_argument("LP coefficients must be finite");
    }

    Standardizer s;
    s.objective_sign = p.sense == LpSense::Maximize ? -1.0 : 1.0;
    const Vector c = s.objective_sign * p.objective;  // minimize from here on

    // Column plan per variable: shift finite lower bounds to zero, mirror
    // variables with only an upper bound, split doubly-free variables.
    struct Plan {
        int first_col;
        int n_cols;      // 1 or 2
        double sign;     // +1 shifted, -1 mirrored
        double shift;    // x = sign * z + shift
        bool upper_row;  // needs an extra z <= upper - lower row
        double upper_gap;
    };
    std::vector<Plan> plans(n);
    int next_col = 0;
    int extra_rows = 0;
    s.shifts = Vector::Zero(n);
    for (int j = 0; j < n; ++j) {
        const double lo = lower(j);
        const double hi = upper(j);
        if (lo > hi) throw std::invalid_argument("LP has crossing bounds");
        Plan plan{};
        plan.first_col = next_col;
        if (std::isfinite(lo)) {
            plan.n_cols = 1;
            plan.sign = 1.0;
            plan.shift = lo;
            plan.upper_row = std::isfinite(hi);
            plan.upper_gap = hi - lo;
        } else if (std::isfinite(hi)) {
            plan.n_cols = 1;
            plan.sign = -1.0;
            plan.shift = hi;
            plan.upper_row = false;
        } else {
            plan.n_cols = 2;  // z+ - z-
            plan.sign = 1.0;
            plan.shift = 0.0;
            plan.upper_row = false;
        }
        if (plan.upper_row) ++extra_rows;
        next_col += plan.n_cols;
        plans[j] = plan;
    }
    s.structural_columns = next_col;

    const int total_rows = m + extra_rows;
    Matrix rows = Matrix::Zero(total_rows, next_col);
    Vector rhs = Vector::Zero(total_rows);
    Vector cost = Vector::Zero(next_col);
    std::vector<LpRow> types(p.row_types);
    types.resize(total_rows, LpRow::LessEqual);
    s.origins.resize(next_col);

    for (int j = 0; j < n; ++j) {
        const Plan& plan = plans[j];
        s.shifts(j) = plan.shift;
        for (int i = 0; i < m; ++i) {
            const double a = p.constraints(i, j);
            rows(i, plan.first_col) += a * plan.sign;
            if (plan.n_cols == 2) rows(i, plan.first_col + 1) -= a;
            rhs(i) -= 0.0;  // handled below via shift accumulation
        }
        cost(plan.first_col) += c(j) * plan.sign;
        if (plan.n_cols == 2) cost(plan.first_col + 1) -= c(j);
        s.origins[plan.first_col] = {j, plan.sign};
        if (plan.n_cols == 2) s.origins[plan.first_col + 1] = {j, -1.0};
        s.objective_offset += c(j) * plan.shift;
    }
    // rhs adjustment from shifts: b - A * shift
    rhs.head(m) = p.rhs - p.constraints * s.shifts;
    int extra = m;
    for (int j = 0; j < n; ++j) {
        const Plan& plan = plans[j];
        if (plan.upper_row) {
            rows(extra, plan.first_col) = 1.0;
            rhs(extra) = plan.upper_gap;
            types[extra] = LpRow::LessEqual;
            ++extra;
        }
    }

    // Slack / surplus columns, then flip rows so rhs >= 0.
    int n_slacks = 0;
    for (const LpRow t : types) {
        if (t != LpRow::Equal) ++n_slacks;
    }
    Matrix full = Matrix::Zero(total_rows, next_col + n_slacks);
    full.leftCols(next_col) = rows;
    int slack_col = next_col;
    for (int i = 0; i < total_rows; ++i) {
        if (types[i] == LpRow::LessEqual) {
            full(i, slack_col++) = 1.0;
        } else if (types[i] == LpRow::GreaterEqual) {
            full(i, slack_col++) = -1.0;
        }
    }
    s.origins.resize(next_col + n_slacks);

    s.row_signs.assign(total_rows, 1.0);
    for (int i = 0; i < total_rows; ++i) {
        if (rhs(i) < 0.0) {
            full.row(i) *= -1.0;
            rhs(i) *= -1.0;
            s.row_signs[i] = -1.0;
        }
    }
    s.rows = std::move(full);
    s.rhs = std::move(rhs);
    Vector cost_full = Vector::Zero(s.rows.cols());
    cost_full.head(next_col) = cost;
    s.cost = std::move(cost_full);
    return s;
}

class Tableau {
  public:
    Tableau(const Matrix& rows, const Vector& rhs, int artificial_begin)
        : m_(static_cast<int>(rows.rows())),
          n_(static_cast<int>(rows.cols())),
          artificial_begin_(artificial_begin),
          body_(rows),
          rhs_(rhs),
          basis_(m_, -1) {}

    int rows() const { return m_; }
    int cols() const { return n_; }
    const std::vector<int>& basis() const { return basis_; }
    double rhs(int i) const { return rhs_(i); }
    double entry(int i, int j) const { return body_(i, j); }
    void set_basis(int row, int col) { basis_[row] = col; }

    void pivot(int row, int col) {
        const double p = body_(row, col);
        body_.row(row) /= p;
        rhs_(row) /= p;
        for (int i = 0; i < m_; ++i) {
            if (i == row) continue;
            const double factor = body_(i, col);
            if (factor != 0.0) {
                body_.row(i) -= factor * body_.row(row);
                rhs_(i) -= factor * rhs_(row);
            }
        }
        basis_[row] = col;
    }

    /// Bland's rule: entering = lowest-index column with negative reduced
    /// cost; leaving = ratio-test row, ties broken by lowest basic index.
    /// Runs until optimal (returns true) or unbounded (false).
    bool run(Vector& reduced, double& objective, bool allow_artificials, int& iterations) {
        const int limit = 20000 + 50 * (m_ + n_);
        while (true) {
            int entering = -1;
            const int scan_end = allow_artificials ? n_ : artificial_begin_;
            for (int j = 0; j < scan_end; ++j) {
                if (reduced(j) < -kCostEps) {
                    entering = j;
                    break;
                }
            }
            if (entering < 0) return true;
            int leaving = -1;
            double best_ratio = kInf;
            for (int i = 0; i < m_; ++i) {
                const double a = body_(i, entering);
                if (a > kPivotEps) {
                    const double ratio = rhs_(i) / a;
                    if (ratio < best_ratio - 1e-12 ||
                        (ratio < best_ratio + 1e-12 &&
                         (leaving < 0 || basis_[i] < basis_[leaving]))) {
                        best_ratio = ratio;
                        leaving = i;
                    }
                }
            }
            if (leaving < 0) return false;  // unbounded direction
            const double mult = reduced(entering);
            pivot(leaving, entering);
            reduced -= mult * body_.row(leaving).transpose();
            reduced(entering) = 0.0;
            objective += mult * rhs_(leaving);
            if (++iterations > limit) {
                throw NumericalError("simplex iteration limit exceeded");
            }
        }
    }

    Vector basic_solution(int n_columns) const {
        Vector x = Vector::Zero(n_columns);
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] >= 0 && basis_[i] < n_columns) x(basis_[i]) = rhs_(i);
        }
        return x;
    }

    /// Pivots basic artificials onto structural columns where possible;
    /// returns rows that stay artificial (redundant constraints).
    std::vector<int> purge_artificials() {
        std::vector<int> stuck;
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < artificial_begin_) continue;
            int col = -1;
            for (int j = 0; j < artificial_begin_; ++j) {
                if (std::abs(body_(i, j)) > kPivotEps) {
                    col = j;
                    break;
                }
            }
            if (col >= 0) {
                pivot(i, col);
            } else {
                stuck.push_back(i);
            }
        }
        return stuck;
    }

  private:
    int m_, n_, artificial_begin_;
    Matrix body_;
    Vector rhs_;
    std::vector<int> basis_;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem) {
    Standardizer s = standardize(problem);
    const int m = static_cast<int>(s.rows.rows());
    const int n_struct = static_cast<int>(s.rows.cols());

    // Phase 1 tableau with one artificial per row.
    Matrix body(m, n_struct + m);
    body.leftCols(n_struct) = s.rows;
    body.rightCols(m) = Matrix::Identity(m, m);
    Tableau tableau(body, s.rhs, n_struct);
    for (int i = 0; i < m; ++i) tableau.set_basis(i, n_struct + i);

    LpSolution solution;
    solution.iterations = 0;

    // Phase 1: minimize the sum of artificials.
    Vector reduced = Vector::Zero(n_struct + m);
    double phase1 = 0.0;
    for (int i = 0; i < m; ++i) {
        reduced.head(n_struct) -= body.row(i).head(n_struct).transpose();
        phase1 += s.rhs(i);
    }
    if (!tableau.run(reduced, phase1, true, solution.iterations)) {
        throw NumericalError("phase-1 simplex reported an unbounded auxiliary problem");
    }
    if (phase1 > 1e-7) {
        solution.status = LpStatus::Infeasible;
        return solution;
    }
    const std::vector<int> redundant = tableau.purge_artificials();

    // Phase 2 over the original cost.
    Vector reduced2 = Vector::Zero(n_struct + m);
    reduced2.head(n_struct) = s.cost;
    double objective = 0.0;
    for (int i = 0; i < m; ++i) {
        const int b = tableau.basis()[i];
        if (b < n_struct && std::abs(reduced2(b)) > 0.0) {
            const double cb = reduced2(b);
            for (int j = 0; j < n_struct + m; ++j) reduced2(j) -= cb * tableau.entry(i, j);
            objective += cb * tableau.rhs(i);
            reduced2(b) = 0.0;
        }
    }
    if (!tableau.run(reduced2, objective, false, solution.iterations)) {
        solution.status = LpStatus::Unbounded;
        return solution;
    }

    // Recover x in original variables.
    const Vector z = tableau.basic_solution(n_struct);
    Vector x = s.shifts;
    for (int j = 0; j < n_struct; ++j) {
        const ColumnOrigin& origin = s.origins[j];
        if (origin.variable >= 0) x(origin.variable) += origin.sign * z(j);
    }
    solution.x = x;
    solution.objective = s.objective_sign * (objective + s.objective_offset);

    // Row duals from the final basis: solve B' lambda = c_B over the
    // standard-form system, then undo row flips and the sense change.
    Matrix basis_cols(m, m);
    Vector cost_basis(m);
    for (int i = 0; i < m; ++i) {
        const int b = tableau.basis()[i];
        if (b < n_struct) {
            basis_cols.col(i) = s.rows.col(b);
            cost_basis(i) = s.cost(b);
        } else {
            basis_cols.col(i) = Vector::Unit(m, b - n_struct);
            cost_basis(i) = 0.0;
        }
    }
    (void)redundant;
    Vector lambda = basis_cols.transpose().fullPivLu().solve(cost_basis);
    const int original_rows = static_cast<int>(problem.rhs.size());
    solution.row_duals.resize(original_rows);
    for (int i = 0; i < original_rows; ++i) {
        solution.row_duals(i) = s.objective_sign * s.row_signs[i] * lambda(i);
    }
    solution.status = LpStatus::Optimal;
    return solution;
}

}  // namespace unmix
