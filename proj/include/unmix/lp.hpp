#pragma once

#include "unmix/types.hpp"

#include <vector>

namespace unmix {

enum class LpSense { Minimize, Maximize };
enum class LpRow { LessEqual, Equal, GreaterEqual };
enum class LpStatus { Optimal, Infeasible, Unbounded };

/// Dense linear program
///     optimize c'x  subject to  A x (<=,=,>=) b,  lower <= x <= upper.
/// Empty bound vectors default to x >= 0 with no upper bound; -inf/+inf
/// entries mark free sides.
struct LpProblem {
    LpSense sense = LpSense::Maximize;
    Vector objective;               // n
    Matrix constraints;             // m x n
    Vector rhs;                     // m
    std::vector<LpRow> row_types;   // m
    Vector lower;                   // n or empty (defaults to 0)
    Vector upper;                   // n or empty (defaults to +inf)
};

struct LpSolution {
    LpStatus status = LpStatus::Optimal;
    Vector x;
    double objective = 0.0;
    /// Lagrange multipliers per original row: d(objective)/d(rhs_i) in the
    /// problem's own sense. Valid only at Optimal.
    Vector row_duals;
    int iterations = 0;
};

/// Two-phase dense simplex with Bland's anti-cycling pivot rule.
LpSolution solve_lp(const LpProblem& problem);

}  // namespace unmix
