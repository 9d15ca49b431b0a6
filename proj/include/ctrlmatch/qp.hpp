#pragma once

#include "ctrlmatch/types.hpp"

#include <string>
#include <vector>

namespace ctrlmatch {

/// minimize 1/2 z'Gz + a'z  subject to  E z = t,  M z <= d.
struct QuadProgram {
    Matrix G;
    Vector a;
    Matrix E;
    Vector t;
    Matrix M;
    Vector d;

    int dim() const { return static_cast<int>(G.rows()); }
    void validate() const;

    /// plain-text rendering (Hessian, gradient, row blocks) for external
    /// cross-checking
    std::string dump() const;
};

struct QpSolution {
    Vector z;
    Vector multipliers;  // one per inequality row, zero when inactive
    double objective = 0.0;
    std::vector<int> active_rows;
};

/// Primal active-set method; deterministic (blocking-constraint ties broken
/// by lowest row index). Throws Infeasible / NotPositiveDefinite /
/// NumericalFailure.
QpSolution solve_qp(const QuadProgram& qp, double tol = 1e-9);

}  // namespace ctrlmatch
