#pragma once

#include "ctrlmatch/types.hpp"

namespace ctrlmatch {

/// Halfspace intersection { x | F x <= g }.
struct Polyhedron {
    Matrix F;  // m x n
    Vector g;  // m

    int dim() const { return static_cast<int>(F.cols()); }
    int rows() const { return static_cast<int>(F.rows()); }

    static Polyhedron unbounded(int dim) { return {Matrix::Zero(0, dim), Vector::Zero(0)}; }

    void validate() const;
    /// scales every row of F (and g) to unit infinity norm
    Polyhedron normalized() const;
};

/// Rows (C - D K) x <= -e of the closed-loop constraint set.
Polyhedron closed_loop_constraints(const Matrix& C, const Matrix& D, const Vector& e,
                                   const Gain& k_hat);

/// Maximal positive invariant set of x+ = A_K x inside `constraints`,
/// computed by the pre-set fixed-point iteration with LP-based redundancy
/// certificates.
Polyhedron compute_mpi(const Matrix& A_K, const Polyhedron& constraints, int max_iter = 500);

bool contains(const Polyhedron& poly, const Vector& x, double tol = 1e-9);

/// Drops every row implied by the others (to 1e-9); certifies nonemptiness
/// with one LP first.
Polyhedron remove_redundant(const Polyhedron& poly);

}  // namespace ctrlmatch
