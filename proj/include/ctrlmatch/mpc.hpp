#pragma once

#include "ctrlmatch/invariant.hpp"
#include "ctrlmatch/qp.hpp"
#include "ctrlmatch/types.hpp"

#include <functional>

namespace ctrlmatch {

/// Path constraints C x + D u + e <= 0, enforced at every stage.
struct ConstraintSet {
    Matrix C;
    Matrix D;
    Vector e;

    int rows() const { return static_cast<int>(C.rows()); }
    static ConstraintSet none(int nx, int nu) {
        return {Matrix::Zero(0, nx), Matrix::Zero(0, nu), Vector::Zero(0)};
    }
    void validate(int nx, int nu) const;
};

enum class QpForm { sparse, condensed };

struct MpcProblem {
    LinearDynamics sys;       // discrete time
    StageCost cost;           // H blocks plus terminal P
    ConstraintSet constraints;
    Polyhedron terminal_set;  // zero rows = unconstrained terminal state
    int horizon = 1;
    QpForm form = QpForm::sparse;
    Vector drift;             // affine dynamics term: x+ = Ax + Bu + drift
};

MpcProblem build_mpc(const LinearDynamics& sys, const StageCost& cost,
                     const ConstraintSet& constraints, const Polyhedron& terminal_set,
                     int horizon, QpForm form = QpForm::sparse);

/// Assembles the finite-horizon QP for the given initial state, in the
/// problem's sparse or condensed form.
QuadProgram assemble_qp(const MpcProblem& problem, const Vector& x0);

struct MpcStep {
    Vector u0;
    Matrix x_traj;              // n x (N+1)
    Matrix u_traj;              // m x N
    Vector stage_multipliers;   // one per constraint row and stage
    Vector terminal_multipliers;
    bool constrained = false;
    double objective = 0.0;
};

MpcStep mpc_step(const MpcProblem& problem, const Vector& x0_hat);

struct DeviationCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
};

/// Evaluates both sides of the prediction-cost identity
///   sum w'Hw + xN'P xN = x0'P x0 + sum (u + K x)' (R + B'PB) (u + K x)
/// on a dynamically feasible trajectory.
DeviationCheck deviation_identity_check(const StageCost& cost, const Gain& k_hat,
                                        const LinearDynamics& sys, const Matrix& x_traj,
                                        const Matrix& u_traj);

struct NonlinearDynamics {
    std::function<Vector(const Vector&, const Vector&)> f;
    // optional analytic Jacobians; forward differences otherwise
    std::function<Matrix(const Vector&, const Vector&)> fx;
    std::function<Matrix(const Vector&, const Vector&)> fu;
};

struct NmpcProblem {
    NonlinearDynamics dynamics;
    StageCost cost;           // quadratic cost about (x_ref, u_ref), P included
    ConstraintSet constraints;
    Polyhedron terminal_set;  // zero rows = unconstrained
    int horizon = 1;
    Vector x_ref;
    Vector u_ref;
};

struct NmpcStep {
    Vector u0;
    bool converged = false;
    int iterations = 0;
};

/// Gauss-Newton SQP on the nonlinear horizon problem, full steps, exact on
/// linear dynamics after one iteration.
NmpcStep nmpc_sqp_step(const NmpcProblem& problem, const Vector& x0_hat, int sqp_iters = 50);

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& fn,
                                  const Vector& at);

}  // namespace ctrlmatch
