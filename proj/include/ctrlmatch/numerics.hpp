#pragma once

#include "ctrlmatch/types.hpp"

namespace ctrlmatch {

/// Stability margin used by all |lambda| < 1 / Re(lambda) < 0 tests.
inline constexpr double kStabilityMargin = 1e-9;

/// Solves Qbar + A_K' P A_K - P = 0 for P.
/// Requires spectral radius of A_K below 1 - kStabilityMargin.
Matrix solve_lyapunov_discrete(const Matrix& A_K, const Matrix& Qbar);

/// Solves Qbar + A_K' P + P A_K = 0 for P.
/// Requires all eigenvalues of A_K strictly in the left half plane.
Matrix solve_lyapunov_continuous(const Matrix& A_K, const Matrix& Qbar);

struct RiccatiSolution {
    Matrix P;
    Gain K;
};

/// Stabilizing solution of the DARE
///   P = A'PA + Q - (S' + A'PB) K,   (R + B'PB) K = S + B'PA.
/// Value iteration from P0 = I followed by one Newton-Kleinman refinement;
/// the returned closed loop A - BK is always Schur.
RiccatiSolution solve_dare(const LinearDynamics& sys, const StageCost& cost);

/// Stabilizing solution of the CARE
///   0 = A'P + PA + Q - (S' + PB) K,   R K = S + B'P.
RiccatiSolution solve_care(const LinearDynamics& sys, const StageCost& cost);

/// Zero-order-hold discretization via the augmented-matrix exponential.
LinearDynamics discretize_zoh(const LinearDynamics& sys, double ts);

struct StabilityReport {
    double value = 0.0;  // spectral radius (discrete) or abscissa (continuous)
    bool is_stable = false;
};

StabilityReport stability_report(const Matrix& A, TimeDomain domain);

/// PBH rank test over all non-stable modes.
bool is_stabilizable(const LinearDynamics& sys);

// Small dense helpers shared across modules.
Matrix symmetrized(const Matrix& M);
double spectral_radius(const Matrix& A);
double spectral_abscissa(const Matrix& A);
double min_eig_sym(const Matrix& M);
double max_eig_sym(const Matrix& M);
double cond_sym(const Matrix& M);
bool is_positive_definite(const Matrix& M, double tol = 0.0);

namespace detail {
// Stein / Lyapunov solves without the stability-margin gate (closed loops
// built internally are already verified stable).
Matrix solve_stein(const Matrix& A, const Matrix& Q);
Matrix solve_lyap_ct(const Matrix& A, const Matrix& Q);
}  // namespace detail

}  // namespace ctrlmatch
