#pragma once

#include "ctrlmatch/invariant.hpp"
#include "ctrlmatch/matching.hpp"
#include "ctrlmatch/types.hpp"

#include <vector>

namespace ctrlmatch {

/// Joint noise covariance [[Rv, Svw],[Svw', Qw]] of (v, w).
struct NoiseModel {
    Matrix Qw;   // nx x nx process noise covariance
    Matrix Rv;   // ny x ny measurement noise covariance
    Matrix Svw;  // ny x nx cross covariance

    Matrix assemble_h() const;
    void validate() const;  // the joint covariance must be PD
};

struct ObserverGain {
    Matrix L;  // nx x ny, estimate update x+ = A x - L (C x - y)
};

struct EstimatorState {
    Vector x_hat;
    Matrix P;  // prediction-error covariance / arrival-cost weight
};

struct KalmanUpdate {
    ObserverGain L;
    Matrix P_plus;
};

/// One covariance/gain update of the Kalman filter,
/// L = (A P C' + Svw')(C P C' + Rv)^{-1}.
KalmanUpdate kalman_update(const Matrix& A, const Matrix& C, const NoiseModel& noise,
                           const Matrix& P);

/// Steady-state filter: iterates kalman_update from P0 = I to its fixed point.
KalmanUpdate kalman_steady_state(const Matrix& A, const Matrix& C, const NoiseModel& noise);

struct OneStepEstimate {
    Vector x_minus;  // filtered estimate at the measurement time
    Vector x_plus;   // one-step-ahead prediction
};

/// The one-step estimation problem: least squares in (v, w) weighted by the
/// inverse joint covariance plus the arrival cost. Coincides with the Kalman
/// update.
OneStepEstimate one_step_mhe(const Matrix& A, const Matrix& C, const NoiseModel& noise,
                             const EstimatorState& state, const Vector& y);

struct ObserverMatch {
    NoiseModel noise;  // covariance surrogate whose steady-state gain is L_hat
    Matrix P;
    ObserverGain L_verified;
};

/// Controller matching on the dual pair (A', C') with K_hat = L_hat'.
ObserverMatch match_observer(const Matrix& A, const Matrix& C, const ObserverGain& L_hat,
                             const MatchOptions& opts = {},
                             MatchFormulation formulation = MatchFormulation::direct);

struct HinfFixedPoint {
    ObserverGain L;
    Matrix Sigma;
    Matrix P;
    bool feasible = false;
};

/// Fixed point of  Sigma = (I - P G'G + P C'V^{-1}C)^{-1} P,
///                 L = A Sigma C' V^{-1},  P = A Sigma A' + B W B'
/// for a fixed shaping matrix G.
HinfFixedPoint hinf_fixed_point(const Matrix& A, const Matrix& B, const Matrix& C,
                                const Matrix& W, const Matrix& V, const Matrix& G);

struct HinfDesign {
    ObserverGain L;
    Matrix Sigma;
    Matrix P;
    double gamma_star = 0.0;
};

/// Maximizes gamma (bisection to 1e-4) such that the fixed point with
/// G = gamma * G_shape converges with Sigma > 0 and a Schur error dynamic.
HinfDesign hinf_design(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& W,
                       const Matrix& V, const Matrix& G_shape);

struct MheWindowSolution {
    Matrix states;  // nx x (M+1), x_0 .. x_M
    Matrix noise;   // nx x M, w_k = x_{k+1} - A x_k
};

/// Horizon MHE over a window of measurements with optional polyhedral
/// constraints on the process noise w; arrival cost (x0 - x_hat)'P^{-1}(x0 - x_hat).
MheWindowSolution mhe_horizon_solve(const Matrix& A, const Matrix& C, const NoiseModel& noise,
                                    const EstimatorState& arrival,
                                    const std::vector<Vector>& measurements,
                                    const Polyhedron& w_constraints);

}  // namespace ctrlmatch
