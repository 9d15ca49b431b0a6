#pragma once

#include "ctrlmatch/sdp.hpp"
#include "ctrlmatch/types.hpp"

namespace ctrlmatch {

enum class MatchFormulation { direct, indirect, gamma_opt, constructive };

/// Policy for the cross term S of the matched cost.
enum class SPolicy { free_s, zero_s, l1_min };

/// Conditioning objective: bound kappa(H) alone, or kappa(blkdiag(H, P)).
enum class CondObjective { min_cond_h, min_cond_blkdiag_h_p };

const char* to_string(MatchFormulation f);

struct MatchOptions {
    SPolicy s_policy = SPolicy::free_s;
    CondObjective objective = CondObjective::min_cond_blkdiag_h_p;
    double tol = 1e-9;
};

struct MatchResult {
    StageCost cost;  // Q, R, S with terminal P filled in
    Gain k_verified;
    double beta = 0.0;
    double kappa_h = 0.0;
    double kappa_hp = 0.0;
    std::optional<Matrix> gamma_used;
    MatchFormulation formulation = MatchFormulation::direct;
    bool rbar_inflated = false;  // constructive path only

    Matrix h() const { return cost.assemble_h(); }
};

/// SDP over (H, P, beta) with the DARE equations as affine equality
/// constraints for the fixed target gain.
MatchResult match_direct(const LinearDynamics& sys, const Gain& k_hat,
                         const MatchOptions& opts = {});

/// SDP over (P, alpha, beta) for a user-supplied deviation weight Gamma;
/// H = alpha*H_Gamma + H_P by construction.
MatchResult match_indirect(const LinearDynamics& sys, const Gain& k_hat, const Matrix& gamma,
                           const MatchOptions& opts = {});

/// SDP over (Gamma, P, beta); equivalent to the direct formulation but
/// without equality constraints.
MatchResult match_gamma_opt(const LinearDynamics& sys, const Gain& k_hat,
                            const MatchOptions& opts = {});

/// Lyapunov-based constructive match. Works for discrete and continuous
/// systems; rbar_seed is inflated to S Qbar^-1 S' + rbar_seed when needed.
MatchResult match_constructive(const LinearDynamics& sys, const Gain& k_hat, const Matrix& qbar,
                               const Matrix& rbar_seed);

/// Gain-invariant cost transformation (P1/P2 shift plus positive scaling).
StageCost apply_cost_transformation(const StageCost& cost, const Matrix& p1, const Matrix& p2,
                                    double sigma, const LinearDynamics& sys);

struct MatchVerification {
    double gain_error = 0.0;
    bool stabilizing = false;
};

/// Solves the Riccati equation for the given cost and reports the deviation
/// of its gain from k_hat.
MatchVerification verify_match(const LinearDynamics& sys, const StageCost& cost,
                               const Gain& k_hat);

}  // namespace ctrlmatch
