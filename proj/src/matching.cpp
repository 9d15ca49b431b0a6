#include "ctrlmatch/matching.hpp"

#include "ctrlmatch/numerics.hpp"

#include <cmath>

namespace ctrlmatch {

const char* to_string(MatchFormulation f) {
    switch (f) {
        case MatchFormulation::direct: return "direct";
        case MatchFormulation::indirect: return "indirect";
        case MatchFormulation::gamma_opt: return "gamma_opt";
        case MatchFormulation::constructive: return "constructive";
    }
    return "unknown";
}

namespace {

void check_matchable(const LinearDynamics& sys, const Gain& k_hat) {
    sys.validate();
    if (k_hat.K.rows() != sys.nu() || k_hat.K.cols() != sys.nx())
        throw Error(ErrorCode::DimensionMismatch, "gain dimensions do not match the system");
    if (sys.domain == TimeDomain::discrete) {
        if (spectral_radius(sys.A - sys.B * k_hat.K) >= 1.0 - kStabilityMargin)
            throw Error(ErrorCode::DestabilizingGain,
                        "A - B K_hat is not Schur; the matched LQR gain would differ from K_hat");
    } else {
        if (spectral_abscissa(sys.A - sys.B * k_hat.K) >= -kStabilityMargin)
            throw Error(ErrorCode::DestabilizingGain,
                        "A - B K_hat is not Hurwitz; the matched LQR gain would differ from K_hat");
    }
    if (!is_stabilizable(sys))
        throw Error(ErrorCode::NotStabilizable, "(A,B) fails the PBH stabilizability test");
}

double gain_error_inf(const Matrix& K, const Matrix& K_hat) {
    return (K - K_hat).lpNorm<Eigen::Infinity>();
}

// Shared post-processing for all formulations: verify the gain round trip,
// compute conditioning figures, assemble the result.
MatchResult finalize(const LinearDynamics& sys, const Gain& k_hat, StageCost cost, Matrix P,
                     double beta, MatchFormulation form) {
    cost.Q = symmetrized(cost.Q);
    cost.R = symmetrized(cost.R);
    P = symmetrized(P);
    cost.P = P;

    RiccatiSolution sol = sys.domain == TimeDomain::discrete ? solve_dare(sys, cost)
                                                             : solve_care(sys, cost);
    const double tol_gain = 1e-6 * (1.0 + k_hat.K.lpNorm<Eigen::Infinity>());
    if (gain_error_inf(sol.K.K, k_hat.K) > tol_gain)
        throw Error(ErrorCode::NumericalFailure,
                    "matched cost failed the gain round-trip check");

    MatchResult result;
    result.cost = std::move(cost);
    result.k_verified = sol.K;
    result.beta = beta;
    result.kappa_h = cond_sym(result.cost.assemble_h());
    const double hi = std::max(max_eig_sym(result.cost.assemble_h()), max_eig_sym(P));
    const double lo = std::min(min_eig_sym(result.cost.assemble_h()), min_eig_sym(P));
    result.kappa_hp = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    result.formulation = form;
    return result;
}

struct SdpPieces {
    LmiProblem prob;
    AffineMatrix H = AffineMatrix::zero(1, 1);
    AffineMatrix P = AffineMatrix::zero(1, 1);
    AffineMatrix S = AffineMatrix::zero(1, 1);  // cross-term block of H
    AffineMatrix beta = AffineMatrix::zero(1, 1);
};

void add_conditioning_bounds(SdpPieces& sp, int n, int nu, CondObjective objective) {
    const int nh = n + nu;
    sp.prob.minimize(sp.beta);
    sp.prob.add_psd(sp.beta * Matrix::Identity(nh, nh) - sp.H);
    sp.prob.add_psd(sp.H - AffineMatrix(Matrix::Identity(nh, nh)));
    if (objective == CondObjective::min_cond_blkdiag_h_p) {
        sp.prob.add_psd(sp.beta * Matrix::Identity(n, n) - sp.P);
        sp.prob.add_psd(sp.P - AffineMatrix(Matrix::Identity(n, n)));
    }
}

void apply_s_policy_zero(SdpPieces& sp) { sp.prob.add_zero(sp.S); }

// Lexicographic second stage: re-minimize ||S||_1 subject to
// beta <= beta_star * (1 + 1e-6).
void add_l1_stage(SdpPieces& sp, double beta_star) {
    const int rows = sp.S.rows();
    const int cols = sp.S.cols();
    AffineMatrix obj = AffineMatrix::zero(1, 1);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            AffineMatrix t = sp.prob.scalar_variable("t_" + std::to_string(i) + "_" +
                                                     std::to_string(j));
            const AffineMatrix entry = sp.S.block(i, j, 1, 1);
            sp.prob.add_nonneg(t - entry);
            sp.prob.add_nonneg(t + entry);
            obj += t;
        }
    sp.prob.add_nonneg(AffineMatrix(Matrix::Constant(1, 1, beta_star * (1.0 + 1e-6))) - sp.beta);
    sp.prob.minimize(obj);
}

LmiSolution run_sdp(const LmiProblem& prob, const MatchOptions& opts, SPolicy policy) {
    LmiSolution sol = solve_lmi(prob, opts.tol);
    if (sol.status == SolveStatus::numerical_failure && opts.tol < 1e-7) {
        // badly conditioned optima (beta ~ 1e4) cannot always be certified at
        // 1e-9 in doubles; the gain round trip below remains the hard gate
        sol = solve_lmi(prob, 1e-7);
    }
    if (sol.status == SolveStatus::infeasible) {
        if (policy == SPolicy::zero_s)
            throw Error(ErrorCode::SPolicyInfeasible,
                        "no positive-definite cost with S = 0 matches this gain");
        throw Error(ErrorCode::SdpInfeasible, "matching SDP reported infeasibility");
    }
    if (sol.status != SolveStatus::optimal)
        throw Error(ErrorCode::NumericalFailure, "matching SDP did not reach optimality");
    return sol;
}

}  // namespace

MatchResult match_direct(const LinearDynamics& sys, const Gain& k_hat, const MatchOptions& opts) {
    check_matchable(sys, k_hat);
    if (sys.domain != TimeDomain::discrete)
        throw Error(ErrorCode::DimensionMismatch, "SDP matching is a discrete-time construction");
    const int n = sys.nx();
    const int m = sys.nu();
    const Matrix& A = sys.A;
    const Matrix& B = sys.B;
    const Matrix& K = k_hat.K;

    SdpPieces sp;
    sp.beta = sp.prob.scalar_variable("beta");
    sp.H = sp.prob.symmetric_variable("H", n + m);
    sp.P = sp.prob.symmetric_variable("P", n);
    const AffineMatrix Q = sp.H.block(0, 0, n, n);
    const AffineMatrix St = sp.H.block(0, n, n, m);
    sp.S = sp.H.block(n, 0, m, n);
    const AffineMatrix R = sp.H.block(n, n, m, m);

    add_conditioning_bounds(sp, n, m, opts.objective);
    // DARE with the gain pinned to K_hat, affine in (H, P)
    const AffineMatrix At_P_A = A.transpose() * sp.P * A;
    const AffineMatrix At_P_B = A.transpose() * sp.P * B;
    sp.prob.add_zero(At_P_A + Q - (St + At_P_B) * K - sp.P);
    sp.prob.add_zero((R + B.transpose() * sp.P * B) * K - sp.S - B.transpose() * sp.P * A);
    if (opts.s_policy == SPolicy::zero_s) apply_s_policy_zero(sp);

    LmiSolution sol = run_sdp(sp.prob, opts, opts.s_policy);
    double beta = sp.prob.scalar_value("beta", sol.y);
    if (opts.s_policy == SPolicy::l1_min) {
        add_l1_stage(sp, beta);
        sol = run_sdp(sp.prob, opts, opts.s_policy);
        beta = sp.prob.scalar_value("beta", sol.y);
    }

    const Matrix H = sp.prob.value("H", sol.y);
    const Matrix P = sp.prob.value("P", sol.y);
    return finalize(sys, k_hat, StageCost::from_h(H, n), P, beta, MatchFormulation::direct);
}

namespace {

AffineMatrix build_h_gamma(const AffineMatrix& gamma, const Matrix& K) {
    return block2x2(K.transpose() * gamma * K, K.transpose() * gamma, gamma * K, gamma);
}

AffineMatrix build_h_p(const AffineMatrix& P, const Matrix& A, const Matrix& B) {
    return block2x2(P - A.transpose() * P * A, -(A.transpose() * P * B),
                    -(B.transpose() * P * A), -(B.transpose() * P * B));
}

}  // namespace

MatchResult match_indirect(const LinearDynamics& sys, const Gain& k_hat, const Matrix& gamma,
                           const MatchOptions& opts) {
    check_matchable(sys, k_hat);
    if (sys.domain != TimeDomain::discrete)
        throw Error(ErrorCode::DimensionMismatch, "SDP matching is a discrete-time construction");
    if (gamma.rows() != sys.nu() || gamma.cols() != sys.nu())
        throw Error(ErrorCode::DimensionMismatch, "Gamma must be nu x nu");
    if ((gamma - gamma.transpose()).norm() > 1e-10 * (1.0 + gamma.norm()) ||
        !is_positive_definite(gamma))
        throw Error(ErrorCode::GammaNotSPD, "Gamma must be symmetric positive definite");

    const int n = sys.nx();
    const int m = sys.nu();
    const Matrix h_gamma = build_h_gamma(AffineMatrix(gamma), k_hat.K).constant_term();

    SdpPieces sp;
    sp.beta = sp.prob.scalar_variable("beta");
    const AffineMatrix alpha = sp.prob.scalar_variable("alpha");
    sp.P = sp.prob.symmetric_variable("P", n);
    sp.H = alpha * h_gamma + build_h_p(sp.P, sys.A, sys.B);
    sp.S = sp.H.block(n, 0, m, n);

    add_conditioning_bounds(sp, n, m, opts.objective);
    if (opts.s_policy == SPolicy::zero_s) apply_s_policy_zero(sp);

    LmiSolution sol = run_sdp(sp.prob, opts, opts.s_policy);
    double beta = sp.prob.scalar_value("beta", sol.y);
    if (opts.s_policy == SPolicy::l1_min) {
        add_l1_stage(sp, beta);
        sol = run_sdp(sp.prob, opts, opts.s_policy);
        beta = sp.prob.scalar_value("beta", sol.y);
    }

    const double alpha_v = sp.prob.scalar_value("alpha", sol.y);
    const Matrix P = sp.prob.value("P", sol.y);
    const Matrix H = alpha_v * h_gamma + build_h_p(AffineMatrix(P), sys.A, sys.B).constant_term();
    MatchResult result = finalize(sys, k_hat, StageCost::from_h(symmetrized(H), n), P, beta,
                                  MatchFormulation::indirect);
    result.gamma_used = alpha_v * gamma;  // alpha folds into the deviation weight
    return result;
}

MatchResult match_gamma_opt(const LinearDynamics& sys, const Gain& k_hat,
                            const MatchOptions& opts) {
    check_matchable(sys, k_hat);
    if (sys.domain != TimeDomain::discrete)
        throw Error(ErrorCode::DimensionMismatch, "SDP matching is a discrete-time construction");
    const int n = sys.nx();
    const int m = sys.nu();

    SdpPieces sp;
    sp.beta = sp.prob.scalar_variable("beta");
    const AffineMatrix gamma = sp.prob.symmetric_variable("Gamma", m);
    sp.P = sp.prob.symmetric_variable("P", n);
    sp.H = build_h_gamma(gamma, k_hat.K) + build_h_p(sp.P, sys.A, sys.B);
    sp.S = sp.H.block(n, 0, m, n);

    add_conditioning_bounds(sp, n, m, opts.objective);
    if (opts.s_policy == SPolicy::zero_s) apply_s_policy_zero(sp);

    LmiSolution sol = run_sdp(sp.prob, opts, opts.s_policy);
    double beta = sp.prob.scalar_value("beta", sol.y);
    if (opts.s_policy == SPolicy::l1_min) {
        add_l1_stage(sp, beta);
        sol = run_sdp(sp.prob, opts, opts.s_policy);
        beta = sp.prob.scalar_value("beta", sol.y);
    }

    const Matrix gamma_v = sp.prob.value("Gamma", sol.y);
    const Matrix P = sp.prob.value("P", sol.y);
    const Matrix H = build_h_gamma(AffineMatrix(gamma_v), k_hat.K).constant_term() +
                     build_h_p(AffineMatrix(P), sys.A, sys.B).constant_term();
    MatchResult result = finalize(sys, k_hat, StageCost::from_h(symmetrized(H), n), P, beta,
                                  MatchFormulation::gamma_opt);
    result.gamma_used = gamma_v;
    return result;
}

MatchResult match_constructive(const LinearDynamics& sys, const Gain& k_hat, const Matrix& qbar,
                               const Matrix& rbar_seed) {
    check_matchable(sys, k_hat);
    const int n = sys.nx();
    const int m = sys.nu();
    if (qbar.rows() != n || qbar.cols() != n || rbar_seed.rows() != m || rbar_seed.cols() != m)
        throw Error(ErrorCode::DimensionMismatch, "Qbar / Rbar_seed sizes are wrong");
    if (!is_positive_definite(qbar))
        throw Error(ErrorCode::NotPositiveDefinite, "Qbar must be positive definite");
    if (!is_positive_definite(rbar_seed))
        throw Error(ErrorCode::NotPositiveDefinite, "Rbar_seed must be positive definite");

    const Matrix A_K = sys.A - sys.B * k_hat.K;
    const bool discrete = sys.domain == TimeDomain::discrete;
    const Matrix Pbar = discrete ? solve_lyapunov_discrete(A_K, qbar)
                                 : solve_lyapunov_continuous(A_K, qbar);
    const Matrix Sbar = discrete ? Matrix(-sys.B.transpose() * Pbar * A_K)
                                 : Matrix(-sys.B.transpose() * Pbar);

    const Matrix schur_term = Sbar * qbar.ldlt().solve(Sbar.transpose());
    Matrix Rbar = rbar_seed;
    bool inflated = false;
    if (min_eig_sym(rbar_seed - schur_term) <= 0.0) {
        Rbar = symmetrized(schur_term) + rbar_seed;
        inflated = true;
    }

    StageCost cost;
    cost.R = Rbar;
    cost.S = Sbar + Rbar * k_hat.K;
    cost.Q = symmetrized(qbar + Sbar.transpose() * k_hat.K + k_hat.K.transpose() * Sbar +
                         k_hat.K.transpose() * Rbar * k_hat.K);

    MatchResult result = finalize(sys, k_hat, std::move(cost), Pbar,
                                  /*beta=*/0.0, MatchFormulation::constructive);
    result.beta = result.kappa_hp;  // no SDP objective here; report the conditioning bound
    result.rbar_inflated = inflated;
    return result;
}

StageCost apply_cost_transformation(const StageCost& cost, const Matrix& p1, const Matrix& p2,
                                    double sigma, const LinearDynamics& sys) {
    if (sigma <= 0.0) throw Error(ErrorCode::ProvisoViolated, "sigma must be positive");
    if (sys.domain != TimeDomain::discrete)
        throw Error(ErrorCode::DimensionMismatch, "cost transformation is discrete-time");
    const int n = sys.nx();
    const int m = sys.nu();
    if (p1.rows() != m || p1.cols() != m || p2.rows() != n || p2.cols() != n)
        throw Error(ErrorCode::DimensionMismatch, "P1 must be nu x nu and P2 nx x nx");

    const RiccatiSolution base = solve_dare(sys, cost);
    const Matrix& K = base.K.K;
    const Matrix proviso =
        p1 + sys.B.transpose() * p2 * sys.B + cost.R + sys.B.transpose() * base.P * sys.B;
    if (!is_positive_definite(symmetrized(proviso)))
        throw Error(ErrorCode::ProvisoViolated,
                    "P1 + B'P2B + R + B'PB must be positive definite");

    Matrix H = cost.assemble_h();
    Matrix shift1(n + m, n + m);
    shift1.topLeftCorner(n, n) = K.transpose() * p1 * K;
    shift1.topRightCorner(n, m) = K.transpose() * p1;
    shift1.bottomLeftCorner(m, n) = p1 * K;
    shift1.bottomRightCorner(m, m) = p1;
    Matrix shift2(n + m, n + m);
    shift2.topLeftCorner(n, n) = sys.A.transpose() * p2 * sys.A - p2;
    shift2.topRightCorner(n, m) = sys.A.transpose() * p2 * sys.B;
    shift2.bottomLeftCorner(m, n) = sys.B.transpose() * p2 * sys.A;
    shift2.bottomRightCorner(m, m) = sys.B.transpose() * p2 * sys.B;

    StageCost out = StageCost::from_h(symmetrized(sigma * (H + shift1 + shift2)), n);
    out.P = solve_dare(sys, out).P;
    return out;
}

MatchVerification verify_match(const LinearDynamics& sys, const StageCost& cost,
                               const Gain& k_hat) {
    const RiccatiSolution sol = sys.domain == TimeDomain::discrete ? solve_dare(sys, cost)
                                                                   : solve_care(sys, cost);
    MatchVerification v;
    v.gain_error = gain_error_inf(sol.K.K, k_hat.K);
    const Matrix A_K = sys.A - sys.B * k_hat.K;
    v.stabilizing = sys.domain == TimeDomain::discrete ? spectral_radius(A_K) < 1.0
                                                       : spectral_abscissa(A_K) < 0.0;
    return v;
}

}  // namespace ctrlmatch
