#include "ctrlmatch/estimation.hpp"

#include "ctrlmatch/numerics.hpp"
#include "ctrlmatch/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace ctrlmatch {

Matrix NoiseModel::assemble_h() const {
    const int p = static_cast<int>(Rv.rows());
    const int n = static_cast<int>(Qw.rows());
    Matrix H(p + n, p + n);
    H.topLeftCorner(p, p) = Rv;
    H.topRightCorner(p, n) = Svw;
    H.bottomLeftCorner(n, p) = Svw.transpose();
    H.bottomRightCorner(n, n) = Qw;
    return H;
}

void NoiseModel::validate() const {
    if (Qw.rows() != Qw.cols() || Rv.rows() != Rv.cols())
        throw Error(ErrorCode::DimensionMismatch, "Qw and Rv must be square");
    if (Svw.rows() != Rv.rows() || Svw.cols() != Qw.rows())
        throw Error(ErrorCode::DimensionMismatch, "Svw must be ny x nx");
    if (!is_positive_definite(assemble_h()))
        throw Error(ErrorCode::SingularWeight, "joint noise covariance must be positive definite");
}

KalmanUpdate kalman_update(const Matrix& A, const Matrix& C, const NoiseModel& noise,
                           const Matrix& P) {
    const int n = static_cast<int>(A.rows());
    if (A.cols() != n || C.cols() != n || P.rows() != n || P.cols() != n)
        throw Error(ErrorCode::DimensionMismatch, "kalman_update dimension mismatch");
    const Matrix innovation = symmetrized(C * P * C.transpose() + noise.Rv);
    Eigen::FullPivLU<Matrix> lu(innovation);
    if (!lu.isInvertible())
        throw Error(ErrorCode::SingularInnovation, "C P C' + Rv is singular");
    KalmanUpdate out;
    out.L.L = (A * P * C.transpose() + noise.Svw.transpose()) * lu.inverse();
    out.P_plus = symmetrized(A * P * A.transpose() + noise.Qw -
                             out.L.L * (noise.Svw + C * P * A.transpose()));
    return out;
}

KalmanUpdate kalman_steady_state(const Matrix& A, const Matrix& C, const NoiseModel& noise) {
    Matrix P = Matrix::Identity(A.rows(), A.cols());
    KalmanUpdate step;
    constexpr int kMaxIter = 100000;
    for (int it = 0; it < kMaxIter; ++it) {
        step = kalman_update(A, C, noise, P);
        const double scale =
            std::max({1.0, P.norm(), noise.Qw.norm(), A.squaredNorm() * P.norm()});
        if ((step.P_plus - P).norm() <= 1e-12 * scale) {
            step.P_plus = symmetrized(step.P_plus);
            return step;
        }
        P = step.P_plus;
    }
    throw Error(ErrorCode::NoConvergence, "Kalman covariance iteration did not converge");
}

OneStepEstimate one_step_mhe(const Matrix& A, const Matrix& C, const NoiseModel& noise,
                             const EstimatorState& state, const Vector& y) {
    const int n = static_cast<int>(A.rows());
    const int p = static_cast<int>(C.rows());
    noise.validate();
    Eigen::LLT<Matrix> h_llt(noise.assemble_h());
    Eigen::LLT<Matrix> p_llt(symmetrized(state.P));
    if (h_llt.info() != Eigen::Success || p_llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularWeight, "weights must be positive definite");

    // residual r = [C x- - y; A x- - x+] = T [x-; x+] - s
    Matrix T = Matrix::Zero(p + n, 2 * n);
    T.topLeftCorner(p, n) = C;
    T.bottomLeftCorner(n, n) = A;
    T.bottomRightCorner(n, n) = -Matrix::Identity(n, n);
    Vector s = Vector::Zero(p + n);
    s.head(p) = y;

    const Matrix h_inv_T = h_llt.solve(T);
    Matrix G = T.transpose() * h_inv_T;
    G.topLeftCorner(n, n) += p_llt.solve(Matrix::Identity(n, n));
    Vector rhs = T.transpose() * h_llt.solve(s);
    rhs.head(n) += p_llt.solve(state.x_hat);

    const Vector z = symmetrized(G).ldlt().solve(rhs);
    OneStepEstimate out;
    out.x_minus = z.head(n);
    out.x_plus = z.tail(n);
    return out;
}

ObserverMatch match_observer(const Matrix& A, const Matrix& C, const ObserverGain& L_hat,
                             const MatchOptions& opts, MatchFormulation formulation) {
    if (L_hat.L.rows() != A.rows() || L_hat.L.cols() != C.rows())
        throw Error(ErrorCode::DimensionMismatch, "observer gain must be nx x ny");
    LinearDynamics dual;
    dual.A = A.transpose();
    dual.B = C.transpose();
    dual.domain = TimeDomain::discrete;
    const Gain k_hat{L_hat.L.transpose()};

    MatchResult res;
    switch (formulation) {
        case MatchFormulation::direct: res = match_direct(dual, k_hat, opts); break;
        case MatchFormulation::gamma_opt: res = match_gamma_opt(dual, k_hat, opts); break;
        case MatchFormulation::indirect:
            res = match_indirect(dual, k_hat, Matrix::Identity(dual.nu(), dual.nu()), opts);
            break;
        case MatchFormulation::constructive:
            res = match_constructive(dual, k_hat, Matrix::Identity(dual.nx(), dual.nx()),
                                     Matrix::Identity(dual.nu(), dual.nu()));
            break;
    }

    ObserverMatch out;
    out.noise.Qw = res.cost.Q;
    out.noise.Rv = res.cost.R;
    out.noise.Svw = res.cost.S;
    out.P = *res.cost.P;
    out.L_verified.L = res.k_verified.K.transpose();
    return out;
}

HinfFixedPoint hinf_fixed_point(const Matrix& A, const Matrix& B, const Matrix& C,
                                const Matrix& W, const Matrix& V, const Matrix& G) {
    const int n = static_cast<int>(A.rows());
    HinfFixedPoint out;
    Eigen::LLT<Matrix> v_llt(symmetrized(V));
    if (v_llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularWeight, "V must be positive definite");
    const Matrix BWBt = symmetrized(B * W * B.transpose());
    const Matrix CtVinvC = C.transpose() * v_llt.solve(C);
    const Matrix GtG = G.transpose() * G;

    Matrix P = BWBt;
    constexpr int kMaxIter = 2000;
    for (int it = 0; it < kMaxIter; ++it) {
        Eigen::FullPivLU<Matrix> lu(Matrix::Identity(n, n) - P * GtG + P * CtVinvC);
        if (!lu.isInvertible()) return out;  // infeasible at this G
        const Matrix Sigma = lu.solve(P);
        const Matrix P_next = symmetrized(A * Sigma * A.transpose() + BWBt);
        if (!P_next.allFinite() || P_next.norm() > 1e12) return out;
        const double change = (P_next - P).norm();
        P = P_next;
        if (change <= 1e-10 * std::max(1.0, P.norm())) {
            out.Sigma = lu.solve(P);
            out.P = P;
            out.L.L = A * out.Sigma * C.transpose() * v_llt.solve(Matrix::Identity(V.rows(), V.cols()));
            // existence condition of the underlying minimax problem: the
            // disturbance player's Hessian P^{-1} - G'G must stay positive
            const Matrix exist = symmetrized(P.inverse() - GtG);
            out.feasible = is_positive_definite(symmetrized(out.Sigma)) &&
                           is_positive_definite(exist) &&
                           spectral_radius(A - out.L.L * C) < 1.0;
            return out;
        }
    }
    return out;  // no convergence within budget
}

HinfDesign hinf_design(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& W,
                       const Matrix& V, const Matrix& G_shape) {
    if (G_shape.norm() == 0.0)
        throw Error(ErrorCode::NoFeasibleGamma, "G_shape must be nonzero; gamma would be unbounded");
    double lo = 0.0;
    HinfFixedPoint best = hinf_fixed_point(A, B, C, W, V, Matrix(0.0 * G_shape));
    if (!best.feasible)
        throw Error(ErrorCode::NoFeasibleGamma, "even gamma = 0 fails the fixed-point iteration");

    double hi = 1.0;
    HinfFixedPoint at_hi = hinf_fixed_point(A, B, C, W, V, Matrix(hi * G_shape));
    int expansions = 0;
    while (at_hi.feasible && expansions++ < 60) {
        lo = hi;
        best = at_hi;
        hi *= 2.0;
        at_hi = hinf_fixed_point(A, B, C, W, V, Matrix(hi * G_shape));
    }
    if (expansions >= 60)
        throw Error(ErrorCode::NoFeasibleGamma, "gamma appears unbounded for this shaping matrix");

    while (hi - lo > 1e-4) {
        const double mid = 0.5 * (lo + hi);
        const HinfFixedPoint at_mid = hinf_fixed_point(A, B, C, W, V, Matrix(mid * G_shape));
        if (at_mid.feasible) {
            lo = mid;
            best = at_mid;
        } else {
            hi = mid;
        }
    }

    HinfDesign out;
    out.L = best.L;
    out.Sigma = best.Sigma;
    out.P = best.P;
    out.gamma_star = lo;
    return out;
}

MheWindowSolution mhe_horizon_solve(const Matrix& A, const Matrix& C, const NoiseModel& noise,
                                    const EstimatorState& arrival,
                                    const std::vector<Vector>& measurements,
                                    const Polyhedron& w_constraints) {
    const int n = static_cast<int>(A.rows());
    const int p = static_cast<int>(C.rows());
    const int M = static_cast<int>(measurements.size());
    if (M < 1) throw Error(ErrorCode::DimensionMismatch, "window must hold at least one sample");
    noise.validate();
    Eigen::LLT<Matrix> h_llt(noise.assemble_h());
    Eigen::LLT<Matrix> p_llt(symmetrized(arrival.P));
    if (h_llt.info() != Eigen::Success || p_llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularWeight, "weights must be positive definite");

    const int nz = n * (M + 1);
    QuadProgram qp;
    qp.G = Matrix::Zero(nz, nz);
    qp.a = Vector::Zero(nz);
    for (int k = 0; k < M; ++k) {
        Matrix T = Matrix::Zero(p + n, nz);
        T.block(0, n * k, p, n) = C;
        T.block(p, n * k, n, n) = A;
        T.block(p, n * (k + 1), n, n) = -Matrix::Identity(n, n);
        Vector s = Vector::Zero(p + n);
        s.head(p) = measurements[k];
        const Matrix HinvT = h_llt.solve(T);
        qp.G += 2.0 * T.transpose() * HinvT;
        qp.a -= 2.0 * T.transpose() * h_llt.solve(s);
    }
    qp.G.topLeftCorner(n, n) += 2.0 * p_llt.solve(Matrix::Identity(n, n));
    qp.a.head(n) -= 2.0 * p_llt.solve(arrival.x_hat);
    qp.G = symmetrized(qp.G);
    qp.E = Matrix::Zero(0, nz);
    qp.t = Vector::Zero(0);

    const int wc = w_constraints.rows();
    qp.M = Matrix::Zero(wc * M, nz);
    qp.d = Vector::Zero(wc * M);
    for (int k = 0; k < M && wc > 0; ++k) {
        // rows F (x_{k+1} - A x_k) <= g
        qp.M.block(wc * k, n * (k + 1), wc, n) = w_constraints.F;
        qp.M.block(wc * k, n * k, wc, n) = -w_constraints.F * A;
        qp.d.segment(wc * k, wc) = w_constraints.g;
    }

    QpSolution sol;
    try {
        sol = solve_qp(qp);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Infeasible)
            throw Error(ErrorCode::InfeasibleWindow, "MHE window has no feasible trajectory");
        throw;
    }

    MheWindowSolution out;
    out.states = Matrix::Zero(n, M + 1);
    for (int k = 0; k <= M; ++k) out.states.col(k) = sol.z.segment(n * k, n);
    out.noise = Matrix::Zero(n, M);
    for (int k = 0; k < M; ++k)
        out.noise.col(k) = out.states.col(k + 1) - A * out.states.col(k);
    return out;
}

}  // namespace ctrlmatch
