#include "ctrlmatch/numerics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

namespace ctrlmatch {

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

double spectral_radius(const Matrix& A) {
    Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw Error(ErrorCode::EigenFailure, "eigenvalue iteration did not converge");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_abscissa(const Matrix& A) {
    Eigen::EigenSolver<Matrix> es(A, false);
    if (es.info() != Eigen::Success)
        throw Error(ErrorCode::EigenFailure, "eigenvalue iteration did not converge");
    return es.eigenvalues().real().maxCoeff();
}

double min_eig_sym(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double max_eig_sym(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double cond_sym(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

bool is_positive_definite(const Matrix& M, double tol) { return min_eig_sym(M) > tol; }

namespace detail {

// Both Lyapunov solvers reduce A to complex Schur form A = U T U* and solve
// the transformed equation column by column; each column is a lower-triangular
// solve because T* is lower triangular.

Matrix solve_stein(const Matrix& A, const Matrix& Q) {
    const int n = static_cast<int>(A.rows());
    Eigen::ComplexSchur<Matrix> schur(A, /*computeU=*/true);
    if (schur.info() != Eigen::Success)
        throw Error(ErrorCode::NoConvergence, "Schur decomposition failed");
    const Eigen::MatrixXcd T = schur.matrixT();
    const Eigen::MatrixXcd U = schur.matrixU();
    const Eigen::MatrixXcd Tadj = T.adjoint();

    // T* Y T - Y + F = 0 with Y = U* P U, F = U* Q U.
    Eigen::MatrixXcd F = U.adjoint() * Q * U;
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXcd rhs = -F.col(k);
        if (k > 0) {
            Eigen::VectorXcd r = Eigen::VectorXcd::Zero(n);
            for (int j = 0; j < k; ++j) r += T(j, k) * Y.col(j);
            rhs -= Tadj * r;
        }
        Eigen::MatrixXcd L = T(k, k) * Tadj;
        L.diagonal().array() -= 1.0;
        Y.col(k) = L.triangularView<Eigen::Lower>().solve(rhs);
    }
    return symmetrized((U * Y * U.adjoint()).real());
}

Matrix solve_lyap_ct(const Matrix& A, const Matrix& Q) {
    const int n = static_cast<int>(A.rows());
    Eigen::ComplexSchur<Matrix> schur(A, true);
    if (schur.info() != Eigen::Success)
        throw Error(ErrorCode::NoConvergence, "Schur decomposition failed");
    const Eigen::MatrixXcd T = schur.matrixT();
    const Eigen::MatrixXcd U = schur.matrixU();

    // T* Y + Y T + F = 0.
    Eigen::MatrixXcd F = U.adjoint() * Q * U;
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXcd rhs = -F.col(k);
        for (int j = 0; j < k; ++j) rhs -= T(j, k) * Y.col(j);
        Eigen::MatrixXcd L = T.adjoint();
        L.diagonal().array() += T(k, k);
        Y.col(k) = L.triangularView<Eigen::Lower>().solve(rhs);
    }
    return symmetrized((U * Y * U.adjoint()).real());
}

}  // namespace detail

Matrix solve_lyapunov_discrete(const Matrix& A_K, const Matrix& Qbar) {
    if (A_K.rows() != A_K.cols() || Qbar.rows() != A_K.rows() || Qbar.cols() != A_K.cols())
        throw Error(ErrorCode::DimensionMismatch, "A_K and Qbar must be square of equal size");
    if (spectral_radius(A_K) >= 1.0 - kStabilityMargin)
        throw Error(ErrorCode::NotSchurStable, "spectral radius of A_K is not below 1");
    Matrix P = detail::solve_stein(A_K, Qbar);
    // refinement with extended-precision residuals: at ||A|| ~ 1e3 the
    // residual itself cannot be evaluated to the bound in doubles
    using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const LongMatrix Al = A_K.cast<long double>();
    const LongMatrix Ql = Qbar.cast<long double>();
    const double bound = 1e-10 * (1.0 + Qbar.norm());
    for (int round = 0; round < 4; ++round) {
        const LongMatrix Pl = P.cast<long double>();
        const Matrix res = (Ql + Al.transpose() * Pl * Al - Pl).cast<double>();
        if (res.norm() <= bound) return P;
        P = symmetrized(P + detail::solve_stein(A_K, res));
    }
    throw Error(ErrorCode::NoConvergence, "Lyapunov residual above bound");
}

Matrix solve_lyapunov_continuous(const Matrix& A_K, const Matrix& Qbar) {
    if (A_K.rows() != A_K.cols() || Qbar.rows() != A_K.rows() || Qbar.cols() != A_K.cols())
        throw Error(ErrorCode::DimensionMismatch, "A_K and Qbar must be square of equal size");
    if (spectral_abscissa(A_K) >= -kStabilityMargin)
        throw Error(ErrorCode::NotHurwitzStable, "A_K has eigenvalues outside the open left half plane");
    Matrix P = detail::solve_lyap_ct(A_K, Qbar);
    using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const LongMatrix Al = A_K.cast<long double>();
    const LongMatrix Ql = Qbar.cast<long double>();
    const double bound = 1e-10 * (1.0 + Qbar.norm());
    for (int round = 0; round < 4; ++round) {
        const LongMatrix Pl = P.cast<long double>();
        const Matrix res = (Ql + Al.transpose() * Pl + Pl * Al).cast<double>();
        if (res.norm() <= bound) return P;
        P = symmetrized(P + detail::solve_lyap_ct(A_K, res));
    }
    throw Error(ErrorCode::NoConvergence, "Lyapunov residual above bound");
}

namespace {

Matrix dare_gain(const Matrix& A, const Matrix& B, const StageCost& cost, const Matrix& P) {
    const Matrix G = symmetrized(cost.R + B.transpose() * P * B);
    Eigen::FullPivLU<Matrix> lu(G);
    if (!lu.isInvertible())
        throw Error(ErrorCode::NoStabilizingSolution, "R + B'PB is singular along the iteration");
    return lu.solve(cost.S + B.transpose() * P * A);
}

struct DareResiduals {
    double eq_p;
    double eq_k;
};

DareResiduals dare_residuals(const Matrix& A, const Matrix& B, const StageCost& cost,
                             const Matrix& P, const Matrix& K) {
    const Matrix res_p =
        A.transpose() * P * A + cost.Q - (cost.S.transpose() + A.transpose() * P * B) * K - P;
    const Matrix res_k = (cost.R + B.transpose() * P * B) * K - cost.S - B.transpose() * P * A;
    const double scale_p = 1.0 + cost.Q.norm() + A.squaredNorm() * P.norm();
    const double scale_k = 1.0 + cost.S.norm() + B.norm() * P.norm() * A.norm();
    return {res_p.norm() / scale_p, res_k.norm() / scale_k};
}

}  // namespace

RiccatiSolution solve_dare(const LinearDynamics& sys, const StageCost& cost) {
    sys.validate();
    cost.validate();
    if (cost.nx() != sys.nx() || cost.nu() != sys.nu())
        throw Error(ErrorCode::DimensionMismatch, "cost dimensions do not match the system");
    if (!is_stabilizable(sys))
        throw Error(ErrorCode::NotStabilizable, "(A,B) fails the PBH stabilizability test");

    const Matrix& A = sys.A;
    const Matrix& B = sys.B;
    const int n = sys.nx();

    Matrix P = Matrix::Identity(n, n);
    Matrix K;
    constexpr int kMaxIter = 20000;
    constexpr double kRelTol = 1e-12;
    bool converged = false;
    for (int it = 0; it < kMaxIter; ++it) {
        K = dare_gain(A, B, cost, P);
        Matrix P_next = symmetrized(A.transpose() * P * A + cost.Q -
                                    (cost.S.transpose() + A.transpose() * P * B) * K);
        const double change = (P_next - P).norm();
        P = P_next;
        if (P.norm() > 1e14)
            throw Error(ErrorCode::NoStabilizingSolution, "Riccati iteration diverges");
        // relative to the iteration's own noise floor: each sweep rounds at
        // eps * (cost and A'PA scale), not at eps * ||P||
        const double scale = std::max({1.0, P.norm(), cost.Q.norm(), A.squaredNorm() * P.norm()});
        if (change <= kRelTol * scale) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw Error(ErrorCode::NoStabilizingSolution, "Riccati iteration did not converge");

    // One Newton-Kleinman step: exact policy evaluation for the current gain.
    K = dare_gain(A, B, cost, P);
    Matrix A_K = A - B * K;
    if (spectral_radius(A_K) >= 1.0)
        throw Error(ErrorCode::NoStabilizingSolution, "iteration limit reached a non-Schur closed loop");
    const Matrix Qcl = symmetrized(cost.Q - K.transpose() * cost.S - cost.S.transpose() * K +
                                   K.transpose() * cost.R * K);
    P = detail::solve_stein(A_K, Qcl);
    K = dare_gain(A, B, cost, P);

    const DareResiduals res = dare_residuals(A, B, cost, P, K);
    if (res.eq_p > 1e-9 || res.eq_k > 1e-9)
        throw Error(ErrorCode::NoStabilizingSolution, "DARE residual above bound after refinement");
    if (spectral_radius(A - B * K) >= 1.0)
        throw Error(ErrorCode::NoStabilizingSolution, "refined closed loop is not Schur");
    return {P, Gain{K}};
}

namespace {

// Bass-style stabilizing gain: solve (A + beta I) Z + Z (A + beta I)' = 2BB'
// and take K0 = B' pinv(Z). The pseudo-inverse leaves uncontrollable (stable)
// modes with zero gain, so stabilizable-but-not-controllable pairs work.
Matrix initial_stabilizing_gain_ct(const Matrix& A, const Matrix& B) {
    const int n = static_cast<int>(A.rows());
    if (spectral_abscissa(A) < -kStabilityMargin) return Matrix::Zero(B.cols(), n);
    const double beta = A.norm() + 1.0;
    const Matrix M = A + beta * Matrix::Identity(n, n);
    const Matrix Z = detail::solve_lyap_ct(-M.transpose(), 2.0 * B * B.transpose());
    Eigen::JacobiSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cutoff = 1e-12 * std::max(1.0, svd.singularValues()(0));
    Vector inv = svd.singularValues();
    for (int i = 0; i < inv.size(); ++i) inv(i) = inv(i) > cutoff ? 1.0 / inv(i) : 0.0;
    const Matrix Zpinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    return B.transpose() * Zpinv;
}

}  // namespace

RiccatiSolution solve_care(const LinearDynamics& sys, const StageCost& cost) {
    sys.validate();
    cost.validate();
    if (cost.nx() != sys.nx() || cost.nu() != sys.nu())
        throw Error(ErrorCode::DimensionMismatch, "cost dimensions do not match the system");
    if (!is_stabilizable(sys))
        throw Error(ErrorCode::NotStabilizable, "(A,B) fails the PBH stabilizability test");
    Eigen::LLT<Matrix> r_llt(symmetrized(cost.R));
    if (r_llt.info() != Eigen::Success)
        throw Error(ErrorCode::NoStabilizingSolution, "R must be positive definite");

    const Matrix& A = sys.A;
    const Matrix& B = sys.B;
    const Matrix Rinv_S = r_llt.solve(cost.S);
    const Matrix A_t = A - B * Rinv_S;                                   // cross-term reduction
    const Matrix Q_t = symmetrized(cost.Q - cost.S.transpose() * Rinv_S);

    Matrix K_t = initial_stabilizing_gain_ct(A_t, B);
    if (spectral_abscissa(A_t - B * K_t) >= 0.0)
        throw Error(ErrorCode::NotStabilizable, "failed to construct a stabilizing initial gain");

    Matrix P;
    constexpr int kMaxNewton = 100;
    double prev_norm = -1.0;
    for (int it = 0; it < kMaxNewton; ++it) {
        const Matrix A_cl = A_t - B * K_t;
        const Matrix Qcl = symmetrized(Q_t + K_t.transpose() * cost.R * K_t);
        P = detail::solve_lyap_ct(A_cl, Qcl);
        K_t = r_llt.solve(B.transpose() * P);
        const double change = prev_norm < 0.0 ? 1.0 : std::abs(P.norm() - prev_norm);
        prev_norm = P.norm();
        if (it > 0 && change <= 1e-13 * std::max(1.0, P.norm())) break;
    }

    const Matrix K = K_t + Rinv_S;
    const Matrix res1 = A.transpose() * P + P * A + cost.Q - (cost.S.transpose() + P * B) * K;
    const Matrix res2 = cost.R * K - cost.S - B.transpose() * P;
    const double scale = 1.0 + cost.Q.norm() + A.norm() * P.norm();
    if (res1.norm() / scale > 1e-9 || res2.norm() / (1.0 + cost.S.norm() + P.norm()) > 1e-9)
        throw Error(ErrorCode::NoStabilizingSolution, "CARE residual above bound");
    if (spectral_abscissa(A - B * K) >= 0.0)
        throw Error(ErrorCode::NoStabilizingSolution, "closed loop is not Hurwitz");
    return {symmetrized(P), Gain{K}};
}

LinearDynamics discretize_zoh(const LinearDynamics& sys, double ts) {
    sys.validate();
    if (sys.domain != TimeDomain::continuous)
        throw Error(ErrorCode::DimensionMismatch, "discretize_zoh expects a continuous-time system");
    if (ts <= 0.0) throw Error(ErrorCode::DimensionMismatch, "ts must be positive");
    const int n = sys.nx();
    const int m = sys.nu();
    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = sys.A * ts;
    aug.topRightCorner(n, m) = sys.B * ts;
    const Matrix E = aug.exp();
    LinearDynamics out = sys;
    out.A = E.topLeftCorner(n, n);
    out.B = E.topRightCorner(n, m);
    out.domain = TimeDomain::discrete;
    out.ts = ts;
    return out;
}

StabilityReport stability_report(const Matrix& A, TimeDomain domain) {
    if (A.rows() != A.cols()) throw Error(ErrorCode::DimensionMismatch, "A must be square");
    StabilityReport report;
    if (domain == TimeDomain::discrete) {
        report.value = spectral_radius(A);
        report.is_stable = report.value < 1.0 - kStabilityMargin;
    } else {
        report.value = spectral_abscissa(A);
        report.is_stable = report.value < -kStabilityMargin;
    }
    return report;
}

bool is_stabilizable(const LinearDynamics& sys) {
    const int n = sys.nx();
    Eigen::EigenSolver<Matrix> es(sys.A, false);
    if (es.info() != Eigen::Success)
        throw Error(ErrorCode::EigenFailure, "eigenvalue iteration did not converge");
    for (int i = 0; i < n; ++i) {
        const std::complex<double> lambda = es.eigenvalues()(i);
        const bool unstable_mode = sys.domain == TimeDomain::discrete ? std::abs(lambda) >= 1.0
                                                                      : lambda.real() >= 0.0;
        if (!unstable_mode) continue;
        Eigen::MatrixXcd pencil(n, n + sys.nu());
        pencil.leftCols(n) = lambda * Eigen::MatrixXcd::Identity(n, n) - sys.A;
        pencil.rightCols(sys.nu()) = sys.B.cast<std::complex<double>>();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
        const double cutoff = 1e-8 * svd.singularValues()(0);
        if ((svd.singularValues().array() > cutoff).count() < n) return false;
    }
    return true;
}

}  // namespace ctrlmatch
