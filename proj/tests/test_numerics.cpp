#include "ctrlmatch/numerics.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <algorithm>
#include <complex>

using namespace ctrlmatch;
using test_util::error_code_of;
using test_util::scalar;

TEST_CASE("discrete Lyapunov: scalar closed forms") {
    CHECK(solve_lyapunov_discrete(scalar(0.0), scalar(1.0))(0, 0) == doctest::Approx(1.0));
    CHECK(solve_lyapunov_discrete(scalar(0.5), scalar(1.0))(0, 0) == doctest::Approx(4.0 / 3.0));
    // scalar closed form Q / (1 - a^2), evaluated independently
    const double a = -0.92;
    const double expected = 1.0 / (1.0 - a * a);
    CHECK(expected == doctest::Approx(6.5104).epsilon(1e-4));
    CHECK(solve_lyapunov_discrete(scalar(a), scalar(1.0))(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("discrete Lyapunov: rejects non-Schur A_K") {
    CHECK(error_code_of([] { solve_lyapunov_discrete(scalar(1.0), scalar(1.0)); }) ==
          ErrorCode::NotSchurStable);
    CHECK(error_code_of([] { solve_lyapunov_discrete(scalar(-1.2), scalar(1.0)); }) ==
          ErrorCode::NotSchurStable);
}

TEST_CASE("continuous Lyapunov: scalar and diagonal closed forms") {
    CHECK(solve_lyapunov_continuous(scalar(-1.0), scalar(2.0))(0, 0) == doctest::Approx(1.0));
    CHECK(solve_lyapunov_continuous(scalar(-0.5), scalar(1.0))(0, 0) == doctest::Approx(1.0));
    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = -1.0;
    A(1, 1) = -2.0;
    const Matrix P = solve_lyapunov_continuous(A, Matrix::Identity(2, 2));
    CHECK(P(0, 0) == doctest::Approx(0.5));
    CHECK(P(1, 1) == doctest::Approx(0.25));
    CHECK(std::abs(P(0, 1)) < 1e-14);

    CHECK(error_code_of([] { solve_lyapunov_continuous(scalar(0.1), scalar(1.0)); }) ==
          ErrorCode::NotHurwitzStable);
}

TEST_CASE("Lyapunov round trip on random Schur matrices") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 6);
        const Matrix A_K = test_util::random_schur(rng, n);
        const Matrix M = test_util::random_matrix(rng, n, n);
        const Matrix Qbar = M.transpose() * M + Matrix::Identity(n, n);
        const Matrix P = solve_lyapunov_discrete(A_K, Qbar);
        CHECK((Qbar + A_K.transpose() * P * A_K - P).norm() <= 1e-10 * (1.0 + Qbar.norm()));
        CHECK(min_eig_sym(P) > 0.0);
        CHECK((P - P.transpose()).norm() <= 1e-12 * std::max(1.0, P.norm()));
    }
}

namespace {

LinearDynamics make_sys(const Matrix& A, const Matrix& B, TimeDomain domain) {
    LinearDynamics sys;
    sys.A = A;
    sys.B = B;
    sys.domain = domain;
    return sys;
}

StageCost make_cost(const Matrix& Q, const Matrix& R, const Matrix& S) {
    StageCost cost;
    cost.Q = Q;
    cost.R = R;
    cost.S = S;
    return cost;
}

}  // namespace

TEST_CASE("DARE: stabilizing root of the indefinite scalar example") {
    // x+ = 2x + u with cost u^2 has DARE roots P in {0, 3}; the stabilizing
    // one is P = 3 with K = 1.5 and must be returned, never P = 0.
    auto sol = solve_dare(make_sys(scalar(2.0), scalar(1.0), TimeDomain::discrete),
                          make_cost(scalar(0.0), scalar(1.0), scalar(0.0)));
    CHECK(sol.P(0, 0) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(sol.K.K(0, 0) == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(spectral_radius(scalar(2.0) - scalar(1.0) * sol.K.K) < 1.0);
}

TEST_CASE("DARE: indefinite cost with cross term selects P = 21") {
    auto sol = solve_dare(make_sys(scalar(0.9), scalar(0.1), TimeDomain::discrete),
                          make_cost(scalar(4.0), scalar(1.0), scalar(-2.0)));
    CHECK(sol.P(0, 0) == doctest::Approx(21.0).epsilon(1e-8));
    CHECK(sol.K.K(0, 0) == doctest::Approx(-1.0 / 11.0).epsilon(1e-8));
}

TEST_CASE("DARE: A = 0 decouples stages") {
    auto sol = solve_dare(make_sys(scalar(0.0), scalar(1.0), TimeDomain::discrete),
                          make_cost(scalar(1.0), scalar(1.0), scalar(0.0)));
    CHECK(sol.P(0, 0) == doctest::Approx(1.0));
    CHECK(sol.K.K(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("DARE: rejects non-stabilizable pairs") {
    CHECK(error_code_of([] {
              solve_dare(make_sys(scalar(2.0), scalar(0.0), TimeDomain::discrete),
                         make_cost(scalar(1.0), scalar(1.0), scalar(0.0)));
          }) == ErrorCode::NotStabilizable);
}

TEST_CASE("DARE: random solutions are stabilizing, symmetric and accurate") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int nx = 1 + static_cast<int>(rng() % 5);
        const int nu = 1 + static_cast<int>(rng() % 3);
        LinearDynamics sys;
        sys.A = test_util::random_matrix(rng, nx, nx);
        sys.B = test_util::random_matrix(rng, nx, nu);
        if (!is_stabilizable(sys)) continue;
        StageCost cost = make_cost(test_util::random_spd(rng, nx), test_util::random_spd(rng, nu),
                                   Matrix::Zero(nu, nx));
        auto sol = solve_dare(sys, cost);
        CHECK(spectral_radius(sys.A - sys.B * sol.K.K) < 1.0);
        CHECK((sol.P - sol.P.transpose()).norm() <= 1e-12 * std::max(1.0, sol.P.norm()));
        const Matrix res = sys.A.transpose() * sol.P * sys.A + cost.Q -
                           (cost.S.transpose() + sys.A.transpose() * sol.P * sys.B) * sol.K.K -
                           sol.P;
        CHECK(res.norm() <= 1e-9 * (1.0 + sys.A.squaredNorm() * sol.P.norm() + cost.Q.norm()));
    }
}

TEST_CASE("DARE: cross-term reduction equivalence") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 15; ++trial) {
        const int nx = 2 + static_cast<int>(rng() % 3);
        const int nu = 1 + static_cast<int>(rng() % 2);
        LinearDynamics sys;
        sys.A = test_util::random_matrix(rng, nx, nx);
        sys.B = test_util::random_matrix(rng, nx, nu);
        if (!is_stabilizable(sys)) continue;
        StageCost cost;
        cost.Q = test_util::random_spd(rng, nx, 2.0);
        cost.R = test_util::random_spd(rng, nu);
        cost.S = 0.2 * test_util::random_matrix(rng, nu, nx);
        // keep H positive definite so both routes are classical
        if (min_eig_sym(cost.assemble_h()) <= 1e-6) continue;

        auto direct = solve_dare(sys, cost);

        const Matrix Rinv_S = cost.R.ldlt().solve(cost.S);
        LinearDynamics tsys = sys;
        tsys.A = sys.A - sys.B * Rinv_S;
        StageCost tcost;
        tcost.Q = symmetrized(cost.Q - cost.S.transpose() * Rinv_S);
        tcost.R = cost.R;
        tcost.S = Matrix::Zero(nu, nx);
        auto reduced = solve_dare(tsys, tcost);
        const Matrix K_rec = reduced.K.K + Rinv_S;

        CHECK((direct.K.K - K_rec).norm() <= 1e-9 * (1.0 + direct.K.K.norm()));
        CHECK((direct.P - reduced.P).norm() <= 1e-9 * (1.0 + direct.P.norm()));
    }
}

TEST_CASE("CARE: scalar closed forms") {
    auto sol = solve_care(make_sys(scalar(-1.0), scalar(1.0), TimeDomain::continuous),
                          make_cost(scalar(3.0), scalar(1.0), scalar(0.0)));
    CHECK(sol.P(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.K.K(0, 0) == doctest::Approx(1.0).epsilon(1e-10));

    sol = solve_care(make_sys(scalar(0.0), scalar(1.0), TimeDomain::continuous),
                     make_cost(scalar(1.0), scalar(1.0), scalar(0.0)));
    CHECK(sol.P(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.K.K(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("CARE: random residual check and Hurwitz closed loop") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int nx = 3;
        const int nu = 1 + static_cast<int>(rng() % 2);
        LinearDynamics sys;
        sys.A = test_util::random_matrix(rng, nx, nx);
        sys.B = test_util::random_matrix(rng, nx, nu);
        sys.domain = TimeDomain::continuous;
        if (!is_stabilizable(sys)) continue;
        StageCost cost = make_cost(test_util::random_spd(rng, nx), test_util::random_spd(rng, nu),
                                   Matrix::Zero(nu, nx));
        auto sol = solve_care(sys, cost);
        const Matrix res = sys.A.transpose() * sol.P + sol.P * sys.A + cost.Q -
                           (cost.S.transpose() + sol.P * sys.B) * sol.K.K;
        CHECK(res.norm() <= 1e-9 * (1.0 + cost.Q.norm() + sys.A.norm() * sol.P.norm()));
        CHECK(spectral_abscissa(sys.A - sys.B * sol.K.K) < 0.0);
    }
}

TEST_CASE("ZOH: closed forms") {
    LinearDynamics sys;
    sys.domain = TimeDomain::continuous;

    SUBCASE("zero dynamics") {
        sys.A = Matrix::Zero(2, 2);
        sys.B = (Matrix(2, 1) << 0.3, -1.4).finished();
        auto d = discretize_zoh(sys, 2.0);
        CHECK((d.A - Matrix::Identity(2, 2)).norm() < 1e-12);
        CHECK((d.B - 2.0 * sys.B).norm() < 1e-12);
    }
    SUBCASE("scalar exponential") {
        sys.A = scalar(1.0);
        sys.B = scalar(1.0);
        auto d = discretize_zoh(sys, std::log(2.0));
        CHECK(d.A(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(d.B(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("nilpotent series truncates") {
        sys.A = (Matrix(2, 2) << 0, 1, 0, 0).finished();
        sys.B = (Matrix(2, 1) << 0, 1).finished();
        auto d = discretize_zoh(sys, 1.0);
        CHECK((d.A - (Matrix(2, 2) << 1, 1, 0, 1).finished()).norm() < 1e-12);
        CHECK((d.B - (Matrix(2, 1) << 0.5, 1).finished()).norm() < 1e-12);
    }
}

TEST_CASE("ZOH: eigenvalue map on random diagonalizable A") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 4);
        LinearDynamics sys;
        sys.A = test_util::random_matrix(rng, n, n);
        sys.B = test_util::random_matrix(rng, n, 1);
        sys.domain = TimeDomain::continuous;
        const double ts = 0.37;
        auto d = discretize_zoh(sys, ts);

        Eigen::EigenSolver<Matrix> es_c(sys.A, false);
        Eigen::EigenSolver<Matrix> es_d(d.A, false);
        std::vector<std::complex<double>> mapped(n), got(n);
        for (int i = 0; i < n; ++i) {
            mapped[i] = std::exp(ts * es_c.eigenvalues()(i));
            got[i] = es_d.eigenvalues()(i);
        }
        auto key = [](const std::complex<double>& a, const std::complex<double>& b) {
            return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
        };
        std::sort(mapped.begin(), mapped.end(), key);
        std::sort(got.begin(), got.end(), key);
        for (int i = 0; i < n; ++i) CHECK(std::abs(mapped[i] - got[i]) < 1e-8);
    }
}

TEST_CASE("stability report") {
    CHECK(stability_report(scalar(0.5), TimeDomain::discrete).value == doctest::Approx(0.5));
    CHECK(stability_report(scalar(0.5), TimeDomain::discrete).is_stable);
    // paper's closed loop A - B K_hat = -0.92
    CHECK(stability_report(scalar(-0.92), TimeDomain::discrete).value == doctest::Approx(0.92));
    CHECK(stability_report(scalar(-0.92), TimeDomain::discrete).is_stable);
    CHECK_FALSE(stability_report(scalar(1.0), TimeDomain::discrete).is_stable);
    CHECK_FALSE(stability_report(scalar(0.0), TimeDomain::continuous).is_stable);
    CHECK(stability_report(scalar(-2.0), TimeDomain::continuous).value == doctest::Approx(-2.0));
}

TEST_CASE("stabilizability PBH test") {
    CHECK(is_stabilizable(make_sys(scalar(2.0), scalar(1.0), TimeDomain::discrete)));
    CHECK_FALSE(is_stabilizable(make_sys(scalar(2.0), scalar(0.0), TimeDomain::discrete)));

    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = 0.5;
    A(1, 1) = 2.0;
    const Matrix B = (Matrix(2, 1) << 1, 0).finished();
    CHECK_FALSE(is_stabilizable(make_sys(A, B, TimeDomain::discrete)));

    // the unstable-but-reachable sibling is stabilizable
    const Matrix B2 = (Matrix(2, 1) << 0, 1).finished();
    CHECK(is_stabilizable(make_sys(A, B2, TimeDomain::discrete)));
}
