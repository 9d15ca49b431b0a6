#include "ctrlmatch/matching.hpp"

#include "ctrlmatch/numerics.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctrlmatch;
using test_util::error_code_of;
using test_util::scalar;

namespace {

LinearDynamics gamma_example_sys() {
    LinearDynamics sys;
    sys.A = scalar(-0.8);
    sys.B = (Matrix(1, 3) << 0.1, 0.1, 0.1).finished();
    return sys;
}

Gain gamma_example_gain() { return Gain{(Matrix(3, 1) << 0.5, 0.5, 0.2).finished()}; }

// conditioning of the solution printed in the reference experiment
constexpr double kPrintedHCond = 22.790344;

}  // namespace

TEST_CASE("match_direct: three-input example reproduces the printed conditioning") {
    const auto sys = gamma_example_sys();
    const auto k_hat = gamma_example_gain();
    const MatchResult res = match_direct(sys, k_hat);
    CHECK((res.k_verified.K - k_hat.K).lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + 0.5));
    CHECK(min_eig_sym(res.h()) > 1e-8);
    CHECK(min_eig_sym(*res.cost.P) > 1e-8);
    CHECK(res.kappa_h <= res.beta + 1e-6);
    CHECK(std::abs(res.beta - kPrintedHCond) / kPrintedHCond < 0.05);
}

TEST_CASE("match_direct: an LQR gain is recovered") {
    std::mt19937_64 rng(3);
    auto loop = test_util::random_stabilizable_loop(rng, 3, 2);
    const MatchResult res = match_direct(loop.sys, loop.k_hat);
    CHECK((res.k_verified.K - loop.k_hat.K).lpNorm<Eigen::Infinity>() <=
          1e-6 * (1.0 + loop.k_hat.K.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("match_direct: destabilizing gain is rejected up front") {
    LinearDynamics sys;
    sys.A = scalar(0.9);
    sys.B = scalar(0.1);
    CHECK(error_code_of([&] { match_direct(sys, Gain{scalar(-2.0)}); }) ==
          ErrorCode::DestabilizingGain);
}

TEST_CASE("match_indirect: scalar system") {
    LinearDynamics sys;
    sys.A = scalar(0.9);
    sys.B = scalar(0.1);
    const MatchResult res = match_indirect(sys, Gain{scalar(0.5)}, Matrix::Identity(1, 1));
    CHECK(res.k_verified.K(0, 0) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(min_eig_sym(res.h()) > 1e-8);
}

TEST_CASE("match_indirect: the matched gain does not depend on Gamma") {
    const auto sys = gamma_example_sys();
    const auto k_hat = gamma_example_gain();
    Matrix gamma2 = Matrix::Identity(3, 3);
    gamma2(1, 1) = 100.0;
    const MatchResult r1 = match_indirect(sys, k_hat, Matrix::Identity(3, 3));
    const MatchResult r2 = match_indirect(sys, k_hat, gamma2);
    CHECK((r1.k_verified.K - k_hat.K).lpNorm<Eigen::Infinity>() <= 2e-6);
    CHECK((r2.k_verified.K - k_hat.K).lpNorm<Eigen::Infinity>() <= 2e-6);
}

TEST_CASE("match_indirect: zero feedback yields S = -B'PA") {
    LinearDynamics sys;
    sys.A = scalar(0.7);
    sys.B = scalar(1.0);
    const MatchResult res = match_indirect(sys, Gain{scalar(0.0)}, Matrix::Identity(1, 1) * 2.0);
    const Matrix P = *res.cost.P;
    CHECK((res.cost.S - (-sys.B.transpose() * P * sys.A)).lpNorm<Eigen::Infinity>() < 1e-7);
    CHECK(res.k_verified.K(0, 0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(res.gamma_used.has_value());
}

TEST_CASE("match_indirect: gamma must be SPD") {
    LinearDynamics sys;
    sys.A = scalar(0.9);
    sys.B = scalar(0.1);
    CHECK(error_code_of([&] {
              match_indirect(sys, Gain{scalar(0.5)}, -Matrix::Identity(1, 1));
          }) == ErrorCode::GammaNotSPD);
}

TEST_CASE("match_gamma_opt: agrees with match_direct") {
    const auto sys = gamma_example_sys();
    const auto k_hat = gamma_example_gain();
    const MatchResult direct = match_direct(sys, k_hat);
    const MatchResult go = match_gamma_opt(sys, k_hat);
    CHECK(std::abs(direct.beta - go.beta) <= 1e-6 * std::max(1.0, direct.beta));
    CHECK((go.k_verified.K - k_hat.K).lpNorm<Eigen::Infinity>() <= 2e-6);
}

TEST_CASE("match_gamma_opt: zero feedback on a stable scalar plant") {
    // For A=0.5, B=1, K_hat=0 the feasible costs have S = -(2/3) Q and the
    // best achievable kappa(H) is found by a brute-force grid over the one
    // remaining degree of freedom (R, with Q normalized to 1).
    LinearDynamics sys;
    sys.A = scalar(0.5);
    sys.B = scalar(1.0);
    double best_kappa = std::numeric_limits<double>::infinity();
    for (double r = 0.05; r < 40.0; r += 0.001) {
        Matrix H(2, 2);
        H << 1.0, -2.0 / 3.0, -2.0 / 3.0, r;
        const double lo = min_eig_sym(H);
        if (lo <= 0.0) continue;
        best_kappa = std::min(best_kappa, max_eig_sym(H) / lo);
    }
    MatchOptions opts;
    opts.objective = CondObjective::min_cond_h;
    const MatchResult res = match_gamma_opt(sys, Gain{scalar(0.0)}, opts);
    CHECK(res.k_verified.K(0, 0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(res.beta == doctest::Approx(best_kappa).epsilon(1e-3));

    CHECK(error_code_of([&] {
              LinearDynamics bad;
              bad.A = scalar(0.9);
              bad.B = scalar(0.1);
              match_gamma_opt(bad, Gain{scalar(-2.0)});
          }) == ErrorCode::DestabilizingGain);
}

TEST_CASE("match_constructive: zero feedback keeps the seed cost") {
    LinearDynamics sys;
    sys.A = scalar(0.5);
    sys.B = scalar(1.0);
    const Matrix qbar = scalar(1.0);
    const MatchResult res = match_constructive(sys, Gain{scalar(0.0)}, qbar, scalar(2.0));
    // with K_hat = 0: Q = Qbar, S = Sbar, R = Rbar
    CHECK(res.cost.Q(0, 0) == doctest::Approx(1.0));
    const Matrix Pbar = solve_lyapunov_discrete(sys.A, qbar);
    const Matrix Sbar = -sys.B.transpose() * Pbar * sys.A;
    CHECK(res.cost.S(0, 0) == doctest::Approx(Sbar(0, 0)));
    CHECK(res.k_verified.K(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("match_constructive: three-input example round trip") {
    const auto sys = gamma_example_sys();
    const auto k_hat = gamma_example_gain();
    const MatchResult res =
        match_constructive(sys, k_hat, Matrix::Identity(1, 1), Matrix::Identity(3, 3));
    CHECK((res.k_verified.K - k_hat.K).lpNorm<Eigen::Infinity>() <= 1e-6 * 1.5);
    // Schur-complement certificate of the existence proof
    const Matrix Pbar = solve_lyapunov_discrete(sys.A - sys.B * k_hat.K, Matrix::Identity(1, 1));
    const Matrix Sbar = -sys.B.transpose() * Pbar * (sys.A - sys.B * k_hat.K);
    const Matrix lhs = res.cost.Q - res.cost.S.transpose() *
                                        res.cost.R.ldlt().solve(res.cost.S);
    Matrix rbar = res.cost.R;
    const Matrix rhs = Matrix::Identity(1, 1) - Sbar.transpose() * rbar.ldlt().solve(Sbar);
    CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(min_eig_sym(lhs) > 0.0);
}

TEST_CASE("match_constructive: continuous-time path") {
    LinearDynamics sys;
    sys.A = scalar(-1.0);
    sys.B = scalar(1.0);
    sys.domain = TimeDomain::continuous;
    const MatchResult res =
        match_constructive(sys, Gain{scalar(2.0)}, Matrix::Identity(1, 1), Matrix::Identity(1, 1));
    CHECK(res.k_verified.K(0, 0) == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(min_eig_sym(res.h()) > 0.0);
}

TEST_CASE("match_constructive: Rbar seed inflation is recorded") {
    const auto sys = gamma_example_sys();
    const auto k_hat = gamma_example_gain();
    const MatchResult res =
        match_constructive(sys, k_hat, Matrix::Identity(1, 1), 1e-6 * Matrix::Identity(3, 3));
    CHECK(res.rbar_inflated);
    CHECK((res.k_verified.K - k_hat.K).lpNorm<Eigen::Infinity>() <= 2e-6);
}

TEST_CASE("apply_cost_transformation: gain invariance") {
    LinearDynamics sys;
    sys.A = scalar(0.9);
    sys.B = scalar(0.1);
    const MatchResult base = match_indirect(sys, Gain{scalar(0.5)}, Matrix::Identity(1, 1));

    SUBCASE("pure scaling") {
        const StageCost t =
            apply_cost_transformation(base.cost, Matrix::Zero(1, 1), Matrix::Zero(1, 1), 2.0, sys);
        const auto sol = solve_dare(sys, t);
        CHECK(std::abs(sol.K.K(0, 0) - 0.5) < 1e-10);
    }
    SUBCASE("P1 shift") {
        const StageCost t = apply_cost_transformation(base.cost, 0.2 * Matrix::Identity(1, 1),
                                                      Matrix::Zero(1, 1), 1.0, sys);
        const auto sol = solve_dare(sys, t);
        CHECK(std::abs(sol.K.K(0, 0) - 0.5) < 1e-8);
        CHECK((t.assemble_h() - base.h()).lpNorm<Eigen::Infinity>() > 1e-3);  // distinct cost
    }
    SUBCASE("P2 shift") {
        const StageCost t = apply_cost_transformation(base.cost, Matrix::Zero(1, 1),
                                                      0.2 * Matrix::Identity(1, 1), 1.0, sys);
        const auto sol = solve_dare(sys, t);
        CHECK(std::abs(sol.K.K(0, 0) - 0.5) < 1e-8);
    }
    SUBCASE("proviso violation") {
        CHECK(error_code_of([&] {
                  apply_cost_transformation(base.cost, -100.0 * Matrix::Identity(1, 1),
                                            Matrix::Zero(1, 1), 1.0, sys);
              }) == ErrorCode::ProvisoViolated);
    }
}

TEST_CASE("verify_match: indefinite example cost") {
    LinearDynamics sys;
    sys.A = scalar(0.9);
    sys.B = scalar(0.1);
    StageCost cost;
    cost.Q = scalar(4.0);
    cost.R = scalar(1.0);
    cost.S = scalar(-2.0);
    const auto v = verify_match(sys, cost, Gain{scalar(-2.0)});
    CHECK(v.gain_error == doctest::Approx(2.0 - 1.0 / 11.0).epsilon(1e-6));
    CHECK_FALSE(v.stabilizing);

    const auto self = verify_match(sys, cost, Gain{scalar(-1.0 / 11.0)});
    CHECK(self.gain_error < 1e-8);
    CHECK(self.stabilizing);
}

TEST_CASE("matching soundness on random systems, all formulations") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 12; ++trial) {
        const int nx = 1 + static_cast<int>(rng() % 4);
        const int nu = 1 + static_cast<int>(rng() % 2);
        auto loop = test_util::random_stabilizable_loop(rng, nx, nu);
        const double tol = 1e-6 * (1.0 + loop.k_hat.K.lpNorm<Eigen::Infinity>());

        const MatchResult d = match_direct(loop.sys, loop.k_hat);
        const MatchResult g = match_gamma_opt(loop.sys, loop.k_hat);
        const MatchResult i =
            match_indirect(loop.sys, loop.k_hat, Matrix::Identity(nu, nu));
        const MatchResult c = match_constructive(loop.sys, loop.k_hat, Matrix::Identity(nx, nx),
                                                 Matrix::Identity(nu, nu));
        for (const MatchResult* r : {&d, &g, &i, &c}) {
            CHECK(min_eig_sym(r->h()) > 0.0);
            CHECK(min_eig_sym(*r->cost.P) > 0.0);
            CHECK((r->k_verified.K - loop.k_hat.K).lpNorm<Eigen::Infinity>() <= tol);
            CHECK(r->kappa_h <= r->beta * (1.0 + 1e-6));
        }
        CHECK(std::abs(d.beta - g.beta) <= 1e-6 * std::max(1.0, d.beta));

        // scaling freedom leaves the argmin untouched
        for (double sigma : {0.5, 2.0, 10.0}) {
            StageCost scaled = StageCost::from_h(sigma * d.h(), nx);
            const auto sol = solve_dare(loop.sys, scaled);
            CHECK((sol.K.K - d.k_verified.K).lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + tol));
        }
    }
}
