#include "ctrlmatch/mpc.hpp"

#include "ctrlmatch/matching.hpp"
#include "ctrlmatch/numerics.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctrlmatch;
using test_util::error_code_of;
using test_util::scalar;

namespace {

LinearDynamics gamma_sys() {
    LinearDynamics sys;
    sys.A = scalar(-0.8);
    sys.B = (Matrix(1, 3) << 0.1, 0.1, 0.1).finished();
    return sys;
}

Gain gamma_gain() { return Gain{(Matrix(3, 1) << 0.5, 0.5, 0.2).finished()}; }

ConstraintSet state_bound() {
    // x <= 0.7 as a stage constraint row
    return {scalar(1.0), Matrix::Zero(1, 3), Vector::Constant(1, -0.7)};
}

Polyhedron terminal_bound() { return {scalar(1.0), Vector::Constant(1, 0.7)}; }

Matrix printed_h() {
    Matrix H(4, 4);
    H << 1.3128, 0.6917, 0.7088, 0.4775,  //
        0.6917, 1.1610, -0.1849, 0.1173,  //
        0.7088, -0.1849, 1.2435, -0.0036, //
        0.4775, 0.1173, -0.0036, 1.2021;
    return H;
}

}  // namespace

TEST_CASE("solve_qp: clipped scalar minimum with unit multiplier") {
    QuadProgram qp;
    qp.G = scalar(2.0);
    qp.a = Vector::Constant(1, -2.0);  // (u-1)^2
    qp.E = Matrix::Zero(0, 1);
    qp.t = Vector::Zero(0);
    qp.M = scalar(1.0);
    qp.d = Vector::Constant(1, 0.5);
    const auto sol = solve_qp(qp);
    CHECK(sol.z(0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(sol.multipliers(0) == doctest::Approx(1.0).epsilon(1e-7));

    qp.M = Matrix::Zero(0, 1);
    qp.d = Vector::Zero(0);
    qp.a.setZero();
    CHECK(solve_qp(qp).z(0) == doctest::Approx(0.0));
}

TEST_CASE("solve_qp: infeasible rows are reported") {
    QuadProgram qp;
    qp.G = scalar(2.0);
    qp.a = Vector::Zero(1);
    qp.E = Matrix::Zero(0, 1);
    qp.t = Vector::Zero(0);
    qp.M = (Matrix(2, 1) << 1, -1).finished();
    qp.d = (Vector(2) << -2, 1).finished();
    CHECK(error_code_of([&] { solve_qp(qp); }) == ErrorCode::Infeasible);
}

TEST_CASE("solve_qp: random strictly convex problems satisfy the KKT conditions") {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 4);
        const int k = 1 + static_cast<int>(rng() % 5);
        QuadProgram qp;
        qp.G = test_util::random_spd(rng, n, 0.5);
        qp.a = test_util::random_matrix(rng, n, 1);
        qp.E = Matrix::Zero(0, n);
        qp.t = Vector::Zero(0);
        qp.M = Matrix(k + 2 * n, n);
        qp.M.topRows(k) = test_util::random_matrix(rng, k, n);
        qp.M.middleRows(k, n) = Matrix::Identity(n, n);
        qp.M.bottomRows(n) = -Matrix::Identity(n, n);
        qp.d = Vector(k + 2 * n);
        qp.d.head(k) = test_util::random_matrix(rng, k, 1).cwiseAbs();
        qp.d.tail(2 * n).setConstant(3.0);
        const auto sol = solve_qp(qp);
        // primal feasibility
        CHECK((qp.M * sol.z - qp.d).maxCoeff() <= 1e-7);
        // stationarity
        const Vector grad = qp.G * sol.z + qp.a + qp.M.transpose() * sol.multipliers;
        CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + sol.multipliers.norm()));
        // complementarity and sign
        for (int i = 0; i < qp.M.rows(); ++i) {
            CHECK(sol.multipliers(i) >= -1e-9);
            const double slack = qp.d(i) - qp.M.row(i).dot(sol.z);
            CHECK(sol.multipliers(i) * slack <= 1e-5);
        }
    }
}

TEST_CASE("build_mpc: shapes and validation") {
    const auto sys = gamma_sys();
    const MatchResult match = match_indirect(sys, gamma_gain(), Matrix::Identity(3, 3));
    const auto problem = build_mpc(sys, match.cost, state_bound(), terminal_bound(), 1);
    const QuadProgram qp = assemble_qp(problem, Vector::Constant(1, -1.0));
    CHECK(qp.dim() == 2 * 1 + 3);  // x0, x1 and three inputs
    CHECK(qp.M.rows() == 2);       // one stage row plus the terminal row

    StageCost no_p = match.cost;
    no_p.P.reset();
    CHECK(error_code_of([&] { build_mpc(sys, no_p, state_bound(), terminal_bound(), 1); }) ==
          ErrorCode::NotPositiveDefinite);
}

TEST_CASE("mpc_step: reference control vectors at the constrained state") {
    const auto sys = gamma_sys();
    const auto k_hat = gamma_gain();
    const Vector x0 = Vector::Constant(1, -1.0);

    SUBCASE("identity weighting") {
        const MatchResult match = match_indirect(sys, k_hat, Matrix::Identity(3, 3));
        const auto problem = build_mpc(sys, match.cost, state_bound(), terminal_bound(), 1);
        const auto step = mpc_step(problem, x0);
        const Vector expect = (Vector(3) << -0.2333, -0.2333, -0.5333).finished();
        CHECK((step.u0 - expect).lpNorm<Eigen::Infinity>() < 1e-3);
        CHECK(step.constrained);
    }
    SUBCASE("heavily weighted second input") {
        Matrix gamma2 = Matrix::Identity(3, 3);
        gamma2(1, 1) = 100.0;
        const MatchResult match = match_indirect(sys, k_hat, gamma2);
        const auto problem = build_mpc(sys, match.cost, state_bound(), terminal_bound(), 1);
        const auto step = mpc_step(problem, x0);
        const Vector expect = (Vector(3) << -0.5945, 0.4891, -0.8945).finished();
        CHECK((step.u0 - expect).lpNorm<Eigen::Infinity>() < 1e-3);
    }
    SUBCASE("printed direct-formulation cost") {
        StageCost cost = StageCost::from_h(printed_h(), 1);
        cost.P = solve_dare(sys, cost).P;
        const auto problem = build_mpc(sys, cost, state_bound(), terminal_bound(), 1);
        const auto step = mpc_step(problem, x0);
        const Vector expect = (Vector(3) << -0.2849, -0.2923, -0.4228).finished();
        CHECK((step.u0 - expect).lpNorm<Eigen::Infinity>() < 1e-3);
    }
}

TEST_CASE("mpc_step: unconstrained states reproduce the matched gain") {
    const auto sys = gamma_sys();
    const auto k_hat = gamma_gain();
    const MatchResult match = match_direct(sys, k_hat);
    const Polyhedron mpi = compute_mpi(sys.A - sys.B * k_hat.K,
                                       closed_loop_constraints(scalar(1.0), Matrix::Zero(1, 3),
                                                               Vector::Constant(1, -0.7), k_hat));
    std::mt19937_64 rng(81);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int N : {1, 5, 20}) {
        const auto problem = build_mpc(sys, match.cost, state_bound(), mpi, N);
        for (int draw = 0; draw < 15; ++draw) {
            Vector x0(1);
            x0(0) = -0.7 / 0.92 + unit(rng) * (0.7 + 0.7 / 0.92);
            if (!contains(mpi, x0)) continue;
            const auto step = mpc_step(problem, x0);
            const Vector expect = -k_hat.K * x0;
            CHECK((step.u0 - expect).lpNorm<Eigen::Infinity>() <=
                  1e-6 * (1.0 + x0.lpNorm<Eigen::Infinity>()));
            CHECK_FALSE(step.constrained);
        }
    }
}

TEST_CASE("mpc_step: sparse and condensed forms agree") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 6; ++trial) {
        auto loop = test_util::random_stabilizable_loop(rng, 2 + (trial % 2), 1 + (trial % 2));
        const MatchResult match =
            match_constructive(loop.sys, loop.k_hat, Matrix::Identity(loop.sys.nx(), loop.sys.nx()),
                               Matrix::Identity(loop.sys.nu(), loop.sys.nu()));
        // loose box so some but not all rows can bind
        ConstraintSet cs;
        cs.C = Matrix::Zero(2 * loop.sys.nu(), loop.sys.nx());
        cs.D = Matrix(2 * loop.sys.nu(), loop.sys.nu());
        cs.D.topRows(loop.sys.nu()).setIdentity();
        cs.D.bottomRows(loop.sys.nu()) = -Matrix::Identity(loop.sys.nu(), loop.sys.nu());
        cs.e = Vector::Constant(2 * loop.sys.nu(), -0.4);

        auto sparse = build_mpc(loop.sys, match.cost, cs, Polyhedron::unbounded(loop.sys.nx()), 6,
                                QpForm::sparse);
        auto cond = sparse;
        cond.form = QpForm::condensed;
        const Vector x0 = test_util::random_matrix(rng, loop.sys.nx(), 1);
        try {
            const auto s1 = mpc_step(sparse, x0);
            const auto s2 = mpc_step(cond, x0);
            CHECK((s1.u_traj - s2.u_traj).lpNorm<Eigen::Infinity>() <= 1e-8);
            CHECK((s1.stage_multipliers - s2.stage_multipliers).lpNorm<Eigen::Infinity>() <= 1e-6);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InfeasibleInitialState);
        }
    }
}

TEST_CASE("mpc_step: infeasible initial state raises") {
    const auto sys = gamma_sys();
    const MatchResult match = match_direct(sys, gamma_gain());
    // x0 deep beyond what one step can recover with the terminal bound
    ConstraintSet cs;
    cs.C = Matrix::Zero(2, 1);
    cs.D = Matrix::Zero(2, 3);
    cs.D.row(0) = Matrix::Ones(1, 3);
    cs.D.row(1) = -Matrix::Ones(1, 3);
    cs.e = Vector::Constant(2, -0.05);  // |sum u| <= 0.05
    const auto problem = build_mpc(sys, match.cost, cs, terminal_bound(), 1);
    CHECK(error_code_of([&] { mpc_step(problem, Vector::Constant(1, -2.0)); }) ==
          ErrorCode::InfeasibleInitialState);
}

TEST_CASE("deviation identity") {
    const auto sys = gamma_sys();
    const auto k_hat = gamma_gain();
    const MatchResult match = match_gamma_opt(sys, k_hat);
    const Matrix gamma_dev = match.cost.R + sys.B.transpose() * (*match.cost.P) * sys.B;
    CHECK(min_eig_sym(gamma_dev) > 0.0);

    SUBCASE("matched rollout collapses to the cost-to-go") {
        const int N = 8;
        Matrix xs(1, N + 1), us(3, N);
        xs(0, 0) = 0.9;
        for (int k = 0; k < N; ++k) {
            us.col(k) = -k_hat.K * xs.col(k);
            xs.col(k + 1) = sys.A * xs.col(k) + sys.B * us.col(k);
        }
        const auto check = deviation_identity_check(match.cost, k_hat, sys, xs, us);
        CHECK(check.gap <= 1e-8 * (1.0 + std::abs(check.lhs)));
        const double expect = xs.col(0).dot(*match.cost.P * xs.col(0));
        CHECK(check.rhs == doctest::Approx(expect).epsilon(1e-10));
    }
    SUBCASE("random feasible trajectories") {
        std::mt19937_64 rng(91);
        for (int trial = 0; trial < 20; ++trial) {
            const int N = 3 + static_cast<int>(rng() % 5);
            Matrix xs(1, N + 1), us(3, N);
            xs.col(0) = test_util::random_matrix(rng, 1, 1);
            for (int k = 0; k < N; ++k) {
                us.col(k) = test_util::random_matrix(rng, 3, 1);
                xs.col(k + 1) = sys.A * xs.col(k) + sys.B * us.col(k);
            }
            const auto check = deviation_identity_check(match.cost, k_hat, sys, xs, us);
            CHECK(check.gap <= 1e-8 * (1.0 + std::abs(check.lhs)));
        }
    }
    SUBCASE("zero trajectory") {
        Matrix xs = Matrix::Zero(1, 3);
        Matrix us = Matrix::Zero(3, 2);
        const auto check = deviation_identity_check(match.cost, k_hat, sys, xs, us);
        CHECK(check.lhs == 0.0);
        CHECK(check.rhs == 0.0);
    }
    SUBCASE("dynamics violations are rejected") {
        Matrix xs = Matrix::Ones(1, 3);
        Matrix us = Matrix::Zero(3, 2);
        CHECK(error_code_of([&] {
                  deviation_identity_check(match.cost, k_hat, sys, xs, us);
              }) == ErrorCode::InfeasibleTrajectory);
    }
}

TEST_CASE("nmpc: linear dynamics reproduce linear MPC after one iteration") {
    std::mt19937_64 rng(97);
    auto loop = test_util::random_stabilizable_loop(rng, 3, 2);
    const MatchResult match = match_constructive(loop.sys, loop.k_hat, Matrix::Identity(3, 3),
                                                 Matrix::Identity(2, 2));
    ConstraintSet cs;
    cs.C = Matrix::Zero(2, 3);
    cs.D = (Matrix(2, 2) << 1, 0, -1, 0).finished();
    cs.e = Vector::Constant(2, -0.3);

    const auto lin_problem =
        build_mpc(loop.sys, match.cost, cs, Polyhedron::unbounded(3), 5, QpForm::sparse);

    NmpcProblem nl;
    const Matrix A = loop.sys.A;
    const Matrix B = loop.sys.B;
    nl.dynamics.f = [A, B](const Vector& x, const Vector& u) { return Vector(A * x + B * u); };
    nl.cost = match.cost;
    nl.constraints = cs;
    nl.terminal_set = Polyhedron::unbounded(3);
    nl.horizon = 5;
    nl.x_ref = Vector::Zero(3);
    nl.u_ref = Vector::Zero(2);

    for (int trial = 0; trial < 5; ++trial) {
        const Vector x0 = 0.5 * test_util::random_matrix(rng, 3, 1);
        const auto lin = mpc_step(lin_problem, x0);
        const auto nlstep = nmpc_sqp_step(nl, x0);
        CHECK(nlstep.converged);
        CHECK(nlstep.iterations == 2);  // exact step plus the zero-step confirmation
        CHECK((nlstep.u0 - lin.u0).lpNorm<Eigen::Infinity>() <= 1e-9 * (1.0 + lin.u0.norm()));
    }
}

TEST_CASE("nmpc: equilibrium start returns the reference input") {
    NmpcProblem nl;
    nl.dynamics.f = [](const Vector& x, const Vector& u) {
        Vector out(1);
        out(0) = 0.5 * x(0) + u(0) + 0.05 * x(0) * x(0);
        return out;
    };
    StageCost cost;
    cost.Q = scalar(1.0);
    cost.R = scalar(1.0);
    cost.S = Matrix::Zero(1, 1);
    LinearDynamics lin;
    lin.A = scalar(0.5);
    lin.B = scalar(1.0);
    cost.P = solve_dare(lin, cost).P;
    nl.cost = cost;
    nl.constraints = ConstraintSet::none(1, 1);
    nl.terminal_set = Polyhedron::unbounded(1);
    nl.horizon = 4;
    nl.x_ref = Vector::Zero(1);
    nl.u_ref = Vector::Zero(1);

    const auto step = nmpc_sqp_step(nl, Vector::Zero(1));
    CHECK(step.converged);
    CHECK(std::abs(step.u0(0)) <= 1e-10);
}

TEST_CASE("nmpc: quadratic feedback-error order on a smooth nonlinear plant") {
    // match a gain on the linearization, then check
    // ||u0(xs + d) - us + K (d)|| = O(||d||^2) via the ratio test
    LinearDynamics lin;
    lin.A = (Matrix(2, 2) << 0.9, 0.2, -0.1, 0.8).finished();
    lin.B = (Matrix(2, 1) << 0.1, 0.4).finished();

    NmpcProblem nl;
    const Matrix A = lin.A;
    const Matrix B = lin.B;
    nl.dynamics.f = [A, B](const Vector& x, const Vector& u) {
        Vector out = A * x + B * u;
        out(0) += 0.15 * x(1) * x(1);
        out(1) += 0.1 * x(0) * x(1) - 0.05 * u(0) * u(0);
        return out;
    };

    StageCost seed;
    seed.Q = Matrix::Identity(2, 2);
    seed.R = Matrix::Identity(1, 1);
    seed.S = Matrix::Zero(1, 2);
    const auto lqr = solve_dare(lin, seed);
    const MatchResult match =
        match_constructive(lin, lqr.K, Matrix::Identity(2, 2), Matrix::Identity(1, 1));
    nl.cost = match.cost;
    nl.constraints = ConstraintSet::none(2, 1);
    nl.terminal_set = Polyhedron::unbounded(2);
    nl.horizon = 6;
    nl.x_ref = Vector::Zero(2);
    nl.u_ref = Vector::Zero(1);

    const Vector dir = (Vector(2) << 0.6, -0.8).finished();
    auto error_at = [&](double delta) {
        const Vector x0 = delta * dir;
        const auto step = nmpc_sqp_step(nl, x0);
        return (step.u0 + lqr.K.K * x0).lpNorm<Eigen::Infinity>();
    };
    const double e1 = error_at(0.0125);
    const double e2 = error_at(0.00625);
    const double ratio = e1 / e2;
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);
}
