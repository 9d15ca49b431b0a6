#include "ctrlmatch/sdp.hpp"

#include "ctrlmatch/numerics.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctrlmatch;

TEST_CASE("lmi: largest eigenvalue bound of a constant matrix") {
    LmiProblem prob;
    AffineMatrix beta = prob.scalar_variable("beta");
    Matrix D = Matrix::Zero(2, 2);
    D(0, 0) = 1.0;
    D(1, 1) = 2.0;
    prob.minimize(beta);
    prob.add_psd(beta * Matrix::Identity(2, 2) - AffineMatrix(D));
    prob.add_psd(AffineMatrix(D - Matrix::Identity(2, 2)));
    auto sol = solve_lmi(prob, 1e-9);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective_value == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(sol.max_residual <= 1e-9);
}

TEST_CASE("lmi: free 1x1 matrix variable squeezes to beta = 1") {
    LmiProblem prob;
    AffineMatrix beta = prob.scalar_variable("beta");
    AffineMatrix X = prob.symmetric_variable("X", 1);
    prob.minimize(beta);
    prob.add_psd(beta * Matrix::Identity(1, 1) - X);
    prob.add_psd(X - AffineMatrix(Matrix::Identity(1, 1)));
    auto sol = solve_lmi(prob, 1e-9);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective_value == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(prob.scalar_value("beta", sol.y) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(prob.value("X", sol.y)(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lmi: contradictory cones are reported infeasible") {
    LmiProblem prob;
    AffineMatrix X = prob.symmetric_variable("X", 2);
    prob.add_psd(X - AffineMatrix(Matrix::Identity(2, 2)));
    prob.add_psd(-X);
    auto sol = solve_lmi(prob, 1e-9);
    CHECK(sol.status == SolveStatus::infeasible);
}

TEST_CASE("lmi: equality constraints are eliminated before the cone solve") {
    // min beta s.t. beta I >= X >= I with the off-diagonal entry pinned
    LmiProblem prob;
    AffineMatrix beta = prob.scalar_variable("beta");
    AffineMatrix X = prob.symmetric_variable("X", 2);
    prob.minimize(beta);
    prob.add_psd(beta * Matrix::Identity(2, 2) - X);
    prob.add_psd(X - AffineMatrix(Matrix::Identity(2, 2)));
    prob.add_zero(X.block(0, 1, 1, 1) - AffineMatrix(Matrix::Constant(1, 1, 0.3)));
    auto sol = solve_lmi(prob, 1e-9);
    REQUIRE(sol.status == SolveStatus::optimal);
    const Matrix Xv = prob.value("X", sol.y);
    CHECK(Xv(0, 1) == doctest::Approx(0.3).epsilon(1e-6));
    // optimal X has both diagonal entries equal, eigenvalues d -/+ 0.3
    CHECK(sol.objective_value == doctest::Approx(1.6).epsilon(1e-5));
}

TEST_CASE("lmi: inconsistent equalities are infeasible") {
    LmiProblem prob;
    AffineMatrix x = prob.scalar_variable("x");
    prob.add_zero(x - AffineMatrix(Matrix::Constant(1, 1, 1.0)));
    prob.add_zero(x - AffineMatrix(Matrix::Constant(1, 1, 2.0)));
    prob.add_nonneg(x);
    auto sol = solve_lmi(prob, 1e-9);
    CHECK(sol.status == SolveStatus::infeasible);
}

TEST_CASE("lmi: weak duality and scaling invariance") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 3);
        const Matrix A0 = test_util::random_spd(rng, n, 0.5);
        for (double scale : {1.0, 10.0}) {
            LmiProblem prob;
            AffineMatrix beta = prob.scalar_variable("beta");
            prob.minimize(beta);
            prob.add_psd(scale * (beta * Matrix::Identity(n, n) - AffineMatrix(A0)));
            prob.add_psd(AffineMatrix(scale * A0));
            auto sol = solve_lmi(prob, 1e-9);
            REQUIRE(sol.status == SolveStatus::optimal);
            CHECK(sol.objective_value >= sol.dual_objective - 1e-7);
            CHECK(sol.objective_value == doctest::Approx(max_eig_sym(A0)).epsilon(1e-6));
        }
    }
}

TEST_CASE("lp: scalar examples") {
    const Matrix F1 = Matrix::Ones(1, 1);
    auto sol = solve_lp(Vector::Ones(1), F1, Vector::Ones(1));
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-8));

    Matrix F2(2, 1);
    F2 << 1, 1;
    Vector g2(2);
    g2 << 1, 0.7;
    sol = solve_lp(Vector::Ones(1), F2, g2);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective == doctest::Approx(0.7).epsilon(1e-8));

    Matrix F3(2, 1);
    F3 << -1, 1;
    Vector g3(2);
    g3 << -2, 1;
    sol = solve_lp(Vector::Ones(1), F3, g3);
    CHECK(sol.status == SolveStatus::infeasible);
}

TEST_CASE("lp: unbounded direction is detected") {
    Matrix F(1, 1);
    F << -1;
    auto sol = solve_lp(Vector::Ones(1), F, Vector::Zero(1));
    CHECK(sol.status == SolveStatus::unbounded);
}

TEST_CASE("lp: small random problems satisfy feasibility and optimality") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const int k = n + 1 + static_cast<int>(rng() % 4);
        Matrix F = test_util::random_matrix(rng, k, n);
        Matrix Fb(k + 2 * n, n);
        Fb.topRows(k) = F;
        Fb.middleRows(k, n) = Matrix::Identity(n, n);
        Fb.bottomRows(n) = -Matrix::Identity(n, n);
        Vector g(k + 2 * n);
        g.head(k) = test_util::random_matrix(rng, k, 1).cwiseAbs();
        g.tail(2 * n).setConstant(5.0);
        Vector c = test_util::random_matrix(rng, n, 1);
        auto sol = solve_lp(c, Fb, g, 1e-9);
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK((Fb * sol.x - g).maxCoeff() <= 1e-7);
    }
}

TEST_CASE("lp and lmi agree on diagonal problems") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 2);
        Vector c = test_util::random_matrix(rng, n, 1);
        Vector lo = -test_util::random_matrix(rng, n, 1).cwiseAbs();
        Vector hi = test_util::random_matrix(rng, n, 1).cwiseAbs() + Vector::Ones(n);

        Matrix F(2 * n, n);
        F.topRows(n) = Matrix::Identity(n, n);
        F.bottomRows(n) = -Matrix::Identity(n, n);
        Vector g(2 * n);
        g.head(n) = hi;
        g.tail(n) = -lo;
        auto lp = solve_lp(-c, F, g, 1e-9);  // maximize -c'x == minimize c'x
        REQUIRE(lp.status == SolveStatus::optimal);

        LmiProblem prob;
        AffineMatrix obj = AffineMatrix::zero(1, 1);
        std::vector<AffineMatrix> xs;
        for (int i = 0; i < n; ++i) {
            xs.push_back(prob.scalar_variable("x" + std::to_string(i)));
            obj += c(i) * xs[i];
        }
        prob.minimize(obj);
        AffineMatrix upper = AffineMatrix::zero(n, n);
        AffineMatrix lower = AffineMatrix::zero(n, n);
        for (int i = 0; i < n; ++i) {
            Matrix Ei = Matrix::Zero(n, 1);
            Ei(i, 0) = 1.0;
            upper += Ei * (AffineMatrix(Matrix::Constant(1, 1, hi(i))) - xs[i]) * Ei.transpose();
            lower += Ei * (xs[i] - AffineMatrix(Matrix::Constant(1, 1, lo(i)))) * Ei.transpose();
        }
        prob.add_psd(upper);
        prob.add_psd(lower);
        auto lmi = solve_lmi(prob, 1e-9);
        REQUIRE(lmi.status == SolveStatus::optimal);
        CHECK(lmi.objective_value == doctest::Approx(-lp.objective).epsilon(1e-8));
    }
}

TEST_CASE("lmi: mixed nonneg rows and psd blocks") {
    // min t s.t. t >= x, x >= 0.5, diag(x, 1) PSD
    LmiProblem prob;
    AffineMatrix t = prob.scalar_variable("t");
    AffineMatrix x = prob.scalar_variable("x");
    prob.minimize(t);
    prob.add_nonneg(t - x);
    prob.add_nonneg(x - AffineMatrix(Matrix::Constant(1, 1, 0.5)));
    Matrix e0 = Matrix::Zero(2, 1);
    e0(0, 0) = 1.0;
    Matrix fixed = Matrix::Zero(2, 2);
    fixed(1, 1) = 1.0;
    prob.add_psd(e0 * x * e0.transpose() + AffineMatrix(fixed));
    auto sol = solve_lmi(prob, 1e-9);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective_value == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("lmi: problem dump is rendered") {
    LmiProblem prob;
    AffineMatrix beta = prob.scalar_variable("beta");
    prob.minimize(beta);
    prob.add_psd(beta * Matrix::Identity(1, 1));
    const std::string text = prob.dump();
    CHECK(text.find("beta") != std::string::npos);
    CHECK(text.find("psd[0]") != std::string::npos);
}
