#include "ctrlmatch/invariant.hpp"

#include "ctrlmatch/numerics.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctrlmatch;
using test_util::error_code_of;
using test_util::scalar;

namespace {

Polyhedron halfline() {
    // x <= 0.7, the state constraint of the scalar three-input example
    return {Matrix::Ones(1, 1), Vector::Constant(1, 0.7)};
}

}  // namespace

TEST_CASE("closed_loop_constraints") {
    SUBCASE("state constraint maps through unchanged") {
        const auto p = closed_loop_constraints(scalar(1.0), Matrix::Zero(1, 3),
                                               Vector::Constant(1, -0.7),
                                               Gain{(Matrix(3, 1) << 0.5, 0.5, 0.2).finished()});
        CHECK(p.F(0, 0) == 1.0);
        CHECK(p.g(0) == 0.7);
    }
    SUBCASE("input bounds map through the gain") {
        Matrix D(2, 1);
        D << 1, -1;
        Vector e(2);
        e << -1, -1;
        const Matrix K = (Matrix(1, 2) << 0.3, -0.2).finished();
        const auto p = closed_loop_constraints(Matrix::Zero(2, 2), D, e, Gain{K});
        CHECK((p.F - (Matrix(2, 2) << -0.3, 0.2, 0.3, -0.2).finished()).norm() < 1e-15);
        CHECK((p.g - Vector::Ones(2)).norm() == 0.0);
    }
    SUBCASE("homogeneous rows") {
        const auto p = closed_loop_constraints(scalar(1.0), scalar(0.0), Vector::Zero(1),
                                               Gain{scalar(0.0)});
        CHECK(p.g(0) == 0.0);
    }
}

TEST_CASE("contains") {
    const auto p = halfline();
    CHECK(contains(p, Vector::Constant(1, 0.7)));
    CHECK_FALSE(contains(p, Vector::Constant(1, 0.71)));
    CHECK(contains(Polyhedron::unbounded(2), Vector::Zero(2)));
}

TEST_CASE("remove_redundant") {
    SUBCASE("dominated row dropped") {
        Polyhedron p{(Matrix(2, 1) << 1, 1).finished(), (Vector(2) << 1, 2).finished()};
        const auto r = remove_redundant(p);
        REQUIRE(r.rows() == 1);
        CHECK(r.g(0) == 1.0);
    }
    SUBCASE("duplicate rows collapse to two") {
        Polyhedron p{(Matrix(3, 1) << 1, -1, 1).finished(), (Vector(3) << 1, 1, 1).finished()};
        const auto r = remove_redundant(p);
        CHECK(r.rows() == 2);
    }
    SUBCASE("diagonal cut outside a box is dropped") {
        Matrix F(5, 2);
        F << 1, 0, -1, 0, 0, 1, 0, -1, 1, 1;
        Vector g(5);
        g << 1, 1, 1, 1, 3;  // x + y <= 3 never binds inside the unit box
        const auto r = remove_redundant({F, g});
        CHECK(r.rows() == 4);
        for (int i = 0; i < r.rows(); ++i) CHECK(r.F.row(i).cwiseAbs().sum() == 1.0);
    }
    SUBCASE("empty polyhedron is rejected") {
        Polyhedron p{(Matrix(2, 1) << 1, -1).finished(), (Vector(2) << -2, 1).finished()};
        CHECK(error_code_of([&] { remove_redundant(p); }) == ErrorCode::EmptyPolyhedron);
    }
}

TEST_CASE("compute_mpi: scalar cases") {
    SUBCASE("contraction keeps the halfline") {
        const auto mpi = compute_mpi(scalar(0.5), halfline());
        REQUIRE(mpi.rows() == 1);
        CHECK(mpi.g(0) == doctest::Approx(0.7));
    }
    SUBCASE("oscillating loop adds the mirrored bound") {
        // A_K = -0.92: one pre-set step adds -0.92 x <= 0.7, then fixed point
        const auto mpi = compute_mpi(scalar(-0.92), halfline());
        REQUIRE(mpi.rows() == 2);
        double lower = -std::numeric_limits<double>::infinity();
        double upper = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 2; ++i) {
            if (mpi.F(i, 0) > 0) upper = mpi.g(i) / mpi.F(i, 0);
            if (mpi.F(i, 0) < 0) lower = mpi.g(i) / mpi.F(i, 0);
        }
        CHECK(upper == doctest::Approx(0.7));
        CHECK(lower == doctest::Approx(-0.7 / 0.92).epsilon(1e-10));
        CHECK_FALSE(contains(mpi, Vector::Constant(1, -1.0)));
    }
    SUBCASE("nilpotent map returns the constraint set") {
        Matrix F(2, 2);
        F << 1, 0, 0, 1;
        Vector g = Vector::Ones(2);
        const auto mpi = compute_mpi(Matrix::Zero(2, 2), {F, g});
        CHECK(mpi.rows() == 2);
    }
    SUBCASE("unstable loop is rejected") {
        CHECK(error_code_of([&] { compute_mpi(scalar(1.0), halfline()); }) ==
              ErrorCode::NotSchurStable);
    }
}

TEST_CASE("compute_mpi: invariance, maximality and idempotence") {
    std::mt19937_64 rng(77);
    int tested = 0;
    while (tested < 6) {
        const int n = 2 + static_cast<int>(rng() % 2);
        const Matrix A_K = test_util::random_schur(rng, n, 0.95);
        // box with a random tilt, contains the origin strictly
        Matrix F(2 * n + 1, n);
        F.topRows(n).setIdentity();
        F.middleRows(n, n) = -Matrix::Identity(n, n);
        F.bottomRows(1) = test_util::random_matrix(rng, 1, n);
        if (F.bottomRows(1).lpNorm<Eigen::Infinity>() < 0.1) continue;
        Vector g(2 * n + 1);
        g.setOnes();
        g(2 * n) = 0.8;
        Polyhedron box{F, g};

        Polyhedron mpi;
        try {
            mpi = compute_mpi(A_K, box);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NotFinitelyDetermined) continue;
            throw;
        }
        ++tested;

        // invariance + constraint satisfaction on sampled members
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        int members = 0;
        for (int draw = 0; draw < 4000 && members < 500; ++draw) {
            Vector x(n);
            for (int i = 0; i < n; ++i) x(i) = unit(rng);
            if (!contains(mpi, x)) continue;
            ++members;
            CHECK(contains(mpi, A_K * x, 1e-8));
            CHECK(contains(box, x, 1e-8));
        }

        // maximality: points in the constraint set but outside the MPI set
        // violate the constraints along the trajectory
        int outsiders = 0;
        for (int draw = 0; draw < 4000 && outsiders < 50; ++draw) {
            Vector x(n);
            for (int i = 0; i < n; ++i) x(i) = unit(rng);
            if (!contains(box, x) || contains(mpi, x, 1e-7)) continue;
            ++outsiders;
            bool violated = false;
            Vector z = x;
            for (int k = 0; k < 500 && !violated; ++k) {
                z = A_K * z;
                violated = !contains(box, z, 1e-9);
            }
            CHECK(violated);
        }

        // idempotence
        const Polyhedron again = compute_mpi(A_K, mpi);
        REQUIRE(again.rows() == mpi.rows());
        // same halfspaces up to row order
        for (int i = 0; i < again.rows(); ++i) {
            bool found = false;
            for (int j = 0; j < mpi.rows() && !found; ++j)
                found = (again.F.row(i) - mpi.F.row(j)).lpNorm<Eigen::Infinity>() < 1e-9 &&
                        std::abs(again.g(i) - mpi.g(j)) < 1e-9;
            CHECK(found);
        }
    }
}
