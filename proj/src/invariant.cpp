#include "ctrlmatch/invariant.hpp"

#include "ctrlmatch/numerics.hpp"
#include "ctrlmatch/sdp.hpp"

#include <cmath>

namespace ctrlmatch {

void Polyhedron::validate() const {
    if (F.rows() != g.size())
        throw Error(ErrorCode::DimensionMismatch, "F and g row counts differ");
    if (!F.allFinite() || !g.allFinite())
        throw Error(ErrorCode::DimensionMismatch, "polyhedron data must be finite");
    for (int i = 0; i < F.rows(); ++i)
        if (F.row(i).lpNorm<Eigen::Infinity>() == 0.0)
            throw Error(ErrorCode::DimensionMismatch, "zero row in F");
}

Polyhedron Polyhedron::normalized() const {
    Polyhedron out = *this;
    for (int i = 0; i < F.rows(); ++i) {
        const double scale = F.row(i).lpNorm<Eigen::Infinity>();
        if (scale > 0.0) {
            out.F.row(i) /= scale;
            out.g(i) /= scale;
        }
    }
    return out;
}

Polyhedron closed_loop_constraints(const Matrix& C, const Matrix& D, const Vector& e,
                                   const Gain& k_hat) {
    if (C.rows() != D.rows() || C.rows() != e.size())
        throw Error(ErrorCode::DimensionMismatch, "C, D and e row counts differ");
    if (D.cols() != k_hat.K.rows() || C.cols() != k_hat.K.cols())
        throw Error(ErrorCode::DimensionMismatch, "gain does not match the constraint rows");
    Polyhedron poly;
    poly.F = C - D * k_hat.K;
    poly.g = -e;
    return poly;
}

bool contains(const Polyhedron& poly, const Vector& x, double tol) {
    if (x.size() != poly.dim())
        throw Error(ErrorCode::DimensionMismatch, "point dimension mismatch");
    if (poly.rows() == 0) return true;
    return (poly.F * x - poly.g).maxCoeff() <= tol;
}

namespace {

// max f'x subject to the rows of (F, g); returns +inf when unbounded
double support_value(const Matrix& F, const Vector& g, const Vector& f) {
    if (F.rows() == 0) return std::numeric_limits<double>::infinity();
    const LpSolution lp = solve_lp(f, F, g);
    if (lp.status == SolveStatus::unbounded) return std::numeric_limits<double>::infinity();
    if (lp.status != SolveStatus::optimal)
        throw Error(ErrorCode::NumericalFailure, "support LP failed");
    return lp.objective;
}

constexpr double kRedundancyTol = 1e-9;

}  // namespace

Polyhedron remove_redundant(const Polyhedron& poly) {
    poly.validate();
    if (poly.rows() == 0) return poly;

    // nonemptiness: maximize the margin s with F x + s <= g
    {
        Matrix F1(poly.rows() + 1, poly.dim() + 1);
        F1.setZero();
        F1.topLeftCorner(poly.rows(), poly.dim()) = poly.F;
        F1.topRightCorner(poly.rows(), 1).setOnes();
        F1(poly.rows(), poly.dim()) = 1.0;  // s <= 1 keeps the LP bounded
        Vector g1(poly.rows() + 1);
        g1.head(poly.rows()) = poly.g;
        g1(poly.rows()) = 1.0;
        Vector c = Vector::Zero(poly.dim() + 1);
        c(poly.dim()) = 1.0;
        const LpSolution lp = solve_lp(c, F1, g1);
        if (lp.status != SolveStatus::optimal)
            throw Error(ErrorCode::NumericalFailure, "emptiness LP failed");
        if (lp.objective < -kRedundancyTol)
            throw Error(ErrorCode::EmptyPolyhedron, "polyhedron has no feasible point");
    }

    std::vector<int> kept(poly.rows());
    for (int i = 0; i < poly.rows(); ++i) kept[i] = i;
    for (int i = 0; i < poly.rows(); ++i) {
        if (kept.size() == 1) break;
        std::vector<int> others;
        for (int j : kept)
            if (j != i) others.push_back(j);
        if (others.size() == kept.size()) continue;  // already dropped
        Matrix Fo(others.size(), poly.dim());
        Vector go(others.size());
        for (size_t r = 0; r < others.size(); ++r) {
            Fo.row(r) = poly.F.row(others[r]);
            go(r) = poly.g(others[r]);
        }
        const double val = support_value(Fo, go, poly.F.row(i).transpose());
        if (val <= poly.g(i) + kRedundancyTol) kept.assign(others.begin(), others.end());
    }

    Polyhedron out;
    out.F = Matrix(kept.size(), poly.dim());
    out.g = Vector(kept.size());
    for (size_t r = 0; r < kept.size(); ++r) {
        out.F.row(r) = poly.F.row(kept[r]);
        out.g(r) = poly.g(kept[r]);
    }
    return out;
}

Polyhedron compute_mpi(const Matrix& A_K, const Polyhedron& constraints, int max_iter) {
    constraints.validate();
    if (A_K.rows() != A_K.cols() || A_K.rows() != constraints.dim())
        throw Error(ErrorCode::DimensionMismatch, "A_K does not match the constraint set");
    if (spectral_radius(A_K) >= 1.0 - kStabilityMargin)
        throw Error(ErrorCode::NotSchurStable, "MPI computation needs a Schur closed loop");

    Polyhedron omega = constraints.normalized();
    Matrix newest_f = omega.F;
    Vector newest_g = omega.g;

    for (int iter = 0; iter < max_iter; ++iter) {
        // image of the newest rows under one more step of the dynamics
        Matrix cand_f = newest_f * A_K;
        Vector cand_g = newest_g;
        std::vector<int> added;
        for (int i = 0; i < cand_f.rows(); ++i) {
            const double scale = cand_f.row(i).lpNorm<Eigen::Infinity>();
            if (scale < 1e-14) {
                if (cand_g(i) < -kRedundancyTol)
                    throw Error(ErrorCode::EmptyPolyhedron, "contradictory zero row");
                continue;  // 0'x <= g holds trivially
            }
            const Vector f = cand_f.row(i).transpose() / scale;
            const double gi = cand_g(i) / scale;
            const double val = support_value(omega.F, omega.g, f);
            if (val <= gi + kRedundancyTol) continue;  // already implied
            omega.F.conservativeResize(omega.F.rows() + 1, Eigen::NoChange);
            omega.F.row(omega.F.rows() - 1) = f.transpose();
            omega.g.conservativeResize(omega.g.size() + 1);
            omega.g(omega.g.size() - 1) = gi;
            added.push_back(i);
        }
        if (added.empty()) return remove_redundant(omega);
        Matrix next_f(added.size(), omega.dim());
        Vector next_g(added.size());
        for (size_t r = 0; r < added.size(); ++r) {
            next_f.row(r) = cand_f.row(added[r]);
            next_g(r) = cand_g(added[r]);
        }
        newest_f = next_f;
        newest_g = next_g;
    }
    throw Error(ErrorCode::NotFinitelyDetermined,
                "pre-set iteration hit max_iter without a fixed point");
}

}  // namespace ctrlmatch
