#include "ctrlmatch/qp.hpp"

#include "ctrlmatch/numerics.hpp"
#include "ctrlmatch/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <sstream>

namespace ctrlmatch {

void QuadProgram::validate() const {
    const int n = dim();
    if (G.cols() != n) throw Error(ErrorCode::DimensionMismatch, "G must be square");
    if (a.size() != n) throw Error(ErrorCode::DimensionMismatch, "a size mismatch");
    if (E.size() > 0 && (E.cols() != n || E.rows() != t.size()))
        throw Error(ErrorCode::DimensionMismatch, "equality block size mismatch");
    if (M.size() > 0 && (M.cols() != n || M.rows() != d.size()))
        throw Error(ErrorCode::DimensionMismatch, "inequality block size mismatch");
}

std::string QuadProgram::dump() const {
    std::ostringstream os;
    os << "quadprog dim=" << dim() << "\nhessian:\n" << G << "\ngradient:\n" << a.transpose()
       << "\n";
    if (E.rows() > 0) os << "equalities (E | t):\n" << E << "\n" << t.transpose() << "\n";
    if (M.rows() > 0) os << "inequalities (M | d):\n" << M << "\n" << d.transpose() << "\n";
    return os.str();
}

namespace {

constexpr double kFeasTol = 1e-8;
constexpr double kMultTol = 1e-9;

struct Reduced {
    Vector z0;
    Matrix N;
    Matrix G;
    Vector a;
    Matrix M;
    Vector d;
};

Reduced eliminate_equalities(const QuadProgram& qp) {
    Reduced r;
    const int n = qp.dim();
    if (qp.E.rows() == 0) {
        r.z0 = Vector::Zero(n);
        r.N = Matrix::Identity(n, n);
        r.G = qp.G;
        r.a = qp.a;
        r.M = qp.M;
        r.d = qp.d;
        return r;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(qp.E);
    r.z0 = cod.solve(qp.t);
    if ((qp.E * r.z0 - qp.t).lpNorm<Eigen::Infinity>() >
        kFeasTol * (1.0 + qp.t.lpNorm<Eigen::Infinity>()))
        throw Error(ErrorCode::Infeasible, "equality constraints are inconsistent");
    // nullspace basis from the full SVD
    Eigen::JacobiSVD<Matrix> svd(qp.E, Eigen::ComputeFullV);
    const double cutoff = 1e-12 * std::max(1.0, svd.singularValues()(0));
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > cutoff) ++rank;
    r.N = svd.matrixV().rightCols(n - rank);
    r.G = r.N.transpose() * qp.G * r.N;
    r.a = r.N.transpose() * (qp.G * r.z0 + qp.a);
    if (qp.M.rows() > 0) {
        r.M = qp.M * r.N;
        r.d = qp.d - qp.M * r.z0;
    } else {
        r.M = Matrix::Zero(0, r.N.cols());
        r.d = Vector::Zero(0);
    }
    return r;
}

// equality-constrained step: KKT solve for the working set
void ecqp_step(const Matrix& G, const Vector& grad, const Matrix& Mw, Vector& p, Vector& lambda) {
    const int n = static_cast<int>(G.rows());
    const int k = static_cast<int>(Mw.rows());
    Matrix kkt = Matrix::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = G;
    if (k > 0) {
        kkt.topRightCorner(n, k) = Mw.transpose();
        kkt.bottomLeftCorner(k, n) = Mw;
    }
    Vector rhs = Vector::Zero(n + k);
    rhs.head(n) = -grad;
    Eigen::PartialPivLU<Matrix> lu(kkt);
    const Vector sol = lu.solve(rhs);
    if (!sol.allFinite()) throw Error(ErrorCode::NumericalFailure, "singular KKT system");
    p = sol.head(n);
    lambda = sol.tail(k);
}

}  // namespace

QpSolution solve_qp(const QuadProgram& qp, double tol) {
    qp.validate();
    Reduced r = eliminate_equalities(qp);
    const int n = static_cast<int>(r.N.cols());
    const int mrows = static_cast<int>(r.M.rows());

    Eigen::LLT<Matrix> gllt(symmetrized(r.G));
    if (n > 0 && gllt.info() != Eigen::Success)
        throw Error(ErrorCode::NotPositiveDefinite, "reduced Hessian is not positive definite");

    QpSolution out;
    Vector w = n > 0 ? Vector(gllt.solve(-r.a)) : Vector::Zero(0);

    if (mrows == 0 || n == 0 || (r.M * w - r.d).maxCoeff() <= kFeasTol) {
        if (mrows > 0 && n == 0 && (r.d.minCoeff() < -kFeasTol))
            throw Error(ErrorCode::Infeasible, "no freedom left but constraints violated");
        out.z = r.z0 + r.N * w;
        out.multipliers = Vector::Zero(mrows);
        out.objective = 0.5 * out.z.dot(qp.G * out.z) + qp.a.dot(out.z);
        return out;
    }

    // phase 1: maximize the feasibility margin
    {
        Matrix F1(mrows + 1, n + 1);
        F1.topLeftCorner(mrows, n) = r.M;
        F1.topRightCorner(mrows, 1).setOnes();
        F1.bottomLeftCorner(1, n).setZero();
        F1(mrows, n) = 1.0;
        Vector g1(mrows + 1);
        g1.head(mrows) = r.d;
        g1(mrows) = 1.0;
        Vector c = Vector::Zero(n + 1);
        c(n) = 1.0;
        const LpSolution lp = solve_lp(c, F1, g1);
        if (lp.status != SolveStatus::optimal)
            throw Error(ErrorCode::NumericalFailure, "phase-1 LP failed");
        if (lp.objective < -kFeasTol)
            throw Error(ErrorCode::Infeasible, "inequality constraints are infeasible");
        w = lp.x.head(n);
    }

    std::vector<int> working;
    const int max_iter = 50 * (mrows + n) + 100;
    for (int iter = 0; iter < max_iter; ++iter) {
        Matrix Mw(working.size(), n);
        for (size_t i = 0; i < working.size(); ++i) Mw.row(i) = r.M.row(working[i]);
        Vector p, lambda;
        ecqp_step(r.G, r.G * w + r.a, Mw, p, lambda);

        if (p.lpNorm<Eigen::Infinity>() <= tol * (1.0 + w.lpNorm<Eigen::Infinity>())) {
            int drop = -1;
            double most_negative = -kMultTol;
            for (size_t i = 0; i < working.size(); ++i)
                if (lambda(i) < most_negative) {
                    most_negative = lambda(i);
                    drop = static_cast<int>(i);
                }
            if (drop < 0) {
                out.z = r.z0 + r.N * w;
                out.multipliers = Vector::Zero(mrows);
                for (size_t i = 0; i < working.size(); ++i)
                    out.multipliers(working[i]) = std::max(0.0, lambda(i));
                out.active_rows = working;
                out.objective = 0.5 * out.z.dot(qp.G * out.z) + qp.a.dot(out.z);
                return out;
            }
            working.erase(working.begin() + drop);
            continue;
        }

        // blocking constraint: smallest step ratio, ties to the lowest row index
        double alpha = 1.0;
        int blocking = -1;
        for (int i = 0; i < mrows; ++i) {
            if (std::find(working.begin(), working.end(), i) != working.end()) continue;
            const double dir = r.M.row(i).dot(p);
            if (dir <= 1e-12) continue;
            const double ratio = (r.d(i) - r.M.row(i).dot(w)) / dir;
            if (ratio < alpha - 1e-14) {
                alpha = std::max(0.0, ratio);
                blocking = i;
            }
        }
        w += alpha * p;
        if (blocking >= 0) {
            working.insert(std::upper_bound(working.begin(), working.end(), blocking), blocking);
        }
    }
    throw Error(ErrorCode::NumericalFailure, "active-set iteration limit reached");
}

}  // namespace ctrlmatch
