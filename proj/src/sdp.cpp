#include "ctrlmatch/sdp.hpp"

#include "ctrlmatch/numerics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <cstdio>
#include <cstdlib>

namespace ctrlmatch {

// ---------------------------------------------------------------------------
// AffineMatrix
// ---------------------------------------------------------------------------

AffineMatrix AffineMatrix::transpose() const {
    AffineMatrix out;
    out.rows_ = cols_;
    out.cols_ = rows_;
    out.constant_ = constant_.transpose();
    for (const auto& [j, C] : coeffs_) out.coeffs_[j] = C.transpose();
    return out;
}

AffineMatrix AffineMatrix::block(int i, int j, int p, int q) const {
    AffineMatrix out;
    out.rows_ = p;
    out.cols_ = q;
    out.constant_ = constant_.block(i, j, p, q);
    for (const auto& [k, C] : coeffs_) {
        Matrix sub = C.block(i, j, p, q);
        if (sub.cwiseAbs().maxCoeff() > 0.0) out.coeffs_[k] = std::move(sub);
    }
    return out;
}

Matrix AffineMatrix::evaluate(const Vector& y) const {
    Matrix M = constant_;
    for (const auto& [j, C] : coeffs_) M += y(j) * C;
    return M;
}

AffineMatrix AffineMatrix::operator-() const {
    AffineMatrix out = *this;
    out.constant_ = -out.constant_;
    for (auto& [j, C] : out.coeffs_) C = -C;
    return out;
}

AffineMatrix& AffineMatrix::operator+=(const AffineMatrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw Error(ErrorCode::DimensionMismatch, "affine expression size mismatch");
    constant_ += other.constant_;
    for (const auto& [j, C] : other.coeffs_) {
        auto it = coeffs_.find(j);
        if (it == coeffs_.end())
            coeffs_[j] = C;
        else
            it->second += C;
    }
    return *this;
}

AffineMatrix& AffineMatrix::operator-=(const AffineMatrix& other) { return *this += -other; }

AffineMatrix operator*(double scale, const AffineMatrix& m) {
    AffineMatrix out = m;
    out.constant_ *= scale;
    for (auto& [j, C] : out.coeffs_) C *= scale;
    return out;
}

AffineMatrix operator*(const Matrix& left, const AffineMatrix& m) {
    // a 1x1 expression broadcasts as a scalar factor
    if (m.rows_ == 1 && m.cols_ == 1 && left.cols() != 1) {
        AffineMatrix out;
        out.rows_ = static_cast<int>(left.rows());
        out.cols_ = static_cast<int>(left.cols());
        out.constant_ = m.constant_(0, 0) * left;
        for (const auto& [j, C] : m.coeffs_) out.coeffs_[j] = C(0, 0) * left;
        return out;
    }
    if (left.cols() != m.rows())
        throw Error(ErrorCode::DimensionMismatch, "affine product size mismatch");
    AffineMatrix out;
    out.rows_ = static_cast<int>(left.rows());
    out.cols_ = m.cols_;
    out.constant_ = left * m.constant_;
    for (const auto& [j, C] : m.coeffs_) out.coeffs_[j] = left * C;
    return out;
}

AffineMatrix operator*(const AffineMatrix& m, const Matrix& right) {
    if (m.rows_ == 1 && m.cols_ == 1 && right.rows() != 1) return right * m;
    if (m.cols() != right.rows())
        throw Error(ErrorCode::DimensionMismatch, "affine product size mismatch");
    AffineMatrix out;
    out.rows_ = m.rows_;
    out.cols_ = static_cast<int>(right.cols());
    out.constant_ = m.constant_ * right;
    for (const auto& [j, C] : m.coeffs_) out.coeffs_[j] = C * right;
    return out;
}

AffineMatrix block2x2(const AffineMatrix& m11, const AffineMatrix& m12, const AffineMatrix& m21,
                      const AffineMatrix& m22) {
    if (m11.rows() != m12.rows() || m21.rows() != m22.rows() || m11.cols() != m21.cols() ||
        m12.cols() != m22.cols())
        throw Error(ErrorCode::DimensionMismatch, "block sizes are inconsistent");
    const int r1 = m11.rows(), r2 = m21.rows(), c1 = m11.cols(), c2 = m12.cols();
    Matrix top = Matrix::Zero(r1 + r2, r1);
    top.topRows(r1).setIdentity();
    Matrix bottom = Matrix::Zero(r1 + r2, r2);
    bottom.bottomRows(r2).setIdentity();
    Matrix left = Matrix::Zero(c1, c1 + c2);
    left.leftCols(c1).setIdentity();
    Matrix right = Matrix::Zero(c2, c1 + c2);
    right.rightCols(c2).setIdentity();
    return top * m11 * left + top * m12 * right + bottom * m21 * left + bottom * m22 * right;
}

// ---------------------------------------------------------------------------
// LmiProblem
// ---------------------------------------------------------------------------

AffineMatrix LmiProblem::scalar_variable(const std::string& name) {
    vars_.push_back({name, num_unknowns_, 0});
    AffineMatrix out = AffineMatrix::zero(1, 1);
    out.coeffs_[num_unknowns_] = Matrix::Ones(1, 1);
    ++num_unknowns_;
    return out;
}

AffineMatrix LmiProblem::symmetric_variable(const std::string& name, int n) {
    vars_.push_back({name, num_unknowns_, n});
    AffineMatrix out = AffineMatrix::zero(n, n);
    int idx = num_unknowns_;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Matrix C = Matrix::Zero(n, n);
            C(i, j) = 1.0;
            C(j, i) = 1.0;
            out.coeffs_[idx++] = std::move(C);
        }
    num_unknowns_ = idx;
    return out;
}

void LmiProblem::minimize(const AffineMatrix& objective) {
    if (objective.rows() != 1 || objective.cols() != 1)
        throw Error(ErrorCode::DimensionMismatch, "objective must be a 1x1 expression");
    objective_ = objective;
}

void LmiProblem::add_psd(const AffineMatrix& m) {
    if (m.rows() != m.cols())
        throw Error(ErrorCode::DimensionMismatch, "PSD constraint must be square");
    const double scale = 1.0 + m.constant_term().norm();
    if ((m.constant_term() - m.constant_term().transpose()).norm() > 1e-10 * scale)
        throw Error(ErrorCode::DimensionMismatch, "PSD constraint must be symmetric");
    for (const auto& [j, C] : m.coefficients())
        if ((C - C.transpose()).norm() > 1e-10 * (1.0 + C.norm()))
            throw Error(ErrorCode::DimensionMismatch, "PSD constraint must be symmetric");
    psd_.push_back(m);
}

void LmiProblem::add_nonneg(const AffineMatrix& m) { nonneg_.push_back(m); }

void LmiProblem::add_zero(const AffineMatrix& m) { zero_.push_back(m); }

const LmiProblem::VarInfo& LmiProblem::find(const std::string& name) const {
    for (const auto& v : vars_)
        if (v.name == name) return v;
    throw Error(ErrorCode::DimensionMismatch, "unknown variable " + name);
}

double LmiProblem::scalar_value(const std::string& name, const Vector& y) const {
    const VarInfo& v = find(name);
    if (v.dim != 0) throw Error(ErrorCode::DimensionMismatch, name + " is not scalar");
    return y(v.offset);
}

Matrix LmiProblem::value(const std::string& name, const Vector& y) const {
    const VarInfo& v = find(name);
    if (v.dim == 0) return Matrix::Constant(1, 1, y(v.offset));
    Matrix M(v.dim, v.dim);
    int idx = v.offset;
    for (int i = 0; i < v.dim; ++i)
        for (int j = i; j < v.dim; ++j) {
            M(i, j) = y(idx);
            M(j, i) = y(idx);
            ++idx;
        }
    return M;
}

std::string LmiProblem::dump() const {
    std::ostringstream os;
    os << "lmi-problem unknowns=" << num_unknowns_ << "\n";
    os << "variables:\n";
    for (const auto& v : vars_) {
        os << "  " << v.name << " offset=" << v.offset
           << (v.dim == 0 ? std::string(" scalar")
                          : " symmetric " + std::to_string(v.dim) + "x" + std::to_string(v.dim))
           << "\n";
    }
    auto print_affine = [&os](const AffineMatrix& m) {
        os << "    const:\n" << m.constant_term() << "\n";
        for (const auto& [j, C] : m.coefficients()) os << "    y[" << j << "]:\n" << C << "\n";
    };
    os << "minimize:\n";
    print_affine(objective_);
    for (size_t i = 0; i < psd_.size(); ++i) {
        os << "psd[" << i << "] (" << psd_[i].rows() << "x" << psd_[i].cols() << "):\n";
        print_affine(psd_[i]);
    }
    for (size_t i = 0; i < nonneg_.size(); ++i) {
        os << "nonneg[" << i << "]:\n";
        print_affine(nonneg_[i]);
    }
    for (size_t i = 0; i < zero_.size(); ++i) {
        os << "zero[" << i << "]:\n";
        print_affine(zero_[i]);
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Conic core: min c'x  s.t.  h - G x in K,  K = R+^l x PSD(n_1) x ... PSD(n_b).
// Primal-dual interior point on the homogeneous self-dual embedding with
// Nesterov-Todd scaling and a Mehrotra predictor-corrector.
// ---------------------------------------------------------------------------

namespace {

struct ConeVec {
    Vector lin;
    std::vector<Matrix> blk;

    static ConeVec zero(int l, const std::vector<int>& dims) {
        ConeVec v;
        v.lin = Vector::Zero(l);
        v.blk.reserve(dims.size());
        for (int n : dims) v.blk.push_back(Matrix::Zero(n, n));
        return v;
    }

    double dot(const ConeVec& other) const {
        double acc = lin.dot(other.lin);
        for (size_t i = 0; i < blk.size(); ++i)
            acc += (blk[i].array() * other.blk[i].array()).sum();
        return acc;
    }

    double norm() const { return std::sqrt(std::max(0.0, dot(*this))); }

    ConeVec& axpy(double a, const ConeVec& other) {
        lin += a * other.lin;
        for (size_t i = 0; i < blk.size(); ++i) blk[i] += a * other.blk[i];
        return *this;
    }

    ConeVec& scale(double a) {
        lin *= a;
        for (auto& B : blk) B *= a;
        return *this;
    }
};

ConeVec operator-(const ConeVec& a, const ConeVec& b) {
    ConeVec out = a;
    out.axpy(-1.0, b);
    return out;
}

// Nesterov-Todd scaling. For a PSD block the factor R satisfies
// S = R diag(sigma) R' and Z = R^{-T} diag(sigma) R^{-1}.
struct NtScaling {
    Vector w_lin;
    Vector lambda_lin;  // sqrt(s .* z)
    std::vector<Matrix> R;
    std::vector<Matrix> R_inv;
    std::vector<Vector> sigma;
};

bool compute_scaling(const ConeVec& s, const ConeVec& z, NtScaling& W) {
    const int l = static_cast<int>(s.lin.size());
    W.w_lin.resize(l);
    W.lambda_lin.resize(l);
    for (int i = 0; i < l; ++i) {
        if (s.lin(i) <= 0.0 || z.lin(i) <= 0.0) return false;
        W.w_lin(i) = std::sqrt(s.lin(i) / z.lin(i));
        W.lambda_lin(i) = std::sqrt(s.lin(i) * z.lin(i));
    }
    W.R.clear();
    W.R_inv.clear();
    W.sigma.clear();
    for (size_t b = 0; b < s.blk.size(); ++b) {
        Eigen::LLT<Matrix> lltS(s.blk[b]);
        Eigen::LLT<Matrix> lltZ(z.blk[b]);
        if (lltS.info() != Eigen::Success || lltZ.info() != Eigen::Success) return false;
        const Matrix L1 = lltS.matrixL();
        const Matrix L2 = lltZ.matrixL();
        Eigen::JacobiSVD<Matrix> svd(L2.transpose() * L1,
                                     Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector sv = svd.singularValues();
        if (sv.minCoeff() <= 0.0) return false;
        const Vector inv_sqrt = sv.cwiseSqrt().cwiseInverse();
        Matrix R = L1 * svd.matrixV() * inv_sqrt.asDiagonal();
        Matrix R_inv = inv_sqrt.asDiagonal() * svd.matrixU().transpose() * L2.transpose();
        W.R.push_back(std::move(R));
        W.R_inv.push_back(std::move(R_inv));
        W.sigma.push_back(sv);
    }
    return true;
}

// factored: W'W v = R (R' v R) R' and (W'W)^{-1} v = R^{-T} (R^{-1} v R^{-T}) R^{-1};
// keeping R and R^{-1} separate halves the conditioning of each application
ConeVec apply_wtw(const NtScaling& W, const ConeVec& v) {
    ConeVec out = v;
    out.lin.array() *= W.w_lin.array().square();
    for (size_t b = 0; b < v.blk.size(); ++b) {
        Matrix inner = W.R[b].transpose() * v.blk[b] * W.R[b];
        Matrix M = W.R[b] * inner * W.R[b].transpose();
        out.blk[b] = 0.5 * (M + M.transpose());
    }
    return out;
}

ConeVec apply_wtw_inv(const NtScaling& W, const ConeVec& v) {
    ConeVec out = v;
    out.lin.array() /= W.w_lin.array().square();
    for (size_t b = 0; b < v.blk.size(); ++b) {
        Matrix inner = W.R_inv[b] * v.blk[b] * W.R_inv[b].transpose();
        Matrix M = W.R_inv[b].transpose() * inner * W.R_inv[b];
        out.blk[b] = 0.5 * (M + M.transpose());
    }
    return out;
}

ConeVec apply_wt(const NtScaling& W, const ConeVec& v) {
    ConeVec out = v;
    out.lin.array() *= W.w_lin.array();
    for (size_t b = 0; b < v.blk.size(); ++b) out.blk[b] = W.R[b] * v.blk[b] * W.R[b].transpose();
    return out;
}

// W^{-T} ds: the s-direction in the scaled basis
ConeVec scale_s_dir(const NtScaling& W, const ConeVec& ds) {
    ConeVec out = ds;
    out.lin.array() /= W.w_lin.array();
    for (size_t b = 0; b < ds.blk.size(); ++b) {
        Matrix M = W.R_inv[b] * ds.blk[b] * W.R_inv[b].transpose();
        out.blk[b] = 0.5 * (M + M.transpose());
    }
    return out;
}

// W dz: the z-direction in the scaled basis
ConeVec scale_z_dir(const NtScaling& W, const ConeVec& dz) {
    ConeVec out = dz;
    out.lin.array() *= W.w_lin.array();
    for (size_t b = 0; b < dz.blk.size(); ++b) {
        Matrix M = W.R[b].transpose() * dz.blk[b] * W.R[b];
        out.blk[b] = 0.5 * (M + M.transpose());
    }
    return out;
}

// max alpha with lambda + alpha * dir in the cone (dir in the scaled basis)
double step_to_boundary(const NtScaling& W, const ConeVec& dir) {
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dir.lin.size(); ++i)
        if (dir.lin(i) < 0.0) alpha = std::min(alpha, -W.lambda_lin(i) / dir.lin(i));
    for (size_t b = 0; b < dir.blk.size(); ++b) {
        const Vector inv_sqrt = W.sigma[b].cwiseSqrt().cwiseInverse();
        Matrix M = inv_sqrt.asDiagonal() * dir.blk[b] * inv_sqrt.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()),
                                                 Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        if (lo < 0.0) alpha = std::min(alpha, -1.0 / lo);
    }
    return alpha;
}

ConeVec jordan_product(const ConeVec& a, const ConeVec& b) {
    ConeVec out = a;
    out.lin = a.lin.cwiseProduct(b.lin);
    for (size_t k = 0; k < a.blk.size(); ++k)
        out.blk[k] = 0.5 * (a.blk[k] * b.blk[k] + b.blk[k] * a.blk[k]);
    return out;
}

// solves lambda o g = d for g, with lambda diagonal in the scaled basis
ConeVec jordan_solve_lambda(const NtScaling& W, const ConeVec& d) {
    ConeVec out = d;
    out.lin = d.lin.cwiseQuotient(W.lambda_lin);
    for (size_t b = 0; b < d.blk.size(); ++b) {
        const Vector& sig = W.sigma[b];
        Matrix M = d.blk[b];
        for (int i = 0; i < M.rows(); ++i)
            for (int j = 0; j < M.cols(); ++j) M(i, j) = 2.0 * M(i, j) / (sig(i) + sig(j));
        out.blk[b] = std::move(M);
    }
    return out;
}

ConeVec lambda_vec(const NtScaling& W, int l, const std::vector<int>& dims) {
    ConeVec v = ConeVec::zero(l, dims);
    v.lin = W.lambda_lin;
    for (size_t b = 0; b < v.blk.size(); ++b) v.blk[b] = Matrix(W.sigma[b].asDiagonal());
    return v;
}

struct ConicProblem {
    Vector c;
    std::vector<ConeVec> G;  // columns; the slack is s = h - G x
    ConeVec h;
    int lin_dim = 0;
    std::vector<int> psd_dims;
};

struct ConicResult {
    SolveStatus status = SolveStatus::numerical_failure;
    Vector x;
    double pobj = 0.0;
    double dobj = 0.0;
    double max_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

ConicResult solve_conic_core(const ConicProblem& prob, double tol) {
    const int m = static_cast<int>(prob.c.size());
    const int l = prob.lin_dim;
    const std::vector<int>& dims = prob.psd_dims;
    double nu = l;
    for (int n : dims) nu += n;

    ConicResult result;
    result.x = Vector::Zero(m);
    if (nu == 0) {
        result.status = prob.c.norm() == 0.0 ? SolveStatus::optimal : SolveStatus::unbounded;
        result.max_residual = 0.0;
        return result;
    }

    auto mat_vec = [&](const Vector& x) {
        ConeVec out = ConeVec::zero(l, dims);
        for (int j = 0; j < m; ++j) out.axpy(x(j), prob.G[j]);
        return out;
    };
    auto mat_t_vec = [&](const ConeVec& v) {
        Vector out(m);
        for (int j = 0; j < m; ++j) out(j) = prob.G[j].dot(v);
        return out;
    };

    Matrix GtG = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            GtG(i, j) = prob.G[i].dot(prob.G[j]);
            GtG(j, i) = GtG(i, j);
        }
    Eigen::LDLT<Matrix> gtg_ldlt(GtG + 1e-12 * Matrix::Identity(m, m));

    Vector x = m > 0 ? Vector(gtg_ldlt.solve(mat_t_vec(prob.h))) : Vector::Zero(0);
    ConeVec s = prob.h - mat_vec(x);
    ConeVec z = ConeVec::zero(l, dims);
    if (m > 0) z = mat_vec(gtg_ldlt.solve(-prob.c));

    auto push_interior = [&](ConeVec& v) {
        double lo = std::numeric_limits<double>::infinity();
        if (l > 0) lo = std::min(lo, v.lin.minCoeff());
        for (const auto& B : v.blk) lo = std::min(lo, min_eig_sym(B));
        if (lo <= 0.0) {
            const double a = 1.0 - lo;
            v.lin.array() += a;
            for (auto& B : v.blk) B += a * Matrix::Identity(B.rows(), B.cols());
        }
    };
    push_interior(s);
    push_interior(z);
    double tau = 1.0;
    double kappa = 1.0;

    const double h_norm = std::max(1.0, prob.h.norm());
    const double c_norm = std::max(1.0, prob.c.norm());

    NtScaling W;
    double best_mu = std::numeric_limits<double>::infinity();
    double best_metric = std::numeric_limits<double>::infinity();
    Vector best_x = result.x;
    double best_pobj = 0.0, best_dobj = 0.0;
    int stall = 0;
    auto finish = [&](SolveStatus fallback) {
        if (best_metric <= tol) {
            result.status = SolveStatus::optimal;
            result.x = best_x;
            result.pobj = best_pobj;
            result.dobj = best_dobj;
            result.max_residual = best_metric;
        } else {
            result.status = fallback;
        }
        return result;
    };
    constexpr int kMaxIter = 200;
    for (int iter = 1; iter <= kMaxIter; ++iter) {
        result.iterations = iter;

        const Vector res_x = mat_t_vec(z) + prob.c * tau;
        ConeVec res_z = mat_vec(x);
        res_z.axpy(1.0, s).axpy(-tau, prob.h);
        const double res_tau = kappa + prob.c.dot(x) + prob.h.dot(z);

        const double gap = s.dot(z);
        const double mu = (gap + tau * kappa) / (nu + 1.0);

        const double pcost = prob.c.dot(x) / tau;
        const double dcost = -prob.h.dot(z) / tau;

        // residuals of the de-homogenized candidate (x/tau, z/tau), measured
        // against the original data; the embedding residuals lag behind mu
        // and would floor the attainable accuracy
        const Vector x_cand = x / tau;
        ConeVec s_cand = prob.h - mat_vec(x_cand);
        double cone_viol = 0.0;
        if (l > 0 && s_cand.lin.size() > 0)
            cone_viol = std::max(cone_viol, -s_cand.lin.minCoeff());
        for (const auto& B : s_cand.blk) cone_viol = std::max(cone_viol, -min_eig_sym(B));
        const double pres = std::max(0.0, cone_viol) / h_norm;
        const double dres = (mat_t_vec(z) / tau + prob.c).norm() / c_norm;
        const double relgap =
            std::abs(s_cand.dot(z) / tau) / std::max(1.0, std::abs(pcost));

        result.pobj = pcost;
        result.dobj = dcost;
        result.max_residual = std::max({pres, dres, relgap});
        if (tau > 0.0 && result.max_residual < best_metric) {
            best_metric = result.max_residual;
            best_x = x_cand;
            best_pobj = pcost;
            best_dobj = dcost;
        }

        if (std::getenv("CTRLMATCH_SDP_TRACE"))
            std::fprintf(stderr,
                         "it=%3d mu=%9.3e pres=%9.3e dres=%9.3e gap=%9.3e tau=%9.3e kap=%9.3e\n",
                         iter, mu, pres, dres, relgap, tau, kappa);

        if (pres <= tol && dres <= tol && relgap <= tol) {
            result.status = SolveStatus::optimal;
            result.x = x_cand;
            return result;
        }
        const double hz = prob.h.dot(z);
        if (hz < 0.0 && mat_t_vec(z).norm() / (-hz) <= tol * c_norm) {
            result.status = SolveStatus::infeasible;
            ConeVec cert = z;
            cert.scale(-1.0 / hz);
            result.max_residual = mat_t_vec(cert).norm();
            return result;
        }
        const double cx = prob.c.dot(x);
        if (cx < 0.0) {
            ConeVec ray = mat_vec(x);
            ray.axpy(1.0, s);
            if (ray.norm() / (-cx) <= tol * h_norm) {
                result.status = SolveStatus::unbounded;
                result.x = x / (-cx);
                result.max_residual = ray.norm() / (-cx);
                return result;
            }
        }

        if (mu < 0.9 * best_mu) {
            best_mu = mu;
            stall = 0;
        } else if (++stall > 30) {
            return finish(SolveStatus::numerical_failure);
        }

        if (!compute_scaling(s, z, W)) return finish(SolveStatus::numerical_failure);
        const ConeVec lambda = lambda_vec(W, l, dims);

        // N = Gram matrix of the scaled columns W^{-T} g_j, exactly PSD.
        // Assembled and factored in extended precision: its conditioning
        // grows like 1/mu^2, which exhausts doubles right at tight tolerances.
        using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
        using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
        std::vector<ConeVec> Gs;
        Gs.reserve(m);
        for (int j = 0; j < m; ++j) Gs.push_back(scale_s_dir(W, prob.G[j]));
        auto dot_long = [&](const ConeVec& a, const ConeVec& b) {
            long double acc = 0.0L;
            for (int i = 0; i < a.lin.size(); ++i)
                acc += static_cast<long double>(a.lin(i)) * b.lin(i);
            for (size_t k = 0; k < a.blk.size(); ++k) {
                const Matrix& A = a.blk[k];
                const Matrix& B = b.blk[k];
                for (int i = 0; i < A.size(); ++i)
                    acc += static_cast<long double>(A.data()[i]) * B.data()[i];
            }
            return acc;
        };
        LongMatrix N = LongMatrix::Zero(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                N(i, j) = dot_long(Gs[i], Gs[j]);
                N(j, i) = N(i, j);
            }
        Eigen::LDLT<LongMatrix> nfac;
        long double ridge = 0.0L;
        for (int attempt = 0; attempt < 6; ++attempt) {
            nfac.compute(N + ridge * LongMatrix::Identity(m, m));
            if (nfac.info() == Eigen::Success && (nfac.vectorD().array() > 0.0L).all()) break;
            ridge = ridge == 0.0L ? 1e-18L * (1.0L + std::abs(static_cast<double>(N.trace())))
                                  : ridge * 100.0L;
        }
        if (nfac.info() != Eigen::Success) return finish(SolveStatus::numerical_failure);

        auto solve2_raw = [&](const Vector& p, const ConeVec& q, Vector& u, ConeVec& v) {
            Vector rhs = p + mat_t_vec(apply_wtw_inv(W, q));
            if (m > 0)
                u = nfac.solve(rhs.cast<long double>()).cast<double>();
            else
                u = Vector::Zero(0);
            v = apply_wtw_inv(W, mat_vec(u) - q);
        };
        // one round of iterative refinement keeps the normal equations usable
        // once mu is small and the scaling point is ill-conditioned
        auto solve2 = [&](const Vector& p, const ConeVec& q, Vector& u, ConeVec& v) {
            solve2_raw(p, q, u, v);
            for (int round = 0; round < 2; ++round) {
                const Vector rp = p - mat_t_vec(v);
                ConeVec rq = q - (mat_vec(u) - apply_wtw(W, v));
                Vector du;
                ConeVec dv = ConeVec::zero(l, dims);
                solve2_raw(rp, rq, du, dv);
                u += du;
                v.axpy(1.0, dv);
            }
        };

        Vector u2;
        ConeVec v2 = ConeVec::zero(l, dims);
        solve2(-prob.c, prob.h, u2, v2);
        const double denom = prob.c.dot(u2) + prob.h.dot(v2) - kappa / tau;

        auto direction_raw = [&](const Vector& bx, const ConeVec& bz, double btau,
                                 const ConeVec& d_s, double d_tk, Vector& dx, ConeVec& dz,
                                 ConeVec& ds, double& dtau, double& dkappa) {
            const ConeVec ghat = jordan_solve_lambda(W, d_s);
            const ConeVec wt_ghat = apply_wt(W, ghat);
            Vector u1;
            ConeVec v1 = ConeVec::zero(l, dims);
            solve2(bx, bz - wt_ghat, u1, v1);
            dtau = (btau - prob.c.dot(u1) - prob.h.dot(v1) - d_tk / tau) / denom;
            dx = u1 + dtau * u2;
            dz = v1;
            dz.axpy(dtau, v2);
            ds = wt_ghat - apply_wtw(W, dz);
            dkappa = (d_tk - kappa * dtau) / tau;
        };
        // refinement against the full Newton system; the tau-column combination
        // otherwise amplifies the sub-solve errors near convergence
        auto compute_direction = [&](const Vector& bx, const ConeVec& bz, double btau,
                                     const ConeVec& d_s, double d_tk, Vector& dx, ConeVec& dz,
                                     ConeVec& ds, double& dtau, double& dkappa) {
            direction_raw(bx, bz, btau, d_s, d_tk, dx, dz, ds, dtau, dkappa);
            for (int round = 0; round < 2; ++round) {
                const Vector r1 = bx - (mat_t_vec(dz) + prob.c * dtau);
                ConeVec r2 = bz;
                r2.axpy(-1.0, mat_vec(dx)).axpy(-1.0, ds).axpy(dtau, prob.h);
                const double r3 = btau - (prob.c.dot(dx) + prob.h.dot(dz) + dkappa);
                ConeVec r_s = d_s;
                ConeVec sum = scale_s_dir(W, ds);
                sum.axpy(1.0, scale_z_dir(W, dz));
                r_s.axpy(-1.0, jordan_product(lambda, sum));
                const double r_tk = d_tk - (kappa * dtau + tau * dkappa);
                Vector cx;
                ConeVec cz = ConeVec::zero(l, dims), cs = ConeVec::zero(l, dims);
                double ctau = 0.0, ckappa = 0.0;
                direction_raw(r1, r2, r3, r_s, r_tk, cx, cz, cs, ctau, ckappa);
                dx += cx;
                dz.axpy(1.0, cz);
                ds.axpy(1.0, cs);
                dtau += ctau;
                dkappa += ckappa;
            }
        };

        // predictor
        ConeVec d_s_aff = jordan_product(lambda, lambda);
        d_s_aff.scale(-1.0);
        Vector dx_a;
        ConeVec dz_a = ConeVec::zero(l, dims), ds_a = ConeVec::zero(l, dims);
        double dtau_a = 0.0, dkappa_a = 0.0;
        {
            ConeVec neg_res_z = res_z;
            neg_res_z.scale(-1.0);
            compute_direction(-res_x, neg_res_z, -res_tau, d_s_aff, -tau * kappa, dx_a, dz_a,
                              ds_a, dtau_a, dkappa_a);
        }

        const ConeVec u_aff = scale_s_dir(W, ds_a);
        const ConeVec v_aff = scale_z_dir(W, dz_a);
        double alpha_aff = std::min(step_to_boundary(W, u_aff), step_to_boundary(W, v_aff));
        if (dtau_a < 0.0) alpha_aff = std::min(alpha_aff, -tau / dtau_a);
        if (dkappa_a < 0.0) alpha_aff = std::min(alpha_aff, -kappa / dkappa_a);
        alpha_aff = std::min(alpha_aff, 1.0);
        const double sigma = std::pow(1.0 - alpha_aff, 3);

        // combined corrector
        ConeVec d_s = jordan_product(lambda, lambda);
        d_s.axpy(1.0, jordan_product(u_aff, v_aff));
        d_s.lin.array() -= sigma * mu;
        for (auto& B : d_s.blk) B -= sigma * mu * Matrix::Identity(B.rows(), B.cols());
        d_s.scale(-1.0);
        const double d_tk = -(tau * kappa + dtau_a * dkappa_a - sigma * mu);

        Vector dx;
        ConeVec dz = ConeVec::zero(l, dims), ds = ConeVec::zero(l, dims);
        double dtau = 0.0, dkappa = 0.0;
        {
            ConeVec bz = res_z;
            bz.scale(-(1.0 - sigma));
            compute_direction(-(1.0 - sigma) * res_x, bz, -(1.0 - sigma) * res_tau, d_s, d_tk, dx,
                              dz, ds, dtau, dkappa);
        }

        if (std::getenv("CTRLMATCH_SDP_TRACE")) {
            // direction residuals against the Newton equations
            const Vector r1 = mat_t_vec(dz) + prob.c * dtau + (1.0 - sigma) * res_x;
            ConeVec r2 = mat_vec(dx);
            r2.axpy(1.0, ds).axpy(-dtau, prob.h).axpy(1.0 - sigma, res_z);
            const double r3 = prob.c.dot(dx) + prob.h.dot(dz) + dkappa + (1.0 - sigma) * res_tau;
            std::fprintf(stderr, "        dir res: %9.3e %9.3e %9.3e\n", r1.norm(), r2.norm(),
                         std::abs(r3));
        }

        double alpha = std::min(step_to_boundary(W, scale_s_dir(W, ds)),
                                step_to_boundary(W, scale_z_dir(W, dz)));
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkappa < 0.0) alpha = std::min(alpha, -kappa / dkappa);
        alpha = std::min(1.0, 0.99 * alpha);

        x += alpha * dx;
        s.axpy(alpha, ds);
        z.axpy(alpha, dz);
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }

    return finish(SolveStatus::numerical_failure);
}

double clamp_scale(double v) { return 1.0 / std::clamp(v, 1e-8, 1e8); }

// Ruiz-style one-pass equilibration: positive scalar per cone row / PSD block
// and per variable column, plus objective normalization. Positive scalings
// preserve the cones and map solutions one to one.
ConicResult solve_conic(const ConicProblem& prob, double tol) {
    const int m = static_cast<int>(prob.c.size());
    const int l = prob.lin_dim;
    const size_t nb = prob.psd_dims.size();

    Vector row_d = Vector::Ones(l);
    for (int i = 0; i < l; ++i) {
        double mx = std::abs(prob.h.lin(i));
        for (int j = 0; j < m; ++j) mx = std::max(mx, std::abs(prob.G[j].lin(i)));
        row_d(i) = clamp_scale(mx);
    }
    Vector blk_d = Vector::Ones(static_cast<int>(nb));
    for (size_t b = 0; b < nb; ++b) {
        double mx = prob.h.blk[b].cwiseAbs().maxCoeff();
        for (int j = 0; j < m; ++j) mx = std::max(mx, prob.G[j].blk[b].cwiseAbs().maxCoeff());
        blk_d(static_cast<int>(b)) = clamp_scale(mx);
    }
    ConicProblem sp = prob;
    sp.h.lin = row_d.cwiseProduct(prob.h.lin);
    for (size_t b = 0; b < nb; ++b) sp.h.blk[b] *= blk_d(static_cast<int>(b));
    Vector col_e = Vector::Ones(m);
    for (int j = 0; j < m; ++j) {
        sp.G[j].lin = row_d.cwiseProduct(prob.G[j].lin);
        for (size_t b = 0; b < nb; ++b) sp.G[j].blk[b] *= blk_d(static_cast<int>(b));
        double mx = sp.G[j].lin.size() > 0 ? sp.G[j].lin.cwiseAbs().maxCoeff() : 0.0;
        for (const auto& B : sp.G[j].blk) mx = std::max(mx, B.cwiseAbs().maxCoeff());
        col_e(j) = clamp_scale(mx);
        sp.G[j].scale(col_e(j));
    }
    sp.c = prob.c.cwiseProduct(col_e);
    const double obj_s =
        sp.c.size() > 0 && sp.c.lpNorm<Eigen::Infinity>() > 0.0
            ? clamp_scale(sp.c.lpNorm<Eigen::Infinity>())
            : 1.0;
    sp.c *= obj_s;

    ConicResult res = solve_conic_core(sp, tol);
    res.x = col_e.cwiseProduct(res.x);
    res.pobj /= obj_s;
    res.dobj /= obj_s;
    return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// solve_lmi: nullspace elimination of equalities + conic solve
// ---------------------------------------------------------------------------

LmiSolution solve_lmi(const LmiProblem& problem, double tol) {
    tol = std::clamp(tol, 1e-12, 1e-4);
    const int M = problem.num_unknowns_;

    Vector c = Vector::Zero(M);
    for (const auto& [j, C] : problem.objective_.coefficients()) c(j) = C(0, 0);
    const double obj_const = problem.objective_.constant_term()(0, 0);

    int eq_rows = 0;
    for (const auto& m : problem.zero_) eq_rows += static_cast<int>(m.rows() * m.cols());

    LmiSolution sol;
    Vector y0 = Vector::Zero(M);
    Matrix N = Matrix::Identity(M, M);
    if (eq_rows > 0) {
        Matrix E = Matrix::Zero(eq_rows, M);
        Vector f = Vector::Zero(eq_rows);
        int r = 0;
        for (const auto& m : problem.zero_) {
            const Matrix& C0 = m.constant_term();
            for (int i = 0; i < C0.rows(); ++i)
                for (int j = 0; j < C0.cols(); ++j) {
                    f(r) = -C0(i, j);
                    for (const auto& [k, Ck] : m.coefficients()) E(r, k) = Ck(i, j);
                    ++r;
                }
        }
        Eigen::JacobiSVD<Matrix> svd(E, Eigen::ComputeThinU | Eigen::ComputeFullV);
        const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
        const double cutoff = 1e-12 * std::max(1.0, smax);
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()(i) > cutoff) ++rank;
        y0 = svd.solve(f);
        const double eq_res = (E * y0 - f).lpNorm<Eigen::Infinity>();
        if (eq_res > 1e-8 * (1.0 + f.lpNorm<Eigen::Infinity>())) {
            sol.status = SolveStatus::infeasible;
            sol.max_residual = eq_res;
            sol.y = y0;
            return sol;
        }
        N = svd.matrixV().rightCols(M - rank);
    }
    const int q = static_cast<int>(N.cols());

    ConicProblem cp;
    cp.c = N.transpose() * c;
    int lin_dim = 0;
    for (const auto& m : problem.nonneg_) lin_dim += static_cast<int>(m.rows() * m.cols());
    cp.lin_dim = lin_dim;
    for (const auto& m : problem.psd_) cp.psd_dims.push_back(m.rows());
    cp.h = ConeVec::zero(lin_dim, cp.psd_dims);
    cp.G.assign(q, ConeVec::zero(lin_dim, cp.psd_dims));

    auto eval_at_y0 = [&](const AffineMatrix& m) {
        Matrix out = m.constant_term();
        for (const auto& [j, C] : m.coefficients()) out += y0(j) * C;
        return out;
    };
    auto direction_coeff = [&](const AffineMatrix& m, int k) {
        Matrix out = Matrix::Zero(m.rows(), m.cols());
        for (const auto& [j, C] : m.coefficients()) out += N(j, k) * C;
        return out;
    };

    int r = 0;
    for (const auto& m : problem.nonneg_) {
        const Matrix C0 = eval_at_y0(m);
        for (int i = 0; i < C0.rows(); ++i)
            for (int j = 0; j < C0.cols(); ++j) cp.h.lin(r++) = C0(i, j);
    }
    for (int k = 0; k < q; ++k) {
        r = 0;
        for (const auto& m : problem.nonneg_) {
            const Matrix Ck = direction_coeff(m, k);
            for (int i = 0; i < Ck.rows(); ++i)
                for (int j = 0; j < Ck.cols(); ++j) cp.G[k].lin(r++) = -Ck(i, j);
        }
    }
    for (size_t b = 0; b < problem.psd_.size(); ++b) {
        cp.h.blk[b] = symmetrized(eval_at_y0(problem.psd_[b]));
        for (int k = 0; k < q; ++k)
            cp.G[k].blk[b] = -symmetrized(direction_coeff(problem.psd_[b], k));
    }

    if (q == 0) {
        double viol = 0.0;
        if (lin_dim > 0) viol = std::max(viol, -cp.h.lin.minCoeff());
        for (const auto& B : cp.h.blk) viol = std::max(viol, -min_eig_sym(B));
        const double scale = 1.0 + cp.h.norm();
        sol.status = viol <= tol * scale ? SolveStatus::optimal : SolveStatus::infeasible;
        sol.y = y0;
        sol.objective_value = c.dot(y0) + obj_const;
        sol.dual_objective = sol.objective_value;
        sol.max_residual = std::max(0.0, viol);
        return sol;
    }

    ConicResult res = solve_conic(cp, tol);
    sol.status = res.status;
    sol.iterations = res.iterations;
    sol.max_residual = res.max_residual;
    sol.y = y0 + N * res.x;
    if (res.status == SolveStatus::optimal) {
        sol.objective_value = c.dot(sol.y) + obj_const;
        sol.dual_objective = res.dobj + c.dot(y0) + obj_const;
    }
    return sol;
}

LpSolution solve_lp(const Vector& c, const Matrix& F, const Vector& g, double tol) {
    if (F.cols() != c.size() || F.rows() != g.size())
        throw Error(ErrorCode::DimensionMismatch, "solve_lp dimensions are inconsistent");
    tol = std::clamp(tol, 1e-12, 1e-4);
    ConicProblem cp;
    cp.c = -c;  // the conic core minimizes
    cp.lin_dim = static_cast<int>(F.rows());
    cp.h = ConeVec::zero(cp.lin_dim, {});
    cp.h.lin = g;
    cp.G.assign(c.size(), ConeVec::zero(cp.lin_dim, {}));
    for (int j = 0; j < c.size(); ++j) cp.G[j].lin = F.col(j);

    ConicResult res = solve_conic(cp, tol);
    LpSolution out;
    out.status = res.status;
    out.x = res.x;
    if (res.status == SolveStatus::optimal) out.objective = c.dot(res.x);
    return out;
}

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

}  // namespace ctrlmatch
