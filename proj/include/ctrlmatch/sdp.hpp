#pragma once

#include "ctrlmatch/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace ctrlmatch {

class LmiProblem;

/// Matrix-valued expression that is affine in the problem unknowns:
/// M(y) = C0 + sum_j y_j * Cj. Only constant-by-affine products are
/// representable, so every expression stays affine by construction.
class AffineMatrix {
  public:
    AffineMatrix() = default;
    explicit AffineMatrix(Matrix constant)
        : rows_(static_cast<int>(constant.rows())),
          cols_(static_cast<int>(constant.cols())),
          constant_(std::move(constant)) {}

    static AffineMatrix zero(int rows, int cols) { return AffineMatrix(Matrix::Zero(rows, cols)); }
    static AffineMatrix identity(int n) { return AffineMatrix(Matrix::Identity(n, n)); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    const Matrix& constant_term() const { return constant_; }
    const std::map<int, Matrix>& coefficients() const { return coeffs_; }

    AffineMatrix transpose() const;
    AffineMatrix block(int i, int j, int p, int q) const;
    Matrix evaluate(const Vector& y) const;

    AffineMatrix operator-() const;
    AffineMatrix& operator+=(const AffineMatrix& other);
    AffineMatrix& operator-=(const AffineMatrix& other);

    friend AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b) { return a += b; }
    friend AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b) { return a -= b; }
    friend AffineMatrix operator*(double scale, const AffineMatrix& m);
    friend AffineMatrix operator*(const Matrix& left, const AffineMatrix& m);
    friend AffineMatrix operator*(const AffineMatrix& m, const Matrix& right);

  private:
    int rows_ = 0;
    int cols_ = 0;
    Matrix constant_;
    std::map<int, Matrix> coeffs_;  // unknown index -> coefficient matrix

    friend class LmiProblem;
};

AffineMatrix block2x2(const AffineMatrix& m11, const AffineMatrix& m12, const AffineMatrix& m21,
                      const AffineMatrix& m22);

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

const char* to_string(SolveStatus status);

struct LmiSolution {
    SolveStatus status = SolveStatus::numerical_failure;
    Vector y;                     // flattened values of all unknowns
    double objective_value = 0.0;
    double dual_objective = 0.0;
    double max_residual = 0.0;
    int iterations = 0;
};

/// Linear-matrix-inequality problem: scalar and symmetric-matrix unknowns,
/// a linear objective, PSD and elementwise-nonnegative constraints on affine
/// expressions, and affine equality constraints (eliminated by nullspace
/// parameterization before the cone solve).
class LmiProblem {
  public:
    AffineMatrix scalar_variable(const std::string& name);
    AffineMatrix symmetric_variable(const std::string& name, int n);

    void minimize(const AffineMatrix& objective);  // 1x1 expression
    void add_psd(const AffineMatrix& m);           // m(y) is required PSD
    void add_nonneg(const AffineMatrix& m);        // every entry of m(y) >= 0
    void add_zero(const AffineMatrix& m);          // every entry of m(y) == 0

    int num_unknowns() const { return num_unknowns_; }
    double scalar_value(const std::string& name, const Vector& y) const;
    Matrix value(const std::string& name, const Vector& y) const;

    /// Plain-text rendering (variable table, objective row, constraint
    /// blocks); debugging aid, not a wire protocol.
    std::string dump() const;

    friend LmiSolution solve_lmi(const LmiProblem& problem, double tol);

  private:
    struct VarInfo {
        std::string name;
        int offset;
        int dim;  // 0 for scalar, n for symmetric n x n
    };
    const VarInfo& find(const std::string& name) const;

    int num_unknowns_ = 0;
    std::vector<VarInfo> vars_;
    AffineMatrix objective_ = AffineMatrix::zero(1, 1);
    std::vector<AffineMatrix> psd_;
    std::vector<AffineMatrix> nonneg_;
    std::vector<AffineMatrix> zero_;
};

LmiSolution solve_lmi(const LmiProblem& problem, double tol = 1e-9);

struct LpSolution {
    SolveStatus status = SolveStatus::numerical_failure;
    Vector x;
    double objective = 0.0;
};

/// maximize c'x subject to F x <= g.
LpSolution solve_lp(const Vector& c, const Matrix& F, const Vector& g, double tol = 1e-9);

}  // namespace ctrlmatch
