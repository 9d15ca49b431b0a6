#include "ctrlmatch/realization.hpp"

#include <Eigen/LU>

namespace ctrlmatch {

void ArxModel::validate() const {
    if (a_coeffs.empty() || b_coeffs.empty())
        throw Error(ErrorCode::DimensionMismatch, "need at least A_1 and B_1");
    const int p = ny();
    const int m = nu();
    for (const auto& Ai : a_coeffs)
        if (Ai.rows() != p || Ai.cols() != p)
            throw Error(ErrorCode::DimensionMismatch, "A coefficients must be ny x ny");
    for (const auto& Bi : b_coeffs)
        if (Bi.rows() != p || Bi.cols() != m)
            throw Error(ErrorCode::DimensionMismatch, "B coefficients must be ny x nu");
}

Vector ArxModel::step(const std::vector<Vector>& ys, const std::vector<Vector>& us) const {
    Vector y = Vector::Zero(ny());
    for (int i = 0; i < na(); ++i)
        if (i < static_cast<int>(ys.size())) y += a_coeffs[i] * ys[i];
    for (int i = 0; i < nb(); ++i)
        if (i < static_cast<int>(us.size())) y += b_coeffs[i] * us[i];
    return y;
}

LinearDynamics arx_to_ss(const ArxModel& model) {
    model.validate();
    const int p = model.ny();
    const int m = model.nu();
    const int na = model.na();
    const int nb = model.nb();
    const int n = p * na + m * (nb - 1);

    LinearDynamics sys;
    sys.A = Matrix::Zero(n, n);
    sys.B = Matrix::Zero(n, m);

    // y_{k+1} row: A_1..A_nA on the output lags, B_2..B_nB on the input lags
    for (int i = 0; i < na; ++i) sys.A.block(0, i * p, p, p) = model.a_coeffs[i];
    for (int i = 2; i <= nb; ++i)
        sys.A.block(0, p * na + (i - 2) * m, p, m) = model.b_coeffs[i - 1];
    sys.B.topRows(p) = model.b_coeffs[0];

    // shift the output lags
    if (na > 1) sys.A.block(p, 0, p * (na - 1), p * (na - 1)).setIdentity();
    // u_k enters the first input-lag slot, older lags shift down
    if (nb >= 2) {
        sys.B.block(p * na, 0, m, m).setIdentity();
        if (nb >= 3)
            sys.A.block(p * na + m, p * na, m * (nb - 2), m * (nb - 2)).setIdentity();
    }

    sys.C = Matrix::Zero(p, n);
    sys.C->leftCols(p).setIdentity();
    sys.D = Matrix::Zero(p, m);
    sys.domain = TimeDomain::discrete;
    return sys;
}

Gain io_controller_to_gain(const IoController& ctrl, const ArxModel& model) {
    model.validate();
    const int p = model.ny();
    const int m = model.nu();
    const int na = model.na();
    const int nb = model.nb();
    if (ctrl.d_coeffs.empty())
        throw Error(ErrorCode::DimensionMismatch, "compensator needs at least D_0");
    if (ctrl.nd() + 1 > na)
        throw Error(ErrorCode::DimensionMismatch,
                    "D coefficients exceed the available output lags");
    if (ctrl.nc() > nb - 1)
        throw Error(ErrorCode::DimensionMismatch,
                    "C coefficients exceed the available input lags");
    for (const auto& Di : ctrl.d_coeffs)
        if (Di.rows() != m || Di.cols() != p)
            throw Error(ErrorCode::DimensionMismatch, "D coefficients must be nu x ny");
    for (const auto& Ci : ctrl.c_coeffs)
        if (Ci.rows() != m || Ci.cols() != m)
            throw Error(ErrorCode::DimensionMismatch, "C coefficients must be nu x nu");

    const int n = p * na + m * (nb - 1);
    Matrix K = Matrix::Zero(m, n);
    for (int i = 0; i <= ctrl.nd(); ++i) K.block(0, i * p, m, p) = -ctrl.d_coeffs[i];
    for (int i = 1; i <= ctrl.nc(); ++i)
        K.block(0, p * na + (i - 1) * m, m, m) = -ctrl.c_coeffs[i - 1];
    return Gain{K};
}

std::pair<LinearDynamics, Gain> pid_to_state_feedback(const PidParams& pid,
                                                      const ArxModel& model) {
    model.validate();
    if (model.ny() != 1 || model.nu() != 1)
        throw Error(ErrorCode::NotSiso, "the PID construction needs a SISO plant");
    if (pid.ts <= 0.0) throw Error(ErrorCode::DimensionMismatch, "ts must be positive");
    if (model.na() > 2 || model.nb() != 1)
        throw Error(ErrorCode::DimensionMismatch,
                    "the 4-state PID construction expects nA <= 2, nB = 1");

    const double a1 = model.a_coeffs[0](0, 0);
    const double a2 = model.na() > 1 ? model.a_coeffs[1](0, 0) : 0.0;
    const double b1 = model.b_coeffs[0](0, 0);
    const double ts = pid.ts;

    LinearDynamics sys;
    sys.A = (Matrix(4, 4) << a1, a2, 0, b1,  //
             1, 0, 0, 0,                     //
             ts * a1, ts * a2, 1, ts * b1,   //
             0, 0, 0, 0)
                .finished();
    sys.B = (Matrix(4, 1) << 0, 0, 0, 1).finished();
    sys.C = (Matrix(1, 4) << a1, a2, 0, b1).finished();  // y_k seen by the state
    sys.D = Matrix::Zero(1, 1);
    sys.domain = TimeDomain::discrete;
    sys.ts = ts;

    const double k_pid = pid.kp + pid.ki * ts + pid.kd / ts;
    Gain k_hat{(Matrix(1, 4) << pid.kd / ts + a1 * k_pid, a2 * k_pid, pid.ki, b1 * k_pid)
                   .finished()};
    return {sys, k_hat};
}

LinearDynamics augment_integrator(const LinearDynamics& sys) {
    sys.validate();
    if (!sys.C) throw Error(ErrorCode::MissingOutputMap, "augment_integrator needs y = Cx + Du");
    const int n = sys.nx();
    const int m = sys.nu();
    const int p = sys.ny();
    const Matrix D = sys.D ? *sys.D : Matrix::Zero(p, m);

    LinearDynamics ext;
    ext.A = Matrix::Zero(n + p, n + p);
    ext.A.topLeftCorner(n, n) = sys.A;
    ext.A.bottomLeftCorner(p, n) = *sys.C;
    ext.A.bottomRightCorner(p, p).setIdentity();
    ext.B = Matrix::Zero(n + p, m);
    ext.B.topRows(n) = sys.B;
    ext.B.bottomRows(p) = D;
    ext.C = Matrix::Zero(p, n + p);
    ext.C->leftCols(n) = *sys.C;
    ext.D = D;
    ext.domain = sys.domain;
    ext.ts = sys.ts;
    return ext;
}

ArxModel velocity_form(const ArxModel& model) {
    model.validate();
    const int p = model.ny();
    const int na = model.na();
    ArxModel out;
    out.b_coeffs = model.b_coeffs;
    out.a_coeffs.resize(na + 1);
    out.a_coeffs[0] = model.a_coeffs[0] + Matrix::Identity(p, p);
    for (int i = 1; i < na; ++i) out.a_coeffs[i] = model.a_coeffs[i] - model.a_coeffs[i - 1];
    out.a_coeffs[na] = -model.a_coeffs[na - 1];
    return out;
}

Matrix tracking_feedforward(const LinearDynamics& sys, const Gain& k_hat) {
    sys.validate();
    if (!sys.C) throw Error(ErrorCode::MissingOutputMap, "tracking_feedforward needs y = Cx + Du");
    if (sys.ny() != sys.nu())
        throw Error(ErrorCode::DimensionMismatch, "feedforward needs a square system");
    const int n = sys.nx();
    const Matrix D = sys.D ? *sys.D : Matrix::Zero(sys.ny(), sys.nu());
    Eigen::FullPivLU<Matrix> inner(Matrix::Identity(n, n) - sys.A + sys.B * k_hat.K);
    if (!inner.isInvertible())
        throw Error(ErrorCode::SingularDcGain, "I - A + B K_hat is singular");
    const Matrix dc = *sys.C * inner.solve(sys.B) + D;
    Eigen::FullPivLU<Matrix> outer(dc);
    if (!outer.isInvertible())
        throw Error(ErrorCode::SingularDcGain, "closed-loop DC gain is singular");
    return outer.inverse();
}

}  // namespace ctrlmatch
