#include "ctrlmatch/types.hpp"

namespace ctrlmatch {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotSchurStable: return "NotSchurStable";
        case ErrorCode::NotHurwitzStable: return "NotHurwitzStable";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::NotStabilizable: return "NotStabilizable";
        case ErrorCode::NoStabilizingSolution: return "NoStabilizingSolution";
        case ErrorCode::EigenFailure: return "EigenFailure";
        case ErrorCode::NumericalFailure: return "NumericalFailure";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DestabilizingGain: return "DestabilizingGain";
        case ErrorCode::SdpInfeasible: return "SdpInfeasible";
        case ErrorCode::SPolicyInfeasible: return "SPolicyInfeasible";
        case ErrorCode::GammaNotSPD: return "GammaNotSPD";
        case ErrorCode::RbarTooSmall: return "RbarTooSmall";
        case ErrorCode::ProvisoViolated: return "ProvisoViolated";
        case ErrorCode::NotSiso: return "NotSiso";
        case ErrorCode::MissingOutputMap: return "MissingOutputMap";
        case ErrorCode::SingularDcGain: return "SingularDcGain";
        case ErrorCode::NotFinitelyDetermined: return "NotFinitelyDetermined";
        case ErrorCode::EmptyPolyhedron: return "EmptyPolyhedron";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::EmptyTerminalSet: return "EmptyTerminalSet";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::Unbounded: return "Unbounded";
        case ErrorCode::InfeasibleInitialState: return "InfeasibleInitialState";
        case ErrorCode::InfeasibleTrajectory: return "InfeasibleTrajectory";
        case ErrorCode::QpInfeasibleAtIterate: return "QpInfeasibleAtIterate";
        case ErrorCode::MaxIterations: return "MaxIterations";
        case ErrorCode::SingularInnovation: return "SingularInnovation";
        case ErrorCode::SingularWeight: return "SingularWeight";
        case ErrorCode::NoFeasibleGamma: return "NoFeasibleGamma";
        case ErrorCode::InfeasibleWindow: return "InfeasibleWindow";
        case ErrorCode::PlantBlowup: return "PlantBlowup";
        case ErrorCode::ConfigParse: return "ConfigParse";
        case ErrorCode::Io: return "Io";
    }
    return "UnknownError";
}

bool is_domain_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::NoConvergence:
        case ErrorCode::NoStabilizingSolution:
        case ErrorCode::EigenFailure:
        case ErrorCode::NumericalFailure:
        case ErrorCode::QpInfeasibleAtIterate:
        case ErrorCode::MaxIterations:
            return false;
        default:
            return true;
    }
}

void LinearDynamics::validate() const {
    if (A.rows() != A.cols()) throw Error(ErrorCode::DimensionMismatch, "A must be square");
    if (A.rows() < 1 || B.cols() < 1)
        throw Error(ErrorCode::DimensionMismatch, "need nx >= 1 and nu >= 1");
    if (B.rows() != A.rows())
        throw Error(ErrorCode::DimensionMismatch, "B row count must match A");
    if (C && C->cols() != A.rows())
        throw Error(ErrorCode::DimensionMismatch, "C column count must match A");
    if (D) {
        if (!C) throw Error(ErrorCode::DimensionMismatch, "D given without C");
        if (D->rows() != C->rows() || D->cols() != B.cols())
            throw Error(ErrorCode::DimensionMismatch, "D must be ny x nu");
    }
    if (ts && *ts <= 0.0) throw Error(ErrorCode::DimensionMismatch, "ts must be positive");
}

Matrix StageCost::assemble_h() const {
    const int n = nx();
    const int m = nu();
    Matrix H(n + m, n + m);
    H.topLeftCorner(n, n) = Q;
    H.topRightCorner(n, m) = S.transpose();
    H.bottomLeftCorner(m, n) = S;
    H.bottomRightCorner(m, m) = R;
    return H;
}

StageCost StageCost::from_h(const Matrix& H, int nx) {
    if (H.rows() != H.cols() || nx < 1 || nx >= H.rows())
        throw Error(ErrorCode::DimensionMismatch, "bad H partition");
    const int m = static_cast<int>(H.rows()) - nx;
    StageCost cost;
    cost.Q = H.topLeftCorner(nx, nx);
    cost.S = H.bottomLeftCorner(m, nx);
    cost.R = H.bottomRightCorner(m, m);
    return cost;
}

void StageCost::validate() const {
    if (Q.rows() != Q.cols() || R.rows() != R.cols())
        throw Error(ErrorCode::DimensionMismatch, "Q and R must be square");
    if (S.rows() != R.rows() || S.cols() != Q.rows())
        throw Error(ErrorCode::DimensionMismatch, "S must be nu x nx");
    const double qtol = 1e-12 * std::max(1.0, Q.norm());
    const double rtol = 1e-12 * std::max(1.0, R.norm());
    if ((Q - Q.transpose()).norm() > qtol)
        throw Error(ErrorCode::DimensionMismatch, "Q is not symmetric");
    if ((R - R.transpose()).norm() > rtol)
        throw Error(ErrorCode::DimensionMismatch, "R is not symmetric");
    if (P) {
        if (P->rows() != Q.rows() || P->cols() != Q.cols())
            throw Error(ErrorCode::DimensionMismatch, "P must be nx x nx");
        if ((*P - P->transpose()).norm() > 1e-12 * std::max(1.0, P->norm()))
            throw Error(ErrorCode::DimensionMismatch, "P is not symmetric");
    }
}

}  // namespace ctrlmatch
