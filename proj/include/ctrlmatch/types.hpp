#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace ctrlmatch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class TimeDomain { discrete, continuous };

enum class ErrorCode {
    // numerics
    NotSchurStable,
    NotHurwitzStable,
    NoConvergence,
    NotStabilizable,
    NoStabilizingSolution,
    EigenFailure,
    // sdp / lp
    NumericalFailure,
    DimensionMismatch,
    // matching
    DestabilizingGain,
    SdpInfeasible,
    SPolicyInfeasible,
    GammaNotSPD,
    RbarTooSmall,
    ProvisoViolated,
    // realization
    NotSiso,
    MissingOutputMap,
    SingularDcGain,
    // invariant
    NotFinitelyDetermined,
    EmptyPolyhedron,
    // mpc
    NotPositiveDefinite,
    EmptyTerminalSet,
    Infeasible,
    Unbounded,
    InfeasibleInitialState,
    InfeasibleTrajectory,
    QpInfeasibleAtIterate,
    MaxIterations,
    // estimation
    SingularInnovation,
    SingularWeight,
    NoFeasibleGamma,
    InfeasibleWindow,
    // sim
    PlantBlowup,
    // cli
    ConfigParse,
    Io,
};

const char* to_string(ErrorCode code);

/// True for errors caused by the problem data (CLI exit 2), false for
/// numerical failures of an otherwise well-posed solve (CLI exit 3).
bool is_domain_error(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

/// Plant x+ = Ax + Bu (discrete) or dx/dt = Ax + Bu (continuous),
/// with optional output map y = Cx + Du.
struct LinearDynamics {
    Matrix A;
    Matrix B;
    std::optional<Matrix> C;
    std::optional<Matrix> D;
    TimeDomain domain = TimeDomain::discrete;
    std::optional<double> ts;  // sampling interval, discrete only

    int nx() const { return static_cast<int>(A.rows()); }
    int nu() const { return static_cast<int>(B.cols()); }
    int ny() const { return C ? static_cast<int>(C->rows()) : 0; }

    void validate() const;
};

/// Quadratic stage cost l(x,u) = [x;u]' [[Q, S'],[S, R]] [x;u], with an
/// optional terminal weight P.
struct StageCost {
    Matrix Q;  // nx x nx
    Matrix R;  // nu x nu
    Matrix S;  // nu x nx
    std::optional<Matrix> P;

    int nx() const { return static_cast<int>(Q.rows()); }
    int nu() const { return static_cast<int>(R.rows()); }

    Matrix assemble_h() const;
    static StageCost from_h(const Matrix& H, int nx);

    void validate() const;
};

/// State feedback u = -K x.
struct Gain {
    Matrix K;  // nu x nx

    int nx() const { return static_cast<int>(K.cols()); }
    int nu() const { return static_cast<int>(K.rows()); }
};

}  // namespace ctrlmatch
