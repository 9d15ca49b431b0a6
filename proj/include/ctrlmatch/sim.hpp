#pragma once

#include "ctrlmatch/mpc.hpp"
#include "ctrlmatch/realization.hpp"
#include "ctrlmatch/rng.hpp"
#include "ctrlmatch/types.hpp"

#include <functional>

namespace ctrlmatch {

/// Stirred-tank reactor parameters; cp has no trustworthy published value and
/// must be supplied (cstr_cp_from_setpoint derives one from the operating
/// point).
struct CstrParams {
    double volume = 100.0;
    double rho = 1000.0;
    double heat_of_reaction = 5e4;
    double e_over_r = 8750.0;
    double k0 = 7.2e10;
    double ua = 5e4;
    double cp = 1.0;
    bool arrhenius_negative_exponent = true;  // standard sign; the flipped sign is configurable
    // nominal uncontrolled inflows
    double q = 1.0;
    double c_af = 1.0;
    double t_f = 350.0;
};

/// x = (T, C_A), u = coolant temperature.
Vector cstr_rhs(const Vector& x, double u, const CstrParams& params);

/// cp that makes the supplied operating point a temperature equilibrium.
double cstr_cp_from_setpoint(const CstrParams& params, const Vector& x_s, double u_s);

struct PlantSpec {
    enum class Kind { linear_dt, linear_ct, nonlinear_dt, nonlinear_ct };
    Kind kind = Kind::linear_dt;
    LinearDynamics linear;  // linear kinds
    std::function<Vector(const Vector&, const Vector&)> rhs;  // nonlinear kinds
    std::function<Vector(const Vector&, const Vector&)> output;  // default: y = x
    Matrix noise_input;  // maps process noise into the state update (default I)
    int nx = 0;
    int ny = 0;
    int nu = 0;
    double ts = 1.0;
    int rk4_substeps = 1;
};

struct PidAwState {
    double integral = 0.0;
};

struct PidStepResult {
    double u = 0.0;
    PidAwState state;
};

/// PI(D) step with back-calculation anti-windup:
///   u = clamp(Kp e + Ki I), I' = I + ts (e + Kaw (u - (Kp e + Ki I)))
PidStepResult pid_aw_step(const PidParams& pid, const PidAwState& state, double e);

struct ControllerSpec {
    enum class Kind { static_gain, pid_aw, mpc, nmpc, custom };
    Kind kind = Kind::static_gain;
    Gain gain;                          // static_gain
    std::optional<Matrix> feedforward;  // static_gain tracking term
    PidParams pid;                      // pid_aw
    std::optional<MpcProblem> mpc;
    std::optional<NmpcProblem> nmpc;
    std::optional<double> u_lb;  // saturation, static_gain only (pid has its own)
    std::optional<double> u_ub;
    std::function<Vector(int)> reference;  // r_k; empty means zero
    /// custom law (k, x, y, r) -> u for pipelines beyond the built-in kinds
    std::function<Vector(int, const Vector&, const Vector&, const Vector&)> law;
};

struct NoiseSpec {
    Matrix W;  // process noise covariance (dimension of the noise input)
    Matrix V;  // measurement noise covariance
    uint64_t seed = 0;
};

struct SimTrace {
    Vector t;
    Matrix x;  // nx x (steps+1)
    Matrix u;  // nu x steps
    Matrix y;  // ny x steps
    Matrix r;  // ny x steps
    Matrix w;  // realized process noise
    Matrix v;  // realized measurement noise
    uint64_t seed = 0;
    std::optional<int> failure_step;  // set when MPC became infeasible
    int steps() const { return static_cast<int>(u.cols()); }
};

SimTrace simulate(const PlantSpec& plant, const ControllerSpec& controller, const Vector& x0,
                  int steps, const std::optional<NoiseSpec>& noise = std::nullopt);

/// Root-mean-square of a signal laid out one sample per column.
double rms(const Matrix& signal);

}  // namespace ctrlmatch
