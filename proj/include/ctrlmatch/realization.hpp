#pragma once

#include "ctrlmatch/types.hpp"

#include <utility>
#include <vector>

namespace ctrlmatch {

/// Input-output model A(z^-1) y = B(z^-1) u with
/// A(z^-1) = I - sum A_i z^-i and B(z^-1) = sum_{i>=1} B_i z^-i
/// (strictly causal; coefficients stored as the A_i, not their negatives).
struct ArxModel {
    std::vector<Matrix> a_coeffs;  // A_1 .. A_nA, each ny x ny
    std::vector<Matrix> b_coeffs;  // B_1 .. B_nB, each ny x nu

    int ny() const { return a_coeffs.empty() ? 0 : static_cast<int>(a_coeffs[0].rows()); }
    int nu() const { return b_coeffs.empty() ? 0 : static_cast<int>(b_coeffs[0].cols()); }
    int na() const { return static_cast<int>(a_coeffs.size()); }
    int nb() const { return static_cast<int>(b_coeffs.size()); }

    void validate() const;

    /// one step of the recursion: y_k from past outputs/inputs
    /// (ys[0] = y_{k-1}, us[0] = u_{k-1}, most recent first)
    Vector step(const std::vector<Vector>& ys, const std::vector<Vector>& us) const;
};

/// Dynamic compensator C(z^-1) u = D(z^-1) y with
/// C(z^-1) = I - sum_{i>=1} C_i z^-i, D(z^-1) = sum_{i>=0} D_i z^-i.
struct IoController {
    std::vector<Matrix> c_coeffs;  // C_1 .. C_nC, nu x nu
    std::vector<Matrix> d_coeffs;  // D_0 .. D_nD, nu x ny

    int nc() const { return static_cast<int>(c_coeffs.size()); }
    int nd() const { return static_cast<int>(d_coeffs.size()) - 1; }
};

struct PidParams {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double ts = 1.0;
    std::optional<double> kaw;   // anti-windup gain
    std::optional<double> u_lb;  // saturation bounds
    std::optional<double> u_ub;
};

/// Nonminimal state-space realization with state
/// (y_k, ..., y_{k-nA+1}, u_{k-1}, ..., u_{k-nB+1}).
LinearDynamics arx_to_ss(const ArxModel& model);

/// Static gain reproducing the compensator recursion on the arx_to_ss state.
Gain io_controller_to_gain(const IoController& ctrl, const ArxModel& model);

/// The 4-state integrator-augmented construction for a SISO plant with
/// nA <= 2, nB = 1: state (y_{k-1}, y_{k-2}, yi_{k-1}, u_{k-1}).
std::pair<LinearDynamics, Gain> pid_to_state_feedback(const PidParams& pid,
                                                      const ArxModel& model);

/// Extended system [[A,0],[C,I]], [B;D] with q integrating the output.
LinearDynamics augment_integrator(const LinearDynamics& sys);

/// Tracking error model P(z^-1) e = B(z^-1) du with P = (1 - z^-1) A(z^-1).
ArxModel velocity_form(const ArxModel& model);

/// Feedforward F with u = -Kx + F r giving zero steady-state tracking error.
Matrix tracking_feedforward(const LinearDynamics& sys, const Gain& k_hat);

}  // namespace ctrlmatch
