#include "ctrlmatch/examples.hpp"

#include "ctrlmatch/estimation.hpp"
#include "ctrlmatch/matching.hpp"
#include "ctrlmatch/numerics.hpp"
#include "ctrlmatch/realization.hpp"
#include "ctrlmatch/sim.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/LU>
#include <deque>
#include <fstream>

namespace ctrlmatch {

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Json match_result_to_json(const MatchResult& res) {
    Json j;
    j["formulation"] = to_string(res.formulation);
    j["Q"] = matrix_to_json(res.cost.Q);
    j["R"] = matrix_to_json(res.cost.R);
    j["S"] = matrix_to_json(res.cost.S);
    j["P"] = matrix_to_json(*res.cost.P);
    j["K_verified"] = matrix_to_json(res.k_verified.K);
    j["beta"] = res.beta;
    j["kappa_H"] = res.kappa_h;
    j["kappa_HP"] = res.kappa_hp;
    if (res.gamma_used) j["gamma_used"] = matrix_to_json(*res.gamma_used);
    return j;
}

Json polyhedron_to_json(const Polyhedron& poly) {
    Json j;
    j["F"] = matrix_to_json(poly.F);
    j["g"] = vector_to_json(poly.g);
    return j;
}

// ---------------------------------------------------------------------------
// indefinite_scalar: x+ = 2x + u with stage cost u^2 has two Riccati roots;
// the artifact must land on the stabilizing one.
// ---------------------------------------------------------------------------
Json example_indefinite_scalar(uint64_t, const std::string&) {
    LinearDynamics sys;
    sys.A = scalar(2.0);
    sys.B = scalar(1.0);
    StageCost cost;
    cost.Q = scalar(0.0);
    cost.R = scalar(1.0);
    cost.S = scalar(0.0);
    const auto sol = solve_dare(sys, cost);
    Json j;
    j["P"] = sol.P(0, 0);
    j["K"] = sol.K.K(0, 0);
    j["closed_loop_radius"] = spectral_radius(sys.A - sys.B * sol.K.K);
    j["roots"] = Json::array({0.0, 3.0});
    return j;
}

// ---------------------------------------------------------------------------
// destabilizing_match: the indefinite deviation cost admits K_hat = -2 as a
// (non-stabilizing) Riccati root; the solver returns the stabilizing root and
// the matching front end rejects the gain outright.
// ---------------------------------------------------------------------------
Json example_destabilizing_match(uint64_t, const std::string&) {
    LinearDynamics sys;
    sys.A = scalar(0.9);
    sys.B = scalar(0.1);
    const Gain k_hat{scalar(-2.0)};

    StageCost deviation_cost;  // (u + K x)^2 with Gamma = 1
    deviation_cost.Q = scalar(4.0);
    deviation_cost.R = scalar(1.0);
    deviation_cost.S = scalar(-2.0);

    Json j;
    const auto sol = solve_dare(sys, deviation_cost);
    j["stabilizing_P"] = sol.P(0, 0);
    j["stabilizing_K"] = sol.K.K(0, 0);
    const auto check = verify_match(sys, deviation_cost, k_hat);
    j["gain_error_vs_requested"] = check.gain_error;
    j["requested_gain_stabilizing"] = check.stabilizing;
    try {
        match_direct(sys, k_hat);
        j["match_rejected"] = false;
    } catch (const Error& e) {
        j["match_rejected"] = true;
        j["rejection"] = to_string(e.code());
    }
    return j;
}

// ---------------------------------------------------------------------------
// gamma_tuning: scalar plant with three inputs; different deviation weights
// shape the constrained response while the unconstrained feedback is shared.
// ---------------------------------------------------------------------------
Json example_gamma_tuning(uint64_t, const std::string& out_dir) {
    LinearDynamics sys;
    sys.A = scalar(-0.8);
    sys.B = (Matrix(1, 3) << 0.1, 0.1, 0.1).finished();
    const Gain k_hat{(Matrix(3, 1) << 0.5, 0.5, 0.2).finished()};
    const ConstraintSet cs{scalar(1.0), Matrix::Zero(1, 3), Vector::Constant(1, -0.7)};
    const Polyhedron terminal{scalar(1.0), Vector::Constant(1, 0.7)};
    const Vector x0 = Vector::Constant(1, -1.0);

    Matrix gamma2 = Matrix::Identity(3, 3);
    gamma2(1, 1) = 100.0;
    const MatchResult m1 = match_indirect(sys, k_hat, Matrix::Identity(3, 3));
    const MatchResult m2 = match_indirect(sys, k_hat, gamma2);
    const MatchResult md = match_direct(sys, k_hat);

    Json j;
    j["match_gamma1"] = match_result_to_json(m1);
    j["match_gamma2"] = match_result_to_json(m2);
    j["match_direct"] = match_result_to_json(md);

    auto control_at = [&](const MatchResult& m) {
        const auto problem = build_mpc(sys, m.cost, cs, terminal, 1);
        return mpc_step(problem, x0);
    };
    const MpcStep s1 = control_at(m1);
    const MpcStep s2 = control_at(m2);
    const MpcStep sd = control_at(md);
    j["u_gamma1"] = vector_to_json(s1.u0);
    j["u_gamma2"] = vector_to_json(s2.u0);
    j["u_direct"] = vector_to_json(sd.u0);
    j["deviation_gamma1"] = vector_to_json((s1.u0 + k_hat.K * x0).cwiseAbs());
    j["deviation_gamma2"] = vector_to_json((s2.u0 + k_hat.K * x0).cwiseAbs());

    const Polyhedron mpi = compute_mpi(
        sys.A - sys.B * k_hat.K,
        closed_loop_constraints(scalar(1.0), Matrix::Zero(1, 3), Vector::Constant(1, -0.7), k_hat));
    j["mpi"] = polyhedron_to_json(mpi);

    // closed-loop trace under the identity weighting from the constrained state
    PlantSpec plant;
    plant.kind = PlantSpec::Kind::linear_dt;
    plant.linear = sys;
    plant.nx = 1;
    plant.nu = 3;
    ControllerSpec ctrl;
    ctrl.kind = ControllerSpec::Kind::mpc;
    ctrl.mpc = build_mpc(sys, m1.cost, cs, terminal, 1);
    const SimTrace trace = simulate(plant, ctrl, x0, 20);
    write_file(out_dir + "/gamma_tuning_trace.csv", trace_to_csv(trace));
    return j;
}

// ---------------------------------------------------------------------------
// pid_io: the unstable input-output plant with a hand-tuned PID. Matching
// reproduces the PID inside MPC; raw PID violates the bounds and clipping it
// destabilizes the loop.
// ---------------------------------------------------------------------------
ArxModel pid_plant() {
    ArxModel m;
    m.a_coeffs = {scalar(1.8), scalar(1.2)};
    m.b_coeffs = {scalar(1.0)};
    return m;
}

ConstraintSet pid_constraints(const LinearDynamics& sys) {
    // -24 <= u <= 24, y >= -5 with y_k read through the model row
    ConstraintSet cs;
    cs.C = Matrix::Zero(3, 4);
    cs.D = Matrix::Zero(3, 1);
    cs.C.row(2) = -(*sys.C);
    cs.D(0, 0) = 1.0;
    cs.D(1, 0) = -1.0;
    cs.e = (Vector(3) << -24.0, -24.0, -5.0).finished();
    return cs;
}

Json example_pid_io(uint64_t, const std::string& out_dir) {
    PidParams pid;
    pid.kp = 0.752;
    pid.ki = 0.248;
    pid.kd = 2.237;
    pid.ts = 2.0;
    const auto [sys, k_hat] = pid_to_state_feedback(pid, pid_plant());

    Json j;
    j["K_hat"] = matrix_to_json(k_hat.K);

    MatchOptions min_h;
    min_h.objective = CondObjective::min_cond_h;
    const MatchResult cond_h = match_direct(sys, k_hat, min_h);
    j["kappa_H_min"] = cond_h.kappa_h;

    MatchOptions blk_zero;
    blk_zero.s_policy = SPolicy::zero_s;
    const MatchResult blk_s0 = match_direct(sys, k_hat, blk_zero);
    j["kappa_blkdiag_S0"] = blk_s0.beta;
    const MatchResult blk_free = match_direct(sys, k_hat);
    j["kappa_blkdiag_S_free"] = blk_free.beta;

    // the second gain has no S = 0 match
    const Gain k2{(Matrix(1, 4) << 4.0, 2.0, 0.15, 1.6).finished()};
    try {
        match_direct(sys, k2, blk_zero);
        j["second_gain_S0"] = "feasible";
    } catch (const Error& e) {
        j["second_gain_S0"] = to_string(e.code());
    }
    const MatchResult k2_free = match_direct(sys, k2, min_h);
    j["second_gain_kappa_H"] = k2_free.kappa_h;

    // closed-loop traces
    const ConstraintSet cs = pid_constraints(sys);
    const Polyhedron mpi =
        compute_mpi(sys.A - sys.B * k_hat.K, closed_loop_constraints(cs.C, cs.D, cs.e, k_hat));
    j["mpi_rows"] = mpi.rows();

    PlantSpec plant;
    plant.kind = PlantSpec::Kind::linear_dt;
    plant.linear = sys;
    plant.nx = 4;
    plant.nu = 1;
    plant.ts = pid.ts;
    const Vector x0 = (Vector(4) << 5.225, 4.75, 0.0, 0.0).finished();
    const int steps = 26;

    ControllerSpec mpc_ctrl;
    mpc_ctrl.kind = ControllerSpec::Kind::mpc;
    mpc_ctrl.mpc = build_mpc(sys, blk_free.cost, cs, mpi, 14);
    const SimTrace mpc_trace = simulate(plant, mpc_ctrl, x0, steps);
    write_file(out_dir + "/pid_io_mpc_trace.csv", trace_to_csv(mpc_trace));

    ControllerSpec pid_ctrl;
    pid_ctrl.kind = ControllerSpec::Kind::static_gain;
    pid_ctrl.gain = k_hat;
    const SimTrace pid_trace = simulate(plant, pid_ctrl, x0, steps);
    write_file(out_dir + "/pid_io_pid_trace.csv", trace_to_csv(pid_trace));

    ControllerSpec sat_ctrl = pid_ctrl;
    sat_ctrl.u_lb = -24.0;
    sat_ctrl.u_ub = 24.0;
    const SimTrace sat_trace = simulate(plant, sat_ctrl, x0, steps);
    write_file(out_dir + "/pid_io_pid_saturated_trace.csv", trace_to_csv(sat_trace));

    auto summarize = [&](const SimTrace& t) {
        Json s;
        s["steps"] = t.steps();
        s["max_u"] = t.u.cwiseAbs().maxCoeff();
        double min_y = std::numeric_limits<double>::infinity();
        for (int k = 0; k < t.steps(); ++k)
            min_y = std::min(min_y, ((*sys.C) * t.x.col(k))(0));
        s["min_y"] = min_y;
        s["final_state_norm"] = t.x.col(t.x.cols() - 1).lpNorm<Eigen::Infinity>();
        return s;
    };
    j["mpc"] = summarize(mpc_trace);
    j["pid"] = summarize(pid_trace);
    j["pid_saturated"] = summarize(sat_trace);
    return j;
}

// ---------------------------------------------------------------------------
// cstr: continuous reactor under a saturating PI loop; the PI is matched into
// constrained (N)MPC through discretization, pole placement and an anti-windup
// augmented prediction model.
// ---------------------------------------------------------------------------
struct CstrSetup {
    CstrParams params;
    Vector x_s;        // (T, C_A, I_e)
    double u_s;
    double r_s;
    PidParams pi;
    double ts;
    Matrix A, B, B_r;      // discrete open loop with integrator state
    Matrix A_pi, B_r_pi;   // discrete PI closed loop
    Gain k_bar;            // pole-placed match target
};

// single-input pole placement via Ackermann's formula
Matrix ackermann_gain(const Matrix& A, const Matrix& B, const std::vector<std::complex<double>>& poles) {
    const int n = static_cast<int>(A.rows());
    Matrix ctrb(n, n);
    Matrix col = B;
    for (int i = 0; i < n; ++i) {
        ctrb.col(i) = col;
        col = A * col;
    }
    Eigen::FullPivLU<Matrix> lu(ctrb);
    if (!lu.isInvertible())
        throw Error(ErrorCode::NotStabilizable, "pole placement needs a controllable pair");
    // characteristic polynomial of the desired spectrum
    std::vector<std::complex<double>> coeffs{1.0};
    for (const auto& p : poles) {
        std::vector<std::complex<double>> next(coeffs.size() + 1, 0.0);
        for (size_t i = 0; i < coeffs.size(); ++i) {
            next[i] += coeffs[i];
            next[i + 1] -= coeffs[i] * p;
        }
        coeffs = std::move(next);
    }
    Matrix phi = Matrix::Zero(n, n);
    Matrix power = Matrix::Identity(n, n);
    for (int i = n; i >= 0; --i) {
        phi += coeffs[i].real() * power;
        if (i > 0) power = A * power;
    }
    Matrix last = Matrix::Zero(1, n);
    last(0, n - 1) = 1.0;
    return last * lu.inverse() * phi;
}

CstrSetup cstr_setup() {
    CstrSetup s;
    s.x_s = (Vector(3) << 300.0, 0.39, 59.72).finished();
    s.u_s = 298.59;
    s.r_s = 300.0;
    s.params.cp = cstr_cp_from_setpoint(s.params, s.x_s.head(2), s.u_s);
    s.pi.kp = 0.5;
    s.pi.ki = 5.0;
    s.pi.kaw = 1.0;
    s.pi.u_lb = 250.0;
    s.pi.u_ub = 350.0;
    s.ts = 0.25;
    s.pi.ts = s.ts;

    // open loop with the integrator state: d(I_e)/dt = r - T
    auto f_open = [&](const Vector& x, double u, double r) {
        Vector dx(3);
        dx.head(2) = cstr_rhs(x.head(2), u, s.params);
        dx(2) = r - x(0);
        return dx;
    };
    // PI closed loop (saturation active only far from the setpoint)
    auto f_pi = [&](const Vector& x, double r) {
        const double e = r - x(0);
        const double raw = s.pi.kp * e + s.pi.ki * x(2);
        const double u = std::clamp(raw, *s.pi.u_lb, *s.pi.u_ub);
        Vector dx = f_open(x, u, r);
        dx(2) += *s.pi.kaw * (u - raw);
        return dx;
    };

    auto jac = [&](auto&& fn, const Vector& at, int dims) {
        Matrix J(3, dims);
        const Vector f0 = fn(at);
        for (int i = 0; i < dims; ++i) {
            Vector shifted = at;
            shifted(i) += 1e-6 * (1.0 + std::abs(at(i)));
            J.col(i) = (fn(shifted) - f0) / (1e-6 * (1.0 + std::abs(at(i))));
        }
        return J;
    };

    // continuous-time linearizations at the setpoint
    const Matrix A_c = jac([&](const Vector& x) { return f_open(x, s.u_s, s.r_s); }, s.x_s, 3);
    Matrix B_c(3, 1), Br_c(3, 1);
    {
        const Vector f0 = f_open(s.x_s, s.u_s, s.r_s);
        const double h = 1e-6 * (1.0 + std::abs(s.u_s));
        B_c = (f_open(s.x_s, s.u_s + h, s.r_s) - f0) / h;
        const double hr = 1e-6 * (1.0 + std::abs(s.r_s));
        Br_c = (f_open(s.x_s, s.u_s, s.r_s + hr) - f0) / hr;
    }
    const Matrix Api_c = jac([&](const Vector& x) { return f_pi(x, s.r_s); }, s.x_s, 3);
    Matrix Brpi_c(3, 1);
    {
        const Vector f0 = f_pi(s.x_s, s.r_s);
        const double hr = 1e-6 * (1.0 + std::abs(s.r_s));
        Brpi_c = (f_pi(s.x_s, s.r_s + hr) - f0) / hr;
    }

    auto zoh = [&](const Matrix& Ac, const Matrix& Bc) {
        Matrix aug = Matrix::Zero(4, 4);
        aug.topLeftCorner(3, 3) = Ac * s.ts;
        aug.topRightCorner(3, 1) = Bc * s.ts;
        const Matrix E = aug.exp();
        return std::pair<Matrix, Matrix>(E.topLeftCorner(3, 3), E.topRightCorner(3, 1));
    };
    std::tie(s.A, s.B) = zoh(A_c, B_c);
    std::tie(std::ignore, s.B_r) = zoh(A_c, Br_c);
    std::tie(s.A_pi, s.B_r_pi) = zoh(Api_c, Brpi_c);

    Eigen::EigenSolver<Matrix> es(s.A_pi, false);
    std::vector<std::complex<double>> poles(3);
    for (int i = 0; i < 3; ++i) poles[i] = es.eigenvalues()(i);
    s.k_bar = Gain{ackermann_gain(s.A, s.B, poles)};
    return s;
}

Json example_cstr(uint64_t, const std::string& out_dir) {
    const CstrSetup s = cstr_setup();

    Json j;
    j["cp"] = s.params.cp;
    j["setpoint"] = vector_to_json(s.x_s);
    j["u_s"] = s.u_s;
    j["K_bar"] = matrix_to_json(s.k_bar.K);
    j["pi_poles_matched"] =
        (spectral_radius(s.A - s.B * s.k_bar.K) - spectral_radius(s.A_pi));

    const MatchResult match = match_direct(
        [&] {
            LinearDynamics lin;
            lin.A = s.A;
            lin.B = s.B;
            lin.domain = TimeDomain::discrete;
            lin.ts = s.ts;
            return lin;
        }(),
        s.k_bar);
    j["match"] = match_result_to_json(match);

    // reference step of +30 K partway through the run
    const int steps = 480;
    const int step_at = 40;
    const double r_step = 30.0;
    auto reference = [&](int k) {
        return Vector::Constant(1, k < step_at ? s.r_s : s.r_s + r_step);
    };

    PlantSpec plant;  // physical states only; the integrator lives in the controller
    plant.kind = PlantSpec::Kind::nonlinear_ct;
    plant.rhs = [params = s.params](const Vector& x, const Vector& u) {
        return cstr_rhs(x, u(0), params);
    };
    plant.nx = 2;
    plant.nu = 1;
    plant.ts = s.ts;
    plant.rk4_substeps = 8;
    plant.output = [](const Vector& x, const Vector&) { return x.head(1); };
    const Vector x0 = (Vector(2) << 300.0, 0.39).finished();

    // PI loop
    ControllerSpec pi_ctrl;
    pi_ctrl.kind = ControllerSpec::Kind::custom;
    pi_ctrl.reference = reference;
    {
        auto integral = std::make_shared<double>(s.x_s(2));
        PidParams pi = s.pi;
        pi_ctrl.law = [integral, pi](int, const Vector&, const Vector& y, const Vector& r) {
            PidAwState state{*integral};
            const auto res = pid_aw_step(pi, state, r(0) - y(0));
            *integral = res.state.integral;
            return Vector::Constant(1, res.u);
        };
    }
    const SimTrace pi_trace = simulate(plant, pi_ctrl, x0, steps);
    write_file(out_dir + "/cstr_pi_trace.csv", trace_to_csv(pi_trace));

    // ceiling between the target (330) and the unconstrained overshoot (~338)
    const double t_max = 333.0;
    j["temperature_limit"] = t_max;

    // shared pieces of the MPC pipeline
    const double ts_kaw = s.ts * *s.pi.kaw;
    const Matrix e3 = (Matrix(3, 1) << 0, 0, 1).finished();
    const int horizon = 24;

    auto mpc_law = [&](bool temp_constraint) {
        auto integral = std::make_shared<double>(s.x_s(2));
        CstrSetup cfg = s;
        return [integral, cfg, ts_kaw, e3, horizon, temp_constraint,
                cost = match.cost](int, const Vector& x_plant, const Vector&, const Vector& r) {
            const Vector dr = Vector::Constant(1, r(0) - cfg.r_s);
            // steady state of the discrete PI loop, then the input reference by
            // least squares so that (dxr, dur) is an equilibrium of the model
            const Matrix eye3 = Matrix::Identity(3, 3);
            const Vector dxr = (eye3 - cfg.A_pi).lu().solve(cfg.B_r_pi * dr);
            const Vector resid0 = (cfg.A - eye3) * dxr + cfg.B_r * dr;
            const Vector dur =
                -(cfg.B.transpose() * cfg.B).inverse() * (cfg.B.transpose() * resid0);
            const Vector drift = resid0 + cfg.B * dur;

            LinearDynamics pred;
            pred.A = cfg.A - ts_kaw * e3 * cfg.k_bar.K;
            pred.B = cfg.B + ts_kaw * e3;
            pred.domain = TimeDomain::discrete;
            pred.ts = cfg.ts;

            ConstraintSet cs;
            const int rows = temp_constraint ? 3 : 2;
            cs.C = Matrix::Zero(rows, 3);
            cs.D = Matrix::Zero(rows, 1);
            cs.e = Vector::Zero(rows);
            // u = u_s + dur + mu within the actuator bounds
            cs.D(0, 0) = 1.0;
            cs.e(0) = cfg.u_s + dur(0) - *cfg.pi.u_ub;
            cs.D(1, 0) = -1.0;
            cs.e(1) = *cfg.pi.u_lb - cfg.u_s - dur(0);
            if (temp_constraint) {
                cs.C(2, 0) = 1.0;  // T = x_s(0) + dxr(0) + xi(0) <= t_max
                cs.e(2) = cfg.x_s(0) + dxr(0) - 333.0;
            }

            MpcProblem problem = build_mpc(pred, cost, cs, Polyhedron::unbounded(3), horizon);
            problem.drift = drift;

            Vector dx(3);
            dx.head(2) = x_plant - cfg.x_s.head(2);
            dx(2) = *integral - cfg.x_s(2);
            const Vector xi0 = dx - dxr;
            Vector u;
            try {
                const auto step = mpc_step(problem, xi0);
                u = Vector::Constant(1, cfg.u_s + dur(0) + step.u0(0));
            } catch (const Error&) {
                // matched feedback, clipped to the actuator, when the QP has
                // no feasible point (e.g. the temperature row already violated)
                u = Vector::Constant(1, cfg.u_s + dur(0) - (cfg.k_bar.K * xi0)(0));
            }
            u(0) = std::clamp(u(0), *cfg.pi.u_lb, *cfg.pi.u_ub);
            // integral state propagated through the prediction model
            const double du = u(0) - cfg.u_s;
            const double faw = ts_kaw * ((du - dur(0)) - (cfg.k_bar.K * xi0)(0));
            const double dx3_next = (cfg.A.row(2) * dx)(0) + cfg.B(2, 0) * du +
                                    cfg.B_r(2, 0) * dr(0) + faw;
            *integral = cfg.x_s(2) + dx3_next;
            return u;
        };
    };

    ControllerSpec mpc_ctrl;
    mpc_ctrl.kind = ControllerSpec::Kind::custom;
    mpc_ctrl.reference = reference;
    mpc_ctrl.law = mpc_law(false);
    const SimTrace mpc_trace = simulate(plant, mpc_ctrl, x0, steps);
    write_file(out_dir + "/cstr_mpc_trace.csv", trace_to_csv(mpc_trace));

    ControllerSpec mpcx_ctrl = mpc_ctrl;
    mpcx_ctrl.law = mpc_law(true);
    const SimTrace mpcx_trace = simulate(plant, mpcx_ctrl, x0, steps);
    write_file(out_dir + "/cstr_mpcx_trace.csv", trace_to_csv(mpcx_trace));

    // NMPC: nonlinear prediction in absolute coordinates
    ControllerSpec nmpc_ctrl;
    nmpc_ctrl.kind = ControllerSpec::Kind::custom;
    nmpc_ctrl.reference = reference;
    {
        auto integral = std::make_shared<double>(s.x_s(2));
        CstrSetup cfg = s;
        StageCost cost = match.cost;
        nmpc_ctrl.law = [integral, cfg, ts_kaw, horizon, cost](int, const Vector& x_plant,
                                                               const Vector&, const Vector& r) {
            const Vector dr = Vector::Constant(1, r(0) - cfg.r_s);
            const Matrix eye3 = Matrix::Identity(3, 3);
            const Vector dxr = (eye3 - cfg.A_pi).lu().solve(cfg.B_r_pi * dr);
            const Vector resid0 = (cfg.A - eye3) * dxr + cfg.B_r * dr;
            const Vector dur =
                -(cfg.B.transpose() * cfg.B).inverse() * (cfg.B.transpose() * resid0);
            const Vector x_ref = cfg.x_s + dxr;
            const Vector u_ref = Vector::Constant(1, cfg.u_s + dur(0));

            NmpcProblem nl;
            nl.dynamics.f = [cfg, ts_kaw, r, x_ref, u_ref](const Vector& x, const Vector& u) {
                Vector next(3);
                // RK4 on the reactor states over one sample
                Vector z = x.head(2);
                const int sub = 8;
                const double h = cfg.ts / sub;
                for (int q = 0; q < sub; ++q) {
                    const Vector k1 = cstr_rhs(z, u(0), cfg.params);
                    const Vector k2 = cstr_rhs(z + 0.5 * h * k1, u(0), cfg.params);
                    const Vector k3 = cstr_rhs(z + 0.5 * h * k2, u(0), cfg.params);
                    const Vector k4 = cstr_rhs(z + h * k3, u(0), cfg.params);
                    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                next.head(2) = z;
                const double faw =
                    ts_kaw * ((u(0) - u_ref(0)) - (cfg.k_bar.K * (x - x_ref))(0));
                next(2) = x(2) + cfg.ts * (r(0) - x(0)) + faw;
                return next;
            };
            nl.cost = cost;
            ConstraintSet cs;
            cs.C = Matrix::Zero(3, 3);
            cs.D = Matrix::Zero(3, 1);
            cs.e = Vector::Zero(3);
            cs.D(0, 0) = 1.0;
            cs.e(0) = -*cfg.pi.u_ub;
            cs.D(1, 0) = -1.0;
            cs.e(1) = *cfg.pi.u_lb;
            cs.C(2, 0) = 1.0;
            cs.e(2) = -333.0;
            nl.constraints = cs;
            nl.terminal_set = Polyhedron::unbounded(3);
            nl.horizon = horizon;
            nl.x_ref = x_ref;
            nl.u_ref = u_ref;

            Vector x(3);
            x.head(2) = x_plant;
            x(2) = *integral;
            Vector u;
            try {
                u = nmpc_sqp_step(nl, x, 30).u0;
            } catch (const Error&) {
                u = Vector::Constant(1, u_ref(0) - (cfg.k_bar.K * (x - x_ref))(0));
            }
            u(0) = std::clamp(u(0), *cfg.pi.u_lb, *cfg.pi.u_ub);
            const Vector next = nl.dynamics.f(x, u);
            *integral = next(2);
            return u;
        };
    }
    const SimTrace nmpc_trace = simulate(plant, nmpc_ctrl, x0, steps);
    write_file(out_dir + "/cstr_nmpc_trace.csv", trace_to_csv(nmpc_trace));

    auto peak_temperature = [](const SimTrace& t) { return t.x.row(0).maxCoeff(); };
    j["pi_peak_T"] = peak_temperature(pi_trace);
    j["mpc_peak_T"] = peak_temperature(mpc_trace);
    j["mpcx_peak_T"] = peak_temperature(mpcx_trace);
    j["nmpc_peak_T"] = peak_temperature(nmpc_trace);
    j["pi_final_T"] = pi_trace.x(0, pi_trace.x.cols() - 1);
    j["nmpc_final_T"] = nmpc_trace.x(0, nmpc_trace.x.cols() - 1);
    return j;
}

// ---------------------------------------------------------------------------
// hinf_mhe: robust observer design matched into a constrained MHE.
// ---------------------------------------------------------------------------
Json example_hinf_mhe(uint64_t seed, const std::string& out_dir) {
    const Matrix A = (Matrix(2, 2) << 0.93, 0.09, -0.61, 0.92).finished();
    const Matrix B = (Matrix(2, 2) << 0.01, 0.01, 0.003, 0.12).finished();
    const Matrix C = (Matrix(1, 2) << 1, 0).finished();
    const Matrix W = 10.0 * Matrix::Identity(2, 2);
    const Matrix V = 0.01 * Matrix::Identity(1, 1);
    const Matrix G_shape = (Matrix(2, 2) << 0.1, 0, 0, 1).finished();

    Json j;
    const auto kalman_fp = hinf_fixed_point(A, B, C, W, V, Matrix::Zero(2, 2));
    const auto design = hinf_design(A, B, C, W, V, G_shape);
    j["L_kalman"] = matrix_to_json(kalman_fp.L.L);
    j["L_hinf"] = matrix_to_json(design.L.L);
    j["gamma_star"] = design.gamma_star;

    const auto tuned = match_observer(A, C, design.L);
    j["tuned_weight_inverse"] = matrix_to_json(tuned.noise.assemble_h().inverse());

    NoiseModel standard;
    standard.Qw = B * W * B.transpose();
    standard.Rv = V;
    standard.Svw = Matrix::Zero(1, 2);
    const auto standard_ss = kalman_steady_state(A, C, standard);

    // w >= 0 expressed on the state noise through the invertible input map
    const Matrix B_inv = B.inverse();
    const Polyhedron w_nonneg{-B_inv, Vector::Zero(2)};

    const int steps = 120;
    const int window = 10;
    auto run_batch = [&](uint64_t run_seed) {
        // truth: x+ = (A + nonlinear perturbation) x + B w, w >= 0
        GaussianSampler wgen(run_seed);
        GaussianSampler vgen(run_seed ^ 0x9e3779b97f4a7c15ULL);
        Matrix xs(2, steps + 1);
        xs.col(0) = (Vector(2) << 1.0, 1.0).finished();
        Matrix ys(1, steps);
        Matrix ws(2, steps);
        for (int k = 0; k < steps; ++k) {
            Vector w(2);
            w << std::abs(std::sqrt(10.0) * wgen.standard_normal()),
                std::abs(std::sqrt(10.0) * wgen.standard_normal());
            ws.col(k) = w;
            ys(0, k) = (C * xs.col(k))(0) + 0.1 * vgen.standard_normal();
            Matrix A_nl = A;
            A_nl(1, 0) += -2.0 * xs.col(k)(1);
            A_nl(1, 1) += 0.1 * xs.col(k)(1);
            xs.col(k + 1) = A_nl * xs.col(k) + B * w;
        }

        auto run_mhe = [&](const NoiseModel& noise, const Matrix& arrival_p) {
            std::deque<Vector> measurements;
            Vector arrival_x = xs.col(0);
            Matrix est(2, steps);
            Vector pending_arrival = arrival_x;
            for (int k = 0; k < steps; ++k) {
                measurements.push_back(ys.col(k));
                if (static_cast<int>(measurements.size()) > window) {
                    measurements.pop_front();
                }
                EstimatorState arrival{arrival_x, arrival_p};
                const auto sol = mhe_horizon_solve(
                    A, C, noise, arrival,
                    {measurements.begin(), measurements.end()}, w_nonneg);
                est.col(k) = sol.states.col(sol.states.cols() - 1);
                if (static_cast<int>(measurements.size()) == window)
                    arrival_x = sol.states.col(1);
            }
            return est;
        };

        const Matrix est_tuned = run_mhe(tuned.noise, tuned.P);
        const Matrix est_standard = run_mhe(standard, standard_ss.P_plus);

        Matrix err_tuned(2, steps), err_standard(2, steps);
        for (int k = 0; k < steps; ++k) {
            err_tuned.col(k) = est_tuned.col(k) - xs.col(k + 1);
            err_standard.col(k) = est_standard.col(k) - xs.col(k + 1);
        }
        return std::tuple<double, double, Matrix, Matrix, Matrix, Matrix>(
            rms(err_tuned), rms(err_standard), xs, ys, est_tuned, est_standard);
    };

    Json batches = Json::array();
    int tuned_wins = 0;
    for (int run = 0; run < 5; ++run) {
        const auto [rms_tuned, rms_standard, xs, ys, est_t, est_s] = run_batch(seed + run);
        Json entry;
        entry["seed"] = seed + run;
        entry["rms_tuned"] = rms_tuned;
        entry["rms_standard"] = rms_standard;
        batches.push_back(entry);
        if (rms_tuned < rms_standard) ++tuned_wins;

        if (run == 0) {
            std::string csv = "t,x1,x2,y1,xt1,xt2,xs1,xs2\n";
            for (int k = 0; k < steps; ++k) {
                csv += format_double(k) + "," + format_double(xs(0, k + 1)) + "," +
                       format_double(xs(1, k + 1)) + "," + format_double(ys(0, k)) + "," +
                       format_double(est_t(0, k)) + "," + format_double(est_t(1, k)) + "," +
                       format_double(est_s(0, k)) + "," + format_double(est_s(1, k)) + "\n";
            }
            write_file(out_dir + "/hinf_mhe_trace.csv", csv);
        }
    }
    j["runs"] = batches;
    j["tuned_wins"] = tuned_wins;
    return j;
}

}  // namespace

std::vector<std::string> examples_list() {
    return {"indefinite_scalar", "destabilizing_match", "gamma_tuning",
            "pid_io",            "cstr",                "hinf_mhe"};
}

Json run_example(const std::string& name, uint64_t seed, const std::string& out_dir) {
    Json result;
    if (name == "indefinite_scalar") result = example_indefinite_scalar(seed, out_dir);
    else if (name == "destabilizing_match") result = example_destabilizing_match(seed, out_dir);
    else if (name == "gamma_tuning") result = example_gamma_tuning(seed, out_dir);
    else if (name == "pid_io") result = example_pid_io(seed, out_dir);
    else if (name == "cstr") result = example_cstr(seed, out_dir);
    else if (name == "hinf_mhe") result = example_hinf_mhe(seed, out_dir);
    else
        throw Error(ErrorCode::DimensionMismatch, "unknown example '" + name + "'");
    result["example"] = name;
    return result;
}

// ---------------------------------------------------------------------------
// CLI job dispatch
// ---------------------------------------------------------------------------

namespace {

LinearDynamics plant_from_json(const Json& j) {
    require_keys(j, {"A", "B", "C", "D", "domain", "ts"}, "plant");
    LinearDynamics sys;
    sys.A = matrix_from_json(j.at("A"));
    sys.B = matrix_from_json(j.at("B"));
    if (j.contains("C")) sys.C = matrix_from_json(j.at("C"));
    if (j.contains("D")) sys.D = matrix_from_json(j.at("D"));
    if (j.contains("domain")) {
        const std::string domain = j.at("domain").get<std::string>();
        if (domain == "discrete") sys.domain = TimeDomain::discrete;
        else if (domain == "continuous") sys.domain = TimeDomain::continuous;
        else
            throw Error(ErrorCode::ConfigParse, "domain must be discrete or continuous");
    }
    if (j.contains("ts")) sys.ts = j.at("ts").get<double>();
    sys.validate();
    return sys;
}

ConstraintSet constraints_from_json(const Json& j, int nx, int nu) {
    require_keys(j, {"C", "D", "e"}, "constraints");
    ConstraintSet cs;
    cs.C = matrix_from_json(j.at("C"));
    cs.D = matrix_from_json(j.at("D"));
    cs.e = vector_from_json(j.at("e"));
    cs.validate(nx, nu);
    return cs;
}

MatchOptions match_options_from_json(const Json& j, std::optional<double> tol_override) {
    MatchOptions opts;
    if (j.contains("s_policy")) {
        const std::string policy = j.at("s_policy").get<std::string>();
        if (policy == "free") opts.s_policy = SPolicy::free_s;
        else if (policy == "zero") opts.s_policy = SPolicy::zero_s;
        else if (policy == "l1_min") opts.s_policy = SPolicy::l1_min;
        else
            throw Error(ErrorCode::ConfigParse, "s_policy must be free, zero or l1_min");
    }
    if (j.contains("objective")) {
        const std::string obj = j.at("objective").get<std::string>();
        if (obj == "min_cond_h") opts.objective = CondObjective::min_cond_h;
        else if (obj == "min_cond_blkdiag_h_p") opts.objective = CondObjective::min_cond_blkdiag_h_p;
        else
            throw Error(ErrorCode::ConfigParse, "unknown conditioning objective");
    }
    if (j.contains("tol")) opts.tol = j.at("tol").get<double>();
    if (tol_override) opts.tol = *tol_override;
    return opts;
}

Json job_match(const Json& config, std::optional<double> tol_override) {
    require_keys(config, {"schema_version", "job", "plant", "gain", "options", "seed"}, "config");
    const LinearDynamics sys = plant_from_json(config.at("plant"));
    const Gain k_hat{matrix_from_json(config.at("gain"))};
    Json options = config.value("options", Json::object());
    require_keys(options,
                 {"formulation", "gamma", "s_policy", "objective", "tol", "qbar", "rbar_seed"},
                 "options");
    const MatchOptions opts = match_options_from_json(options, tol_override);
    const std::string formulation = options.value("formulation", "direct");

    MatchResult res;
    if (formulation == "direct") res = match_direct(sys, k_hat, opts);
    else if (formulation == "gamma_opt") res = match_gamma_opt(sys, k_hat, opts);
    else if (formulation == "indirect") {
        if (!options.contains("gamma"))
            throw Error(ErrorCode::ConfigParse, "indirect matching needs options.gamma");
        res = match_indirect(sys, k_hat, matrix_from_json(options.at("gamma")), opts);
    } else if (formulation == "constructive") {
        const Matrix qbar = options.contains("qbar") ? matrix_from_json(options.at("qbar"))
                                                     : Matrix::Identity(sys.nx(), sys.nx());
        const Matrix rbar = options.contains("rbar_seed")
                                ? matrix_from_json(options.at("rbar_seed"))
                                : Matrix::Identity(sys.nu(), sys.nu());
        res = match_constructive(sys, k_hat, qbar, rbar);
    } else {
        throw Error(ErrorCode::ConfigParse, "unknown formulation '" + formulation + "'");
    }
    return match_result_to_json(res);
}

Json job_mpi(const Json& config) {
    require_keys(config, {"schema_version", "job", "plant", "gain", "constraints", "options",
                          "seed"},
                 "config");
    const LinearDynamics sys = plant_from_json(config.at("plant"));
    const Gain k_hat{matrix_from_json(config.at("gain"))};
    const ConstraintSet cs = constraints_from_json(config.at("constraints"), sys.nx(), sys.nu());
    int max_iter = 500;
    if (config.contains("options")) {
        require_keys(config.at("options"), {"max_iter"}, "options");
        max_iter = config.at("options").value("max_iter", 500);
    }
    const Polyhedron closed = closed_loop_constraints(cs.C, cs.D, cs.e, k_hat);
    const Polyhedron mpi = compute_mpi(sys.A - sys.B * k_hat.K, closed, max_iter);
    Json j;
    j["closed_loop"] = polyhedron_to_json(closed);
    j["mpi"] = polyhedron_to_json(mpi);
    return j;
}

Json job_mpc_sim(const Json& config, const std::string& out_dir,
                 std::optional<double> tol_override) {
    require_keys(config, {"schema_version", "job", "plant", "gain", "constraints", "options",
                          "horizon", "steps", "x0", "seed"},
                 "config");
    const LinearDynamics sys = plant_from_json(config.at("plant"));
    const Gain k_hat{matrix_from_json(config.at("gain"))};
    const ConstraintSet cs = constraints_from_json(config.at("constraints"), sys.nx(), sys.nu());
    const int horizon = config.value("horizon", 10);
    const int steps = config.value("steps", 50);
    const Vector x0 = vector_from_json(config.at("x0"));
    const MatchOptions opts =
        match_options_from_json(config.value("options", Json::object()), tol_override);

    const MatchResult match = match_direct(sys, k_hat, opts);
    const Polyhedron mpi = compute_mpi(sys.A - sys.B * k_hat.K,
                                       closed_loop_constraints(cs.C, cs.D, cs.e, k_hat));

    PlantSpec plant;
    plant.kind = PlantSpec::Kind::linear_dt;
    plant.linear = sys;
    plant.nx = sys.nx();
    plant.nu = sys.nu();
    plant.ts = sys.ts.value_or(1.0);
    ControllerSpec ctrl;
    ctrl.kind = ControllerSpec::Kind::mpc;
    ctrl.mpc = build_mpc(sys, match.cost, cs, mpi, horizon);
    const SimTrace trace = simulate(plant, ctrl, x0, steps);
    write_file(out_dir + "/mpc_sim_trace.csv", trace_to_csv(trace));

    Json j;
    j["match"] = match_result_to_json(match);
    j["mpi"] = polyhedron_to_json(mpi);
    j["steps_completed"] = trace.steps();
    if (trace.failure_step) j["failure_step"] = *trace.failure_step;
    return j;
}

Json job_mhe_sim(const Json& config, const std::string& out_dir, uint64_t seed) {
    require_keys(config,
                 {"schema_version", "job", "plant", "noise", "window", "steps", "x0",
                  "w_constraints", "seed"},
                 "config");
    const Json& pj = config.at("plant");
    require_keys(pj, {"A", "C"}, "plant");
    const Matrix A = matrix_from_json(pj.at("A"));
    const Matrix C = matrix_from_json(pj.at("C"));
    const Json& nj = config.at("noise");
    require_keys(nj, {"Qw", "Rv", "Svw"}, "noise");
    NoiseModel noise;
    noise.Qw = matrix_from_json(nj.at("Qw"));
    noise.Rv = matrix_from_json(nj.at("Rv"));
    noise.Svw = nj.contains("Svw") ? matrix_from_json(nj.at("Svw"))
                                   : Matrix::Zero(C.rows(), A.rows());
    noise.validate();
    const int steps = config.value("steps", 100);
    const int window = config.value("window", 10);
    const Vector x0 = config.contains("x0") ? vector_from_json(config.at("x0"))
                                            : Vector(Vector::Zero(A.rows()));
    Polyhedron w_poly = Polyhedron::unbounded(static_cast<int>(A.rows()));
    if (config.contains("w_constraints")) {
        const Json& wj = config.at("w_constraints");
        require_keys(wj, {"F", "g"}, "w_constraints");
        w_poly = Polyhedron{matrix_from_json(wj.at("F")), vector_from_json(wj.at("g"))};
    }

    // simulate the linear truth under the declared noise, then run MHE on it
    const Matrix ws = seeded_noise(seed, noise.Qw, steps);
    const Matrix vs = seeded_noise(seed ^ 0x9e3779b97f4a7c15ULL, noise.Rv, steps);
    Matrix xs(A.rows(), steps + 1);
    xs.col(0) = x0;
    Matrix ys(C.rows(), steps);
    for (int k = 0; k < steps; ++k) {
        ys.col(k) = C * xs.col(k) + vs.col(k);
        xs.col(k + 1) = A * xs.col(k) + ws.col(k);
    }

    const auto ss = kalman_steady_state(A, C, noise);
    std::deque<Vector> windowed;
    Vector arrival_x = x0;
    Matrix est(A.rows(), steps);
    for (int k = 0; k < steps; ++k) {
        windowed.push_back(ys.col(k));
        if (static_cast<int>(windowed.size()) > window) windowed.pop_front();
        EstimatorState arrival{arrival_x, ss.P_plus};
        const auto sol = mhe_horizon_solve(A, C, noise, arrival,
                                           {windowed.begin(), windowed.end()}, w_poly);
        est.col(k) = sol.states.col(sol.states.cols() - 1);
        if (static_cast<int>(windowed.size()) == window) arrival_x = sol.states.col(1);
    }

    Matrix err(A.rows(), steps);
    for (int k = 0; k < steps; ++k) err.col(k) = est.col(k) - xs.col(k + 1);
    std::string csv = "t";
    for (int i = 0; i < A.rows(); ++i) csv += ",x" + std::to_string(i + 1);
    for (int i = 0; i < A.rows(); ++i) csv += ",xhat" + std::to_string(i + 1);
    csv += "\n";
    for (int k = 0; k < steps; ++k) {
        csv += format_double(k);
        for (int i = 0; i < A.rows(); ++i) csv += "," + format_double(xs(i, k + 1));
        for (int i = 0; i < A.rows(); ++i) csv += "," + format_double(est(i, k));
        csv += "\n";
    }
    write_file(out_dir + "/mhe_sim_trace.csv", csv);

    Json j;
    j["rms_error"] = rms(err);
    j["kalman_gain"] = matrix_to_json(ss.L.L);
    return j;
}

Json job_realize(const Json& config) {
    require_keys(config, {"schema_version", "job", "arx", "controller", "pid", "seed"}, "config");
    const Json& aj = config.at("arx");
    require_keys(aj, {"a", "b"}, "arx");
    ArxModel model;
    for (const auto& coeff : aj.at("a")) model.a_coeffs.push_back(matrix_from_json(coeff));
    for (const auto& coeff : aj.at("b")) model.b_coeffs.push_back(matrix_from_json(coeff));
    model.validate();

    Json j;
    const LinearDynamics sys = arx_to_ss(model);
    j["A"] = matrix_to_json(sys.A);
    j["B"] = matrix_to_json(sys.B);
    j["C"] = matrix_to_json(*sys.C);

    if (config.contains("controller")) {
        const Json& cj = config.at("controller");
        require_keys(cj, {"c", "d"}, "controller");
        IoController ctrl;
        if (cj.contains("c"))
            for (const auto& coeff : cj.at("c")) ctrl.c_coeffs.push_back(matrix_from_json(coeff));
        for (const auto& coeff : cj.at("d")) ctrl.d_coeffs.push_back(matrix_from_json(coeff));
        j["K_hat"] = matrix_to_json(io_controller_to_gain(ctrl, model).K);
    }
    if (config.contains("pid")) {
        const Json& pj = config.at("pid");
        require_keys(pj, {"kp", "ki", "kd", "ts"}, "pid");
        PidParams pid;
        pid.kp = pj.value("kp", 0.0);
        pid.ki = pj.value("ki", 0.0);
        pid.kd = pj.value("kd", 0.0);
        pid.ts = pj.value("ts", 1.0);
        const auto [aug, gain] = pid_to_state_feedback(pid, model);
        j["pid_A"] = matrix_to_json(aug.A);
        j["pid_K_hat"] = matrix_to_json(gain.K);
    }
    return j;
}

}  // namespace

int run_job(const std::string& config_path, const std::string& out_dir,
            std::optional<uint64_t> seed_override, std::optional<double> tol_override) {
    try {
        std::ifstream stream(config_path);
        if (!stream) throw Error(ErrorCode::Io, "cannot read config " + config_path);
        Json config;
        try {
            config = Json::parse(stream);
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::ConfigParse, e.what());
        }
        if (!config.is_object() || !config.contains("schema_version") ||
            !config.at("schema_version").is_number_integer() ||
            config.at("schema_version").get<int>() != 1)
            throw Error(ErrorCode::ConfigParse, "schema_version must be the integer 1");
        if (!config.contains("job") || !config.at("job").is_string())
            throw Error(ErrorCode::ConfigParse, "job name is required");
        const std::string job = config.at("job").get<std::string>();
        uint64_t seed = config.value("seed", 0ULL);
        if (seed_override) seed = *seed_override;

        Json result;
        if (job == "match") result = job_match(config, tol_override);
        else if (job == "mpi") result = job_mpi(config);
        else if (job == "mpc_sim") result = job_mpc_sim(config, out_dir, tol_override);
        else if (job == "mhe_sim") result = job_mhe_sim(config, out_dir, seed);
        else if (job == "realize") result = job_realize(config);
        else if (job == "example") {
            require_keys(config, {"schema_version", "job", "name", "seed"}, "config");
            if (!config.contains("name"))
                throw Error(ErrorCode::ConfigParse, "example job needs a name");
            result = run_example(config.at("name").get<std::string>(), seed, out_dir);
        } else {
            throw Error(ErrorCode::ConfigParse, "unknown job '" + job + "'");
        }
        result["schema_version"] = 1;
        result["job"] = job;
        write_file(out_dir + "/result.json", result.dump(2) + "\n");
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.code()) {
            case ErrorCode::ConfigParse: return 4;
            case ErrorCode::Io: return 5;
            default: return is_domain_error(e.code()) ? 2 : 3;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace ctrlmatch
