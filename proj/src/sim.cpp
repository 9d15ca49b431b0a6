#include "ctrlmatch/sim.hpp"

#include "ctrlmatch/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace ctrlmatch {

namespace {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Xoshiro256pp::Xoshiro256pp(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

uint64_t Xoshiro256pp::next() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Xoshiro256pp::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double GaussianSampler::standard_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = rng_.uniform();
    while (u1 <= 0.0) u1 = rng_.uniform();
    const double u2 = rng_.uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Matrix seeded_noise(uint64_t seed, const Matrix& covariance, int n_samples) {
    if (covariance.rows() != covariance.cols())
        throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
    const int dim = static_cast<int>(covariance.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(covariance));
    const Vector lam = es.eigenvalues().cwiseMax(0.0);
    const Matrix factor = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();

    GaussianSampler sampler(seed);
    Matrix out(dim, n_samples);
    for (int j = 0; j < n_samples; ++j)
        for (int i = 0; i < dim; ++i) out(i, j) = sampler.standard_normal();
    return factor * out;
}

Vector cstr_rhs(const Vector& x, double u, const CstrParams& p) {
    if (x.size() != 2) throw Error(ErrorCode::DimensionMismatch, "CSTR state is (T, C_A)");
    const double T = x(0);
    const double ca = x(1);
    const double expo = p.arrhenius_negative_exponent ? -p.e_over_r / T : p.e_over_r / T;
    const double rate = p.k0 * std::exp(expo);
    Vector dx(2);
    dx(0) = p.q / p.volume * (p.t_f - T) +
            p.heat_of_reaction / (p.rho * p.cp) * rate * ca +
            p.ua / (p.volume * p.rho * p.cp) * (u - T);
    dx(1) = p.q / p.volume * (p.c_af - ca) - rate * ca;
    return dx;
}

double cstr_cp_from_setpoint(const CstrParams& params, const Vector& x_s, double u_s) {
    const double T = x_s(0);
    const double ca = x_s(1);
    const double expo = params.arrhenius_negative_exponent ? -params.e_over_r / T
                                                           : params.e_over_r / T;
    const double rate = params.k0 * std::exp(expo);
    const double heat_terms =
        params.heat_of_reaction * rate * ca + params.ua / params.volume * (u_s - T);
    const double flow_term = params.q / params.volume * (params.t_f - T);
    return -heat_terms / (params.rho * flow_term);
}

PidStepResult pid_aw_step(const PidParams& pid, const PidAwState& state, double e) {
    if (pid.u_lb && pid.u_ub && *pid.u_lb >= *pid.u_ub)
        throw Error(ErrorCode::DimensionMismatch, "u_lb must be below u_ub");
    const double raw = pid.kp * e + pid.ki * state.integral;
    double u = raw;
    if (pid.u_lb) u = std::max(u, *pid.u_lb);
    if (pid.u_ub) u = std::min(u, *pid.u_ub);
    const double kaw = pid.kaw.value_or(0.0);
    PidStepResult out;
    out.u = u;
    out.state.integral = state.integral + pid.ts * (e + kaw * (u - raw));
    return out;
}

double rms(const Matrix& signal) {
    if (signal.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "empty signal");
    double acc = 0.0;
    for (int j = 0; j < signal.cols(); ++j) acc += signal.col(j).squaredNorm();
    return std::sqrt(acc / static_cast<double>(signal.cols()));
}

namespace {

struct PlantStepper {
    const PlantSpec& spec;
    LinearDynamics zoh;  // cached discretization for linear_ct

    explicit PlantStepper(const PlantSpec& plant) : spec(plant) {
        if (spec.kind == PlantSpec::Kind::linear_ct) zoh = discretize_zoh(spec.linear, spec.ts);
    }

    Vector advance(const Vector& x, const Vector& u) const {
        switch (spec.kind) {
            case PlantSpec::Kind::linear_dt:
                return spec.linear.A * x + spec.linear.B * u;
            case PlantSpec::Kind::linear_ct:
                return zoh.A * x + zoh.B * u;
            case PlantSpec::Kind::nonlinear_dt:
                return spec.rhs(x, u);
            case PlantSpec::Kind::nonlinear_ct: {
                Vector z = x;
                const double h = spec.ts / spec.rk4_substeps;
                for (int s = 0; s < spec.rk4_substeps; ++s) {
                    const Vector k1 = spec.rhs(z, u);
                    const Vector k2 = spec.rhs(z + 0.5 * h * k1, u);
                    const Vector k3 = spec.rhs(z + 0.5 * h * k2, u);
                    const Vector k4 = spec.rhs(z + h * k3, u);
                    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                return z;
            }
        }
        throw Error(ErrorCode::DimensionMismatch, "unknown plant kind");
    }

    Vector measure(const Vector& x, const Vector& u) const {
        if (spec.output) return spec.output(x, u);
        if ((spec.kind == PlantSpec::Kind::linear_dt || spec.kind == PlantSpec::Kind::linear_ct) &&
            spec.linear.C) {
            Vector y = *spec.linear.C * x;
            if (spec.linear.D) y += *spec.linear.D * u;
            return y;
        }
        return x;
    }
};

}  // namespace

SimTrace simulate(const PlantSpec& plant, const ControllerSpec& controller, const Vector& x0,
                  int steps, const std::optional<NoiseSpec>& noise) {
    if (steps < 1) throw Error(ErrorCode::DimensionMismatch, "need at least one step");
    if (plant.rk4_substeps < 1)
        throw Error(ErrorCode::DimensionMismatch, "rk4 substeps must be positive");
    const int nx = static_cast<int>(x0.size());
    PlantStepper stepper(plant);

    SimTrace trace;
    trace.seed = noise ? noise->seed : 0;
    Matrix w_samples, v_samples;
    const Matrix noise_map =
        plant.noise_input.size() > 0 ? plant.noise_input : Matrix::Identity(nx, nx);
    if (noise) {
        w_samples = seeded_noise(noise->seed, noise->W, steps);
        v_samples = seeded_noise(noise->seed ^ 0x9e3779b97f4a7c15ULL, noise->V, steps);
    }

    const Vector y_probe = stepper.measure(x0, Vector::Zero(plant.nu > 0 ? plant.nu : 1));
    const int ny = static_cast<int>(y_probe.size());

    std::vector<Vector> xs{x0};
    std::vector<Vector> us, ys, rs;
    PidAwState pid_state;

    for (int k = 0; k < steps; ++k) {
        const Vector& x = xs.back();
        if (x.lpNorm<Eigen::Infinity>() > 1e12)
            throw Error(ErrorCode::PlantBlowup, "state norm exceeded 1e12");
        const Vector r = controller.reference ? controller.reference(k) : Vector::Zero(ny);

        // measurement uses the previous input for any feedthrough
        const Vector u_prev = us.empty() ? Vector::Zero(plant.nu > 0 ? plant.nu : 1) : us.back();
        Vector y = stepper.measure(x, u_prev);
        if (noise) y += v_samples.col(k);

        Vector u;
        switch (controller.kind) {
            case ControllerSpec::Kind::static_gain: {
                u = -controller.gain.K * x;
                if (controller.feedforward) u += *controller.feedforward * r;
                if (controller.u_lb) u = u.cwiseMax(*controller.u_lb);
                if (controller.u_ub) u = u.cwiseMin(*controller.u_ub);
                break;
            }
            case ControllerSpec::Kind::pid_aw: {
                const double e = r(0) - y(0);
                const PidStepResult res = pid_aw_step(controller.pid, pid_state, e);
                pid_state = res.state;
                u = Vector::Constant(1, res.u);
                break;
            }
            case ControllerSpec::Kind::mpc: {
                try {
                    u = mpc_step(*controller.mpc, x).u0;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::InfeasibleInitialState) throw;
                    trace.failure_step = k;
                }
                break;
            }
            case ControllerSpec::Kind::nmpc: {
                try {
                    u = nmpc_sqp_step(*controller.nmpc, x).u0;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::QpInfeasibleAtIterate) throw;
                    trace.failure_step = k;
                }
                break;
            }
            case ControllerSpec::Kind::custom:
                u = controller.law(k, x, y, r);
                break;
        }
        if (trace.failure_step) break;

        Vector x_next = stepper.advance(x, u);
        if (noise) x_next += noise_map * w_samples.col(k);

        us.push_back(u);
        ys.push_back(y);
        rs.push_back(r);
        xs.push_back(x_next);
    }

    const int done = static_cast<int>(us.size());
    trace.t = Vector::Zero(done + 1);
    for (int k = 0; k <= done; ++k) trace.t(k) = k * plant.ts;
    trace.x = Matrix::Zero(nx, done + 1);
    for (int k = 0; k <= done; ++k) trace.x.col(k) = xs[k];
    const int nu = done > 0 ? static_cast<int>(us[0].size()) : 0;
    trace.u = Matrix::Zero(nu, done);
    trace.y = Matrix::Zero(ny, done);
    trace.r = Matrix::Zero(ny, done);
    for (int k = 0; k < done; ++k) {
        trace.u.col(k) = us[k];
        trace.y.col(k) = ys[k];
        trace.r.col(k) = rs[k];
    }
    if (noise) {
        trace.w = w_samples.leftCols(done);
        trace.v = v_samples.leftCols(done);
    }
    return trace;
}

}  // namespace ctrlmatch
