#include "ctrlmatch/mpc.hpp"

#include "ctrlmatch/numerics.hpp"

#include <cmath>

namespace ctrlmatch {

void ConstraintSet::validate(int nx, int nu) const {
    if (C.rows() != D.rows() || C.rows() != e.size())
        throw Error(ErrorCode::DimensionMismatch, "constraint row counts differ");
    if (rows() > 0 && (C.cols() != nx || D.cols() != nu))
        throw Error(ErrorCode::DimensionMismatch, "constraint column counts differ");
}

MpcProblem build_mpc(const LinearDynamics& sys, const StageCost& cost,
                     const ConstraintSet& constraints, const Polyhedron& terminal_set,
                     int horizon, QpForm form) {
    sys.validate();
    cost.validate();
    if (sys.domain != TimeDomain::discrete)
        throw Error(ErrorCode::DimensionMismatch, "MPC needs a discrete-time model");
    if (horizon < 1) throw Error(ErrorCode::DimensionMismatch, "horizon must be at least 1");
    constraints.validate(sys.nx(), sys.nu());
    if (!cost.P) throw Error(ErrorCode::NotPositiveDefinite, "terminal cost P is required");
    if (!is_positive_definite(cost.assemble_h()) || !is_positive_definite(*cost.P))
        throw Error(ErrorCode::NotPositiveDefinite, "stage and terminal costs must be PD");
    if (terminal_set.rows() > 0) {
        terminal_set.validate();
        if (terminal_set.dim() != sys.nx())
            throw Error(ErrorCode::DimensionMismatch, "terminal set dimension mismatch");
        // cheap nonemptiness certificate
        remove_redundant(terminal_set);
    }

    MpcProblem problem;
    problem.sys = sys;
    problem.cost = cost;
    problem.constraints = constraints;
    problem.terminal_set = terminal_set;
    problem.horizon = horizon;
    problem.form = form;
    problem.drift = Vector::Zero(sys.nx());
    return problem;
}

namespace {

QuadProgram assemble_sparse(const MpcProblem& pb, const Vector& x0) {
    const int n = pb.sys.nx();
    const int m = pb.sys.nu();
    const int N = pb.horizon;
    const int nz = (N + 1) * n + N * m;
    const int nc = pb.constraints.rows();
    const auto xi = [&](int k) { return k * n; };
    const auto ui = [&](int k) { return (N + 1) * n + k * m; };

    QuadProgram qp;
    qp.G = Matrix::Zero(nz, nz);
    qp.a = Vector::Zero(nz);
    for (int k = 0; k < N; ++k) {
        qp.G.block(xi(k), xi(k), n, n) = 2.0 * pb.cost.Q;
        qp.G.block(xi(k), ui(k), n, m) = 2.0 * pb.cost.S.transpose();
        qp.G.block(ui(k), xi(k), m, n) = 2.0 * pb.cost.S;
        qp.G.block(ui(k), ui(k), m, m) = 2.0 * pb.cost.R;
    }
    qp.G.block(xi(N), xi(N), n, n) = 2.0 * (*pb.cost.P);

    qp.E = Matrix::Zero(n * (N + 1), nz);
    qp.t = Vector::Zero(n * (N + 1));
    qp.E.block(0, xi(0), n, n).setIdentity();
    qp.t.head(n) = x0;
    for (int k = 0; k < N; ++k) {
        qp.E.block(n * (k + 1), xi(k + 1), n, n).setIdentity();
        qp.E.block(n * (k + 1), xi(k), n, n) = -pb.sys.A;
        qp.E.block(n * (k + 1), ui(k), n, m) = -pb.sys.B;
        qp.t.segment(n * (k + 1), n) = pb.drift;
    }

    const int tc = pb.terminal_set.rows();
    qp.M = Matrix::Zero(nc * N + tc, nz);
    qp.d = Vector::Zero(nc * N + tc);
    for (int k = 0; k < N; ++k) {
        qp.M.block(nc * k, xi(k), nc, n) = pb.constraints.C;
        qp.M.block(nc * k, ui(k), nc, m) = pb.constraints.D;
        qp.d.segment(nc * k, nc) = -pb.constraints.e;
    }
    if (tc > 0) {
        qp.M.block(nc * N, xi(N), tc, n) = pb.terminal_set.F;
        qp.d.tail(tc) = pb.terminal_set.g;
    }
    return qp;
}

struct CondensedMaps {
    Matrix Sx;  // n(N+1) x n
    Matrix Su;  // n(N+1) x Nm
    Vector Sc;  // n(N+1)
};

CondensedMaps state_maps(const MpcProblem& pb) {
    const int n = pb.sys.nx();
    const int m = pb.sys.nu();
    const int N = pb.horizon;
    CondensedMaps maps;
    maps.Sx = Matrix::Zero(n * (N + 1), n);
    maps.Su = Matrix::Zero(n * (N + 1), N * m);
    maps.Sc = Vector::Zero(n * (N + 1));
    maps.Sx.topRows(n).setIdentity();
    for (int k = 1; k <= N; ++k) {
        maps.Sx.middleRows(n * k, n) = pb.sys.A * maps.Sx.middleRows(n * (k - 1), n);
        maps.Su.middleRows(n * k, n) = pb.sys.A * maps.Su.middleRows(n * (k - 1), n);
        maps.Su.block(n * k, m * (k - 1), n, m) = pb.sys.B;
        maps.Sc.segment(n * k, n) = pb.sys.A * maps.Sc.segment(n * (k - 1), n) + pb.drift;
    }
    return maps;
}

QuadProgram assemble_condensed(const MpcProblem& pb, const Vector& x0) {
    const int n = pb.sys.nx();
    const int m = pb.sys.nu();
    const int N = pb.horizon;
    const int nc = pb.constraints.rows();
    const CondensedMaps maps = state_maps(pb);

    Matrix Qhat = Matrix::Zero(n * (N + 1), n * (N + 1));
    for (int k = 0; k < N; ++k) Qhat.block(n * k, n * k, n, n) = pb.cost.Q;
    Qhat.bottomRightCorner(n, n) = *pb.cost.P;
    Matrix Smap = Matrix::Zero(N * m, n * (N + 1));
    for (int k = 0; k < N; ++k) Smap.block(m * k, n * k, m, n) = pb.cost.S;
    Matrix Rhat = Matrix::Zero(N * m, N * m);
    for (int k = 0; k < N; ++k) Rhat.block(m * k, m * k, m, m) = pb.cost.R;

    const Vector x_free = maps.Sx * x0 + maps.Sc;  // state response to zero input

    QuadProgram qp;
    qp.G = 2.0 * symmetrized(maps.Su.transpose() * Qhat * maps.Su + Smap * maps.Su +
                             maps.Su.transpose() * Smap.transpose() + Rhat);
    qp.a = 2.0 * (maps.Su.transpose() * (Qhat * x_free) + Smap * x_free);
    qp.E = Matrix::Zero(0, N * m);
    qp.t = Vector::Zero(0);

    const int tc = pb.terminal_set.rows();
    qp.M = Matrix::Zero(nc * N + tc, N * m);
    qp.d = Vector::Zero(nc * N + tc);
    for (int k = 0; k < N; ++k) {
        qp.M.block(nc * k, 0, nc, N * m) = pb.constraints.C * maps.Su.middleRows(n * k, n);
        qp.M.block(nc * k, m * k, nc, m) += pb.constraints.D;
        qp.d.segment(nc * k, nc) = -pb.constraints.e - pb.constraints.C * x_free.segment(n * k, n);
    }
    if (tc > 0) {
        qp.M.bottomRows(tc) = pb.terminal_set.F * maps.Su.bottomRows(n);
        qp.d.tail(tc) = pb.terminal_set.g - pb.terminal_set.F * x_free.tail(n);
    }
    return qp;
}

}  // namespace

QuadProgram assemble_qp(const MpcProblem& problem, const Vector& x0) {
    if (x0.size() != problem.sys.nx())
        throw Error(ErrorCode::DimensionMismatch, "initial state dimension mismatch");
    return problem.form == QpForm::sparse ? assemble_sparse(problem, x0)
                                          : assemble_condensed(problem, x0);
}

MpcStep mpc_step(const MpcProblem& problem, const Vector& x0_hat) {
    const int n = problem.sys.nx();
    const int m = problem.sys.nu();
    const int N = problem.horizon;
    const int nc = problem.constraints.rows();

    const QuadProgram qp = assemble_qp(problem, x0_hat);
    QpSolution sol;
    try {
        sol = solve_qp(qp);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Infeasible)
            throw Error(ErrorCode::InfeasibleInitialState,
                        "the MPC problem is infeasible for this initial state");
        throw;
    }

    MpcStep step;
    step.x_traj = Matrix::Zero(n, N + 1);
    step.u_traj = Matrix::Zero(m, N);
    if (problem.form == QpForm::sparse) {
        for (int k = 0; k <= N; ++k) step.x_traj.col(k) = sol.z.segment(n * k, n);
        for (int k = 0; k < N; ++k) step.u_traj.col(k) = sol.z.segment((N + 1) * n + m * k, m);
    } else {
        const CondensedMaps maps = state_maps(problem);
        const Vector xs = maps.Sx * x0_hat + maps.Su * sol.z + maps.Sc;
        for (int k = 0; k <= N; ++k) step.x_traj.col(k) = xs.segment(n * k, n);
        for (int k = 0; k < N; ++k) step.u_traj.col(k) = sol.z.segment(m * k, m);
    }
    step.u0 = step.u_traj.col(0);
    step.stage_multipliers = sol.multipliers.head(nc * N);
    step.terminal_multipliers = sol.multipliers.tail(problem.terminal_set.rows());
    constexpr double kActiveTol = 1e-7;
    step.constrained = (sol.multipliers.size() > 0 &&
                        sol.multipliers.lpNorm<Eigen::Infinity>() > kActiveTol);
    step.objective = sol.objective;
    return step;
}

DeviationCheck deviation_identity_check(const StageCost& cost, const Gain& k_hat,
                                        const LinearDynamics& sys, const Matrix& x_traj,
                                        const Matrix& u_traj) {
    if (!cost.P) throw Error(ErrorCode::NotPositiveDefinite, "terminal P is required");
    const int N = static_cast<int>(u_traj.cols());
    if (x_traj.cols() != N + 1)
        throw Error(ErrorCode::DimensionMismatch, "trajectory lengths are inconsistent");
    double scale = 1.0;
    for (int k = 0; k < N; ++k) {
        const Vector next = sys.A * x_traj.col(k) + sys.B * u_traj.col(k);
        scale = std::max(scale, next.lpNorm<Eigen::Infinity>());
        if ((x_traj.col(k + 1) - next).lpNorm<Eigen::Infinity>() > 1e-9 * scale)
            throw Error(ErrorCode::InfeasibleTrajectory, "trajectory violates the dynamics");
    }

    const Matrix H = cost.assemble_h();
    const Matrix gamma =
        cost.R + sys.B.transpose() * (*cost.P) * sys.B;  // deviation weight

    DeviationCheck check;
    const int n = sys.nx();
    const int m = sys.nu();
    for (int k = 0; k < N; ++k) {
        Vector w(n + m);
        w << x_traj.col(k), u_traj.col(k);
        check.lhs += w.dot(H * w);
        const Vector dev = u_traj.col(k) + k_hat.K * x_traj.col(k);
        check.rhs += dev.dot(gamma * dev);
    }
    check.lhs += x_traj.col(N).dot(*cost.P * x_traj.col(N));
    check.rhs += x_traj.col(0).dot(*cost.P * x_traj.col(0));
    check.gap = std::abs(check.lhs - check.rhs);
    return check;
}

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& fn,
                                  const Vector& at) {
    const Vector f0 = fn(at);
    Matrix J(f0.size(), at.size());
    for (int j = 0; j < at.size(); ++j) {
        const double h = 1e-6 * (1.0 + std::abs(at(j)));
        Vector shifted = at;
        shifted(j) += h;
        J.col(j) = (fn(shifted) - f0) / h;
    }
    return J;
}

NmpcStep nmpc_sqp_step(const NmpcProblem& problem, const Vector& x0_hat, int sqp_iters) {
    if (!problem.cost.P) throw Error(ErrorCode::NotPositiveDefinite, "terminal P is required");
    const int n = static_cast<int>(x0_hat.size());
    const int m = problem.cost.nu();
    const int N = problem.horizon;
    problem.constraints.validate(n, m);

    auto fx_at = [&](const Vector& x, const Vector& u) {
        if (problem.dynamics.fx) return problem.dynamics.fx(x, u);
        return finite_difference_jacobian(
            [&](const Vector& xx) { return problem.dynamics.f(xx, u); }, x);
    };
    auto fu_at = [&](const Vector& x, const Vector& u) {
        if (problem.dynamics.fu) return problem.dynamics.fu(x, u);
        return finite_difference_jacobian(
            [&](const Vector& uu) { return problem.dynamics.f(x, uu); }, u);
    };

    // initial guess: hold the reference input
    Matrix xs(n, N + 1);
    Matrix us(m, N);
    xs.col(0) = x0_hat;
    for (int k = 0; k < N; ++k) {
        us.col(k) = problem.u_ref;
        xs.col(k + 1) = problem.dynamics.f(xs.col(k), us.col(k));
    }

    const int nz = (N + 1) * n + N * m;
    const int nc = problem.constraints.rows();
    const int tc = problem.terminal_set.rows();
    const auto xi = [&](int k) { return k * n; };
    const auto ui = [&](int k) { return (N + 1) * n + k * m; };

    NmpcStep result;
    for (int iter = 1; iter <= sqp_iters; ++iter) {
        result.iterations = iter;
        QuadProgram qp;
        qp.G = Matrix::Zero(nz, nz);
        qp.a = Vector::Zero(nz);
        for (int k = 0; k < N; ++k) {
            qp.G.block(xi(k), xi(k), n, n) = 2.0 * problem.cost.Q;
            qp.G.block(xi(k), ui(k), n, m) = 2.0 * problem.cost.S.transpose();
            qp.G.block(ui(k), xi(k), m, n) = 2.0 * problem.cost.S;
            qp.G.block(ui(k), ui(k), m, m) = 2.0 * problem.cost.R;
            const Vector ex = xs.col(k) - problem.x_ref;
            const Vector eu = us.col(k) - problem.u_ref;
            qp.a.segment(xi(k), n) = 2.0 * (problem.cost.Q * ex + problem.cost.S.transpose() * eu);
            qp.a.segment(ui(k), m) = 2.0 * (problem.cost.S * ex + problem.cost.R * eu);
        }
        qp.G.block(xi(N), xi(N), n, n) = 2.0 * (*problem.cost.P);
        qp.a.segment(xi(N), n) = 2.0 * (*problem.cost.P * (xs.col(N) - problem.x_ref));

        qp.E = Matrix::Zero(n * (N + 1), nz);
        qp.t = Vector::Zero(n * (N + 1));
        qp.E.block(0, xi(0), n, n).setIdentity();  // dx0 = 0
        for (int k = 0; k < N; ++k) {
            qp.E.block(n * (k + 1), xi(k + 1), n, n).setIdentity();
            qp.E.block(n * (k + 1), xi(k), n, n) = -fx_at(xs.col(k), us.col(k));
            qp.E.block(n * (k + 1), ui(k), n, m) = -fu_at(xs.col(k), us.col(k));
            qp.t.segment(n * (k + 1), n) =
                problem.dynamics.f(xs.col(k), us.col(k)) - xs.col(k + 1);
        }

        qp.M = Matrix::Zero(nc * N + tc, nz);
        qp.d = Vector::Zero(nc * N + tc);
        for (int k = 0; k < N; ++k) {
            qp.M.block(nc * k, xi(k), nc, n) = problem.constraints.C;
            qp.M.block(nc * k, ui(k), nc, m) = problem.constraints.D;
            qp.d.segment(nc * k, nc) = -problem.constraints.e - problem.constraints.C * xs.col(k) -
                                       problem.constraints.D * us.col(k);
        }
        if (tc > 0) {
            qp.M.block(nc * N, xi(N), tc, n) = problem.terminal_set.F;
            qp.d.tail(tc) = problem.terminal_set.g - problem.terminal_set.F * xs.col(N);
        }

        QpSolution sol;
        try {
            sol = solve_qp(qp);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Infeasible)
                throw Error(ErrorCode::QpInfeasibleAtIterate, "SQP subproblem is infeasible");
            throw;
        }

        double step_norm = 0.0;
        for (int k = 0; k <= N; ++k) {
            xs.col(k) += sol.z.segment(xi(k), n);
            step_norm = std::max(step_norm, sol.z.segment(xi(k), n).lpNorm<Eigen::Infinity>());
        }
        for (int k = 0; k < N; ++k) {
            us.col(k) += sol.z.segment(ui(k), m);
            step_norm = std::max(step_norm, sol.z.segment(ui(k), m).lpNorm<Eigen::Infinity>());
        }
        if (step_norm <= 1e-8) {
            result.u0 = us.col(0);
            result.converged = true;
            return result;
        }
    }
    throw Error(ErrorCode::MaxIterations, "SQP did not converge within the iteration budget");
}

}  // namespace ctrlmatch
