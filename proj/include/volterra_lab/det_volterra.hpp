#pragma once

// Deterministic weakly singular Volterra equations solved by product
// integration with exact kernel moments (explicit left-point by default).

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "volterra_lab/errors.hpp"
#include "volterra_lab/kernels.hpp"
#include "volterra_lab/noise.hpp"
#include "volterra_lab/quadrature.hpp"
#include "volterra_lab/sie_solver.hpp"

namespace volterra_lab {

/// m(t_k) = E[X(t_k)^2] for σ(x) = x.
struct MomentOracle {
    TimeGrid grid;
    std::vector<double> m;
    double alpha = 0.0;
};

enum class MomentScheme {
    /// m held at the left node of each panel; exact second moment of the Euler scheme.
    LeftPoint,
    /// m interpolated linearly on each panel (implicit in the newest node); second order.
    ProductTrapezoid,
};

/// Second moment of the linear equation X = h + ∫ k(t,s) X_s dB_s:
///     m(t) = h(t)^2 + ∫_0^t k(t,s)^2 m(s) ds,
/// discretized by product integration: k^2 is integrated exactly against an
/// interpolant of m on each panel. With LeftPoint the panel integrals are the
/// squared solver weights times dt, so the oracle is the exact second moment of
/// the Euler scheme on the same grid. The problem's σ is ignored and taken to
/// be the identity (scaled by lambda_scale).
inline MomentOracle solve_linear_moment(const SieProblem& problem, const TimeGrid& grid,
                                        MomentScheme scheme = MomentScheme::LeftPoint) {
    const auto alpha = kernel_alpha(problem.kernel);
    detail::require(alpha.has_value(), "solve_linear_moment requires a singular kernel");
    validate_kernel(problem.kernel, grid.t_end);
    const double scale = std::holds_alternative<FractionalHeat>(problem.kernel)
                             ? c_theta(std::get<FractionalHeat>(problem.kernel).theta)
                             : 1.0;
    const double factor = problem.lambda_scale * problem.lambda_scale * scale * scale;

    const std::size_t n = grid.n_steps;
    const double dt = grid.dt();
    std::vector<double> rev(n);  // rev[n - lag] = ∫ over the panel at distance `lag`
    for (std::size_t lag = 1; lag <= n; ++lag) {
        const double t = static_cast<double>(lag) * dt;
        rev[n - lag] = factor * kernel_l2_partial(*alpha, t, 0.0, dt);
    }

    const std::vector<double> h = forcing_on_grid(problem, grid);
    MomentOracle out{grid, std::vector<double>(n + 1), *alpha};
    if (scheme == MomentScheme::LeftPoint) {
        for (std::size_t k = 0; k <= n; ++k)
            out.m[k] = h[k] * h[k] + (k ? detail::dot(rev.data() + (n - k), out.m.data(), k) : 0.0);
        return out;
    }

    // Right-node share of the panel at distance `lag`:
    //     dt^{1-2α} ∫_{lag-1}^{lag} v^{-2α} (lag - v) dv.
    const double p = 1.0 - 2.0 * *alpha;
    const double dt_p = std::pow(dt, p);
    const auto a2 = 2.0 * *alpha;
    std::vector<double> right(n + 1, 0.0), left(n + 1, 0.0);
    for (std::size_t lag = 1; lag <= n; ++lag) {
        const double j = static_cast<double>(lag);
        const double r = lag == 1 ? 1.0 / p - 1.0 / (p + 1.0)
                                  : quad::gauss_legendre([&](double v) { return std::pow(v, -a2) * (j - v); },
                                                         j - 1.0, j, 1);
        right[lag] = factor * dt_p * r;
        left[lag] = rev[n - lag] - right[lag];
    }
    const double diag = 1.0 - right[1];
    if (!(diag > 0.0)) throw NumericalFailure("product-trapezoid moment step is singular; refine the grid");
    out.m[0] = h[0] * h[0];
    for (std::size_t k = 1; k <= n; ++k) {
        double acc = h[k] * h[k];
        for (std::size_t i = 0; i < k; ++i) {
            acc += left[k - i] * out.m[i];
            if (i + 1 < k) acc += right[k - i] * out.m[i + 1];
        }
        out.m[k] = acc / diag;
    }
    return out;
}

struct LogLaplaceOptions {
    /// Predictor-corrector sweep on the newest panel: its weight uses
    /// (u_{k-1}^2 + u_k^2)/2 with u_k from the explicit predictor.
    bool diagonal_sweep = false;
    /// Drop the -u^2/2 term (free evolution); used to test the nonlinearity.
    bool linear_only = false;
};

/// u(t_k, 0) for the log-Laplace equation u(t,x) = S_tφ(x) - ∫_0^t p_{t-s}(x) u(s,0)^2/2 ds,
/// together with the total mass ⟨1, U_t⟩.
struct LogLaplaceSolution {
    TimeGrid grid;
    std::vector<double> u0;
    std::vector<double> mass;
    std::vector<double> free_evolution;  // S_{t_k} φ(0)
    double theta = 0.0;
    double phi_mass = 0.0;
    std::size_t clamp_count = 0;
    TestFunction phi;
};

/// At x = 0 the kernel is p^θ_{t-s}(0) = c_θ (t-s)^{-α}, integrated exactly on
/// each panel against u held at the left node. Negative steps are clamped to
/// zero and counted. The mass follows by integrating the equation in x
/// (S_t preserves mass): ⟨1,U_t⟩ = ⟨1,φ⟩ - ½ ∫_0^t u(s,0)^2 ds, trapezoidal.
inline LogLaplaceSolution solve_log_laplace(double theta, const TestFunction& phi, const TimeGrid& grid,
                                            const LogLaplaceOptions& options = {}) {
    detail::require(theta > 0.0, "solve_log_laplace requires theta > 0");
    const FracHeatKernel kernel(theta);
    const double alpha = kernel.alpha();
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt();

    LogLaplaceSolution sol;
    sol.grid = grid;
    sol.theta = theta;
    sol.phi = phi;
    sol.phi_mass = phi.mass();
    sol.u0.assign(n + 1, 0.0);
    sol.mass.assign(n + 1, 0.0);
    sol.free_evolution.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) sol.free_evolution[k] = semigroup_at_origin(kernel, grid.node(k), phi);

    // rev[n - lag] = (c_θ/2) ∫ over the panel at distance `lag` of (t - s)^{-α}.
    std::vector<double> rev(n);
    for (std::size_t lag = 1; lag <= n; ++lag) {
        const double t = static_cast<double>(lag) * dt;
        rev[n - lag] = 0.5 * kernel.c() * kernel_l1_partial(alpha, t, 0.0, dt);
    }

    std::vector<double> sq(n + 1, 0.0);  // u0^2 at nodes
    for (std::size_t k = 0; k <= n; ++k) {
        double u = sol.free_evolution[k];
        if (!options.linear_only && k > 0) {
            u -= detail::dot(rev.data() + (n - k), sq.data(), k);
            if (options.diagonal_sweep) {
                const double predictor = std::max(u, 0.0);
                const double w_last = rev[n - 1];
                u += w_last * sq[k - 1] - w_last * 0.5 * (sq[k - 1] + predictor * predictor);
            }
        }
        if (u < 0.0) {
            u = 0.0;
            ++sol.clamp_count;
        }
        sol.u0[k] = u;
        sq[k] = u * u;
    }

    double integral = 0.0;
    sol.mass[0] = sol.phi_mass;
    for (std::size_t k = 1; k <= n; ++k) {
        integral += 0.5 * dt * (sq[k - 1] + sq[k]);
        sol.mass[k] = sol.phi_mass - 0.5 * integral;
    }
    return sol;
}

}  // namespace volterra_lab
