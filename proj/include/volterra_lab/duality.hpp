#pragma once

// Monte Carlo check of the Laplace-functional duality for the square-root
// catalytic equation
//     V_t = x0 + ∫_0^t (t-s)^{-α} g(s) ds + ∫_0^t c_θ (t-s)^{-α} sqrt(V_s) dB_s,
// α = 1/(2+θ), which is X(t, 0) for the SPDE with point catalyst g(s) δ_0 / c_θ.
//
//   lhs = E exp(-⟨X_T, φ⟩),
//     ⟨X_T, φ⟩ = x0⟨1,φ⟩ + ∫ S_{T-s}φ(0) g(s)/c_θ ds + ∫ S_{T-s}φ(0) sqrt(V_s) dB_s
//   rhs = exp(-x0 ⟨1, U_T⟩ - ∫_0^T g(s)/c_θ u(T-s, 0) ds)
//
// with u = U^φ the log-Laplace solution. Only λ = 1 is exposed.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "volterra_lab/det_volterra.hpp"
#include "volterra_lab/errors.hpp"
#include "volterra_lab/kernels.hpp"
#include "volterra_lab/monte_carlo.hpp"
#include "volterra_lab/noise.hpp"
#include "volterra_lab/sie_solver.hpp"

namespace volterra_lab {

struct DualityConfig {
    double theta = 2.0;
    double x0 = 1.0;
    std::function<double(double)> g;  // empty means g ≡ 0
    TestFunction phi = TestFunction::unit_bump(-1.0, 1.0);
    TimeGrid grid{0.5, 512};
    std::size_t n_paths = 100000;
    std::uint64_t master_seed = 20240601;
    std::size_t threads = 0;
    /// Relative allowance for time discretization, on top of 3 standard errors.
    double discretization_allowance = 0.01;
    /// Largest tolerated fraction of diverged (excluded) paths.
    double max_exclusion_fraction = 1e-3;
};

struct LhsEstimate {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::size_t clamp_count = 0;  // node evaluations with V < 0 (sqrt taken of V⁺)
    std::size_t evaluations = 0;  // node evaluations in total
    std::size_t excluded = 0;     // diverged paths
    std::size_t n_paths = 0;
};

struct DualityReport {
    double lhs_mean = 0.0;
    double lhs_stderr = 0.0;
    double rhs = 0.0;
    std::size_t n_paths = 0;
    double t_end = 0.0;
    std::size_t n_steps = 0;
    std::size_t clamp_count = 0;
    double clamp_fraction = 0.0;
    std::size_t excluded = 0;
    double z_score = 0.0;
    double gap = 0.0;        // |lhs - rhs|
    double tolerance = 0.0;  // 3 stderr + allowance * rhs
    bool pass = false;
};

namespace detail {

inline DiffusionCoefficient sqrt_positive_part() {
    return {[](double x) { return std::sqrt(std::max(x, 0.0)); }, 0.5, 1.0, 1.0, "sqrt(x+)"};
}

inline double g_at(const std::function<double(double)>& g, double t) { return g ? g(t) : 0.0; }

inline void check_duality_inputs(double x0, const std::function<double(double)>& g, const TimeGrid& grid) {
    require(x0 >= 0.0, "duality requires x0 >= 0");
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        const double v = g_at(g, grid.node(k));
        require(std::isfinite(v) && v >= 0.0, "duality requires a bounded non-negative g");
    }
}

struct LhsAccumulator {
    mc::MomentStats stats;
    std::size_t clamps = 0;
    std::size_t evaluations = 0;
    std::size_t excluded = 0;

    void merge(const LhsAccumulator& o) {
        stats.merge(o.stats);
        clamps += o.clamps;
        evaluations += o.evaluations;
        excluded += o.excluded;
    }
};

}  // namespace detail

inline LhsEstimate laplace_lhs_mc(double theta, double x0, const std::function<double(double)>& g,
                                  const TestFunction& phi, const TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t master_seed, std::size_t threads = 0,
                                  double max_exclusion_fraction = 1e-3) {
    detail::require(theta > 0.0, "duality requires theta > 0");
    detail::require(n_paths > 0, "n_paths must be positive");
    detail::check_duality_inputs(x0, g, grid);

    const FracHeatKernel kernel(theta);
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt();
    const double T = grid.t_end;

    // S_{T - t_k} φ(0) for k = 0..n-1, shared by every path.
    std::vector<double> s_weight(n);
    for (std::size_t k = 0; k < n; ++k) s_weight[k] = semigroup_at_origin(kernel, T - grid.node(k), phi);

    double deterministic = x0 * phi.mass();
    for (std::size_t k = 0; k < n; ++k) deterministic += s_weight[k] * detail::g_at(g, grid.node(k)) / kernel.c() * dt;

    SieProblem problem;
    problem.kernel = FractionalHeat{theta};
    problem.sigma = detail::sqrt_positive_part();
    problem.x0 = x0;
    problem.g_forcing = g;
    problem.label = "duality";
    const SieSolver solver(problem, grid);

    auto acc = mc::block_reduce<detail::LhsAccumulator>(
        n_paths, threads, [] { return detail::LhsAccumulator{}; },
        [&](detail::LhsAccumulator& a, std::size_t p) {
            const BrownianPath path = sample_brownian_increments(grid, derive_path_seed(master_seed, p));
            SiePath v;
            try {
                v = solver.euler(path);
            } catch (const DivergenceError&) {
                ++a.excluded;
                return;
            }
            double functional = deterministic;
            for (std::size_t k = 0; k < n; ++k) {
                const double vk = v.values[k];
                if (vk < 0.0) ++a.clamps;
                functional += s_weight[k] * std::sqrt(std::max(vk, 0.0)) * path.increments[k];
            }
            a.evaluations += n;
            a.stats.add(std::exp(-functional));
        });

    if (static_cast<double>(acc.excluded) > max_exclusion_fraction * static_cast<double>(n_paths))
        throw NumericalFailure("duality: " + std::to_string(acc.excluded) + " of " + std::to_string(n_paths) +
                               " paths diverged (limit " + std::to_string(max_exclusion_fraction) + ")");

    LhsEstimate est;
    est.mean = acc.stats.mean;
    est.stderr_mean = acc.stats.stderr_mean();
    est.clamp_count = acc.clamps;
    est.evaluations = acc.evaluations;
    est.excluded = acc.excluded;
    est.n_paths = n_paths;
    if (acc.stats.count == 0.0) est.mean = 1.0;
    return est;
}

inline double laplace_rhs(double theta, double x0, const std::function<double(double)>& g,
                          const TestFunction& phi, const TimeGrid& grid) {
    detail::check_duality_inputs(x0, g, grid);
    const LogLaplaceSolution sol = solve_log_laplace(theta, phi, grid);
    const std::size_t n = grid.n_steps;
    const double c = c_theta(theta);
    double exponent = x0 * sol.mass[n];
    if (g) {
        // Trapezoid over s = t_k with u(T - t_k, 0) = u0[n - k].
        double integral = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            integral += 0.5 * grid.dt() *
                        (g(grid.node(k)) * sol.u0[n - k] + g(grid.node(k + 1)) * sol.u0[n - k - 1]);
        exponent += integral / c;
    }
    return std::exp(-exponent);
}

inline DualityReport duality_report(const DualityConfig& cfg) {
    const LhsEstimate lhs = laplace_lhs_mc(cfg.theta, cfg.x0, cfg.g, cfg.phi, cfg.grid, cfg.n_paths,
                                           cfg.master_seed, cfg.threads, cfg.max_exclusion_fraction);
    DualityReport r;
    r.lhs_mean = lhs.mean;
    r.lhs_stderr = lhs.stderr_mean;
    r.rhs = laplace_rhs(cfg.theta, cfg.x0, cfg.g, cfg.phi, cfg.grid);
    r.n_paths = cfg.n_paths;
    r.t_end = cfg.grid.t_end;
    r.n_steps = cfg.grid.n_steps;
    r.clamp_count = lhs.clamp_count;
    r.clamp_fraction = lhs.evaluations ? static_cast<double>(lhs.clamp_count) / lhs.evaluations : 0.0;
    r.excluded = lhs.excluded;
    r.gap = std::abs(r.lhs_mean - r.rhs);
    r.z_score = r.lhs_stderr > 0.0 ? (r.lhs_mean - r.rhs) / r.lhs_stderr : 0.0;
    r.tolerance = 3.0 * r.lhs_stderr + cfg.discretization_allowance * r.rhs;
    r.pass = r.gap <= r.tolerance;
    return r;
}

}  // namespace volterra_lab
