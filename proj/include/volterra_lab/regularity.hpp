#pragma once

// Empirical Hölder exponents of solution paths (variogram regression) and the
// exponent bookkeeping of the uniqueness argument: the admissible ξ window and
// the improvement recursion ξ_{n+1} = [(ξ_n γ + 1/2 - α) ∧ 1](1 - 1/(n+3)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "volterra_lab/errors.hpp"
#include "volterra_lab/kernels.hpp"
#include "volterra_lab/monte_carlo.hpp"
#include "volterra_lab/noise.hpp"
#include "volterra_lab/sie_solver.hpp"

namespace volterra_lab {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<double> residuals;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    detail::require(x.size() == y.size() && x.size() >= 2, "line fit needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    detail::require(sxx > 0.0, "line fit needs distinct abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        f.residuals.push_back(r);
        sse += r * r;
    }
    f.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
    return f;
}

/// lag_min, 2 lag_min, 4 lag_min, ... up to lag_max (lag_max always included).
inline std::vector<std::size_t> geometric_lags(std::size_t lag_min, std::size_t lag_max) {
    detail::require(lag_min >= 1 && lag_max > lag_min, "lags must satisfy 1 <= lag_min < lag_max");
    std::vector<std::size_t> lags;
    for (std::size_t l = lag_min; l < lag_max; l *= 2) lags.push_back(l);
    lags.push_back(lag_max);
    return lags;
}

/// Mean squared increment (1/(N-ℓ)) Σ_k (x_{k+ℓ} - x_k)² for each lag.
inline std::vector<double> variogram(std::span<const double> values, std::span<const std::size_t> lags) {
    std::vector<double> v;
    v.reserve(lags.size());
    for (std::size_t lag : lags) {
        detail::require(lag < values.size(), "lag exceeds the path length");
        double s = 0.0;
        for (std::size_t k = 0; k + lag < values.size(); ++k) {
            const double d = values[k + lag] - values[k];
            s += d * d;
        }
        v.push_back(s / static_cast<double>(values.size() - lag));
    }
    return v;
}

struct HolderEstimate {
    double exponent = 0.0;  // slope / 2
    double r_squared = 0.0;
    std::pair<double, double> lag_range;  // in time units
    std::size_t n_lags = 0;
    bool boundary = false;  // exponent within 0.05 of 0 or 1: the fit says "smooth" or "rough"
    std::vector<std::size_t> lags;
    std::vector<double> variogram;
    std::vector<double> residuals;
};

/// Fits log variogram against log(ℓ dt). `vario` may be averaged over paths.
inline HolderEstimate fit_holder(std::span<const std::size_t> lags, std::span<const double> vario, double dt) {
    detail::require(lags.size() == vario.size(), "lags and variogram differ in length");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < lags.size(); ++i) {
        if (!std::isfinite(vario[i])) throw UndefinedEstimate("variogram is not finite");
        if (!(vario[i] > 0.0)) throw UndefinedEstimate("variogram vanishes: the path is constant at this lag");
        lx.push_back(std::log(static_cast<double>(lags[i]) * dt));
        ly.push_back(std::log(vario[i]));
    }
    const LineFit f = fit_line(lx, ly);
    HolderEstimate e;
    e.exponent = 0.5 * f.slope;
    e.r_squared = f.r_squared;
    e.lag_range = {static_cast<double>(lags.front()) * dt, static_cast<double>(lags.back()) * dt};
    e.n_lags = lags.size();
    e.boundary = e.exponent >= 0.95 || e.exponent <= 0.05;
    e.lags.assign(lags.begin(), lags.end());
    e.variogram.assign(vario.begin(), vario.end());
    e.residuals = f.residuals;
    return e;
}

inline HolderEstimate holder_estimate(std::span<const double> values, const TimeGrid& grid, std::size_t lag_min,
                                      std::size_t lag_max) {
    detail::require(values.size() == grid.n_nodes(), "path length does not match the grid");
    detail::require(lag_max <= grid.n_steps / 4, "lag_max must not exceed n_steps / 4");
    for (double v : values) detail::require(std::isfinite(v), "path contains non-finite values");
    const auto lags = geometric_lags(lag_min, lag_max);
    const auto v = variogram(values, lags);
    return fit_holder(lags, v, grid.dt());
}

// ---------------------------------------------------------------------------

struct MomentIncrementFit {
    int p = 2;
    double exponent = 0.0;  // fitted decay exponent of E|Z(t+δ) - Z(t)|^p in δ
    double required = 0.0;  // (1/2 - α) p - 0.1
    double r_squared = 0.0;
    bool degenerate = false;  // all increments vanish (σ ≡ 0)
    bool pass = false;
    std::vector<std::size_t> lags;
    std::vector<double> moments;
    std::vector<double> stderrs;
};

namespace detail {

struct LagMoments {
    std::vector<mc::MomentStats> per_lag;
    void merge(const LagMoments& o) {
        for (std::size_t i = 0; i < per_lag.size(); ++i) per_lag[i].merge(o.per_lag[i]);
    }
};

}  // namespace detail

/// Monte Carlo E|Z(t_{k+ℓ}) - Z(t_k)|^p, Z = X - h, for geometric lags ℓ;
/// each path contributes its increment average over k. The exponent is the
/// log-log slope against ℓ dt.
inline MomentIncrementFit moment_increment_check(const SieProblem& problem, int p, std::size_t n_paths,
                                                 std::uint64_t master_seed, const TimeGrid& grid = {1.0, 512},
                                                 std::size_t threads = 0) {
    detail::require(p == 2 || p == 4, "p must be 2 or 4");
    detail::require(n_paths >= 2, "n_paths must be at least 2");
    const auto alpha = kernel_alpha(problem.kernel);
    detail::require(alpha.has_value(), "moment_increment_check requires a singular kernel");
    detail::require(grid.n_steps >= 16, "grid needs at least 16 steps");

    const SieSolver solver(problem, grid);
    const auto lags = geometric_lags(1, grid.n_steps / 4);
    const auto& h = solver.forcing();

    auto acc = mc::block_reduce<detail::LagMoments>(
        n_paths, threads, [&] { return detail::LagMoments{std::vector<mc::MomentStats>(lags.size())}; },
        [&](detail::LagMoments& a, std::size_t i) {
            const auto path = sample_brownian_increments(grid, derive_path_seed(master_seed, i));
            const auto x = solver.euler(path);
            for (std::size_t j = 0; j < lags.size(); ++j) {
                const std::size_t l = lags[j];
                double s = 0.0;
                for (std::size_t k = 0; k + l <= grid.n_steps; ++k) {
                    const double d = (x.values[k + l] - h[k + l]) - (x.values[k] - h[k]);
                    s += p == 2 ? d * d : d * d * d * d;
                }
                a.per_lag[j].add(s / static_cast<double>(grid.n_steps + 1 - l));
            }
        });

    MomentIncrementFit r;
    r.p = p;
    r.required = (0.5 - *alpha) * p - 0.1;
    r.lags = lags;
    for (const auto& s : acc.per_lag) {
        r.moments.push_back(s.mean);
        r.stderrs.push_back(s.stderr_mean());
    }
    if (std::all_of(r.moments.begin(), r.moments.end(), [](double m) { return m == 0.0; })) {
        r.degenerate = true;
        r.pass = true;
        return r;
    }
    std::vector<double> lx, ly;
    for (std::size_t j = 0; j < lags.size(); ++j) {
        if (!(r.moments[j] > 0.0)) throw UndefinedEstimate("increment moment vanishes at some lags only");
        lx.push_back(std::log(static_cast<double>(lags[j]) * grid.dt()));
        ly.push_back(std::log(r.moments[j]));
    }
    const LineFit f = fit_line(lx, ly);
    r.exponent = f.slope;
    r.r_squared = f.r_squared;
    r.pass = r.exponent >= r.required;
    return r;
}

// ---------------------------------------------------------------------------

/// γ must exceed this for the pathwise uniqueness theory to apply.
inline double gamma_threshold(double alpha) { return 1.0 / (2.0 * (1.0 - alpha)); }

/// (α/(2γ-1), ((1/2-α)/(1-γ)) ∧ 1), the window of Hölder exponents ξ used by
/// the uniqueness argument. γ = 1 gives the upper bound 1.
inline std::pair<double, double> xi_admissible_range(double alpha, double gamma) {
    detail::require(alpha > 0.0 && alpha < 0.5, "alpha must lie in (0, 0.5), got " + std::to_string(alpha));
    detail::require(gamma <= 1.0, "gamma must satisfy gamma <= 1, got " + std::to_string(gamma));
    const double thr = gamma_threshold(alpha);
    if (!(gamma > thr))
        throw ParameterError("gamma > 1/(2(1-alpha)) = " + std::to_string(thr) + " is violated (gamma = " +
                             std::to_string(gamma) + "); the xi window is empty");
    const double lower = alpha / (2.0 * gamma - 1.0);
    const double upper = gamma < 1.0 ? std::min((0.5 - alpha) / (1.0 - gamma), 1.0) : 1.0;
    return {lower, upper};
}

inline double xi_improvement(double xi, double alpha, double gamma, int n) {
    detail::require(xi > 0.0 && xi < 1.0, "xi must lie in (0, 1)");
    detail::require(n >= 0, "n must be non-negative");
    return std::min(xi * gamma + 0.5 - alpha, 1.0) * (1.0 - 1.0 / (n + 3.0));
}

/// Limit (1/2-α)/(1-γ) ∧ 1 of the recursion.
inline double xi_limit(double alpha, double gamma) {
    return gamma < 1.0 ? std::min((0.5 - alpha) / (1.0 - gamma), 1.0) : 1.0;
}

/// ξ_0 = (α/2)(1/2-α) followed by `steps` applications of xi_improvement.
inline std::vector<double> xi_iterates(double alpha, double gamma, int steps) {
    std::vector<double> xs{0.5 * alpha * (0.5 - alpha)};
    for (int n = 0; n < steps; ++n) xs.push_back(xi_improvement(xs.back(), alpha, gamma, n));
    return xs;
}

}  // namespace volterra_lab
