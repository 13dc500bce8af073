#pragma once

// Pathwise solvers for X_t = h(t) + ∫_0^t k(t,s) σ(X_s) dB_s on a uniform grid.
//
// The stochastic convolution is discretized with variance-matched left-point
// weights: for the singular kernel the weight of increment i at node k is
//     w_{k,i} = sqrt( ∫_{t_i}^{t_{i+1}} (t_k - s)^{-2α} ds / dt ),
// which makes Var[Σ w_{k,i} ΔB_i] equal ∫_0^{t_k} (t_k - s)^{-2α} ds exactly.
// On a uniform grid w_{k,i} depends on k - i only, so the table is a single
// vector. Smooth kernels use the point value κ(t_i, t_k).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "volterra_lab/errors.hpp"
#include "volterra_lab/kernels.hpp"
#include "volterra_lab/noise.hpp"

namespace volterra_lab {

struct DiffusionCoefficient {
    std::function<double(double)> sigma;
    double gamma = 1.0;     // declared Hölder exponent
    double holder_L = 1.0;  // |σ(x) - σ(y)| <= L |x - y|^γ
    double growth_c = 1.0;  // |σ(x)| <= c (1 + |x|)
    std::string name;

    double operator()(double x) const { return sigma(x); }
};

struct DiffusionAudit {
    bool holder_ok = true;
    bool growth_ok = true;
    double worst_holder_ratio = 0.0;  // max |σ(x)-σ(y)| / (L |x-y|^γ)
    double worst_growth_ratio = 0.0;  // max |σ(x)| / (c (1+|x|))
};

/// Randomized audit of the Hölder and linear-growth declarations on [-10, 10].
inline DiffusionAudit audit_diffusion(const DiffusionCoefficient& coef, std::size_t n_samples = 4096,
                                      std::uint64_t seed = 1) {
    DiffusionAudit a;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-10.0, 10.0);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double x = unif(rng);
        // Half the pairs are close together, where Hölder bounds bite hardest.
        const double y = (i % 2 == 0) ? unif(rng) : x + 1e-3 * (unif(rng) / 10.0);
        if (x != y) {
            const double r = std::abs(coef(x) - coef(y)) /
                             (coef.holder_L * std::pow(std::abs(x - y), coef.gamma));
            a.worst_holder_ratio = std::max(a.worst_holder_ratio, r);
        }
        a.worst_growth_ratio =
            std::max(a.worst_growth_ratio, std::abs(coef(x)) / (coef.growth_c * (1.0 + std::abs(x))));
    }
    constexpr double slack = 1.0 + 1e-9;
    a.holder_ok = a.worst_holder_ratio <= slack;
    a.growth_ok = a.worst_growth_ratio <= slack;
    return a;
}

/// One equation instance. h(t) = x0 + ∫_0^t (t-s)^{-α} g(s) ds unless
/// `h_override` is set, in which case x0 and g are ignored.
struct SieProblem {
    KernelSpec kernel = SingularPower{0.25};
    DiffusionCoefficient sigma;
    double x0 = 0.0;
    std::function<double(double)> g_forcing;  // empty means g ≡ 0
    std::function<double(double)> h_override;
    double lambda_scale = 1.0;
    std::string label;
};

struct PathMeta {
    std::uint64_t problem_hash = 0;
    std::uint64_t seed = 0;
};

struct SiePath {
    TimeGrid grid;
    std::vector<double> values;  // X(t_k), k = 0..n_steps
    PathMeta meta;
};

struct PicardResult {
    SiePath final;
    std::size_t n_iterations = 0;
    std::vector<double> sup_gaps;
    bool converged = false;
    /// Set when σ is not Lipschitz: the fixed point is not covered by the
    /// contraction argument and is reported as a heuristic fixed point.
    bool heuristic = false;
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(std::uint64_t h, double v) { return fnv1a(h, &v, sizeof v); }

/// Σ a[i] b[i] with four fixed partial sums (order independent of caller).
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

inline std::uint64_t problem_hash(const SieProblem& p) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    h = detail::fnv1a(h, static_cast<double>(p.kernel.index()));
    std::visit(
        [&h](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, SingularPower>) h = detail::fnv1a(h, k.alpha);
            else if constexpr (std::is_same_v<K, FractionalHeat>) h = detail::fnv1a(h, k.theta);
            else h = detail::fnv1a(h, k.kappa_min);
        },
        p.kernel);
    for (double v : {p.x0, p.lambda_scale, p.sigma.gamma, p.sigma.holder_L, p.sigma.growth_c})
        h = detail::fnv1a(h, v);
    h = detail::fnv1a(h, p.label.data(), p.label.size());
    h = detail::fnv1a(h, p.sigma.name.data(), p.sigma.name.size());
    return h;
}

/// Weights of the discrete stochastic convolution Σ_{i<k} w_{k,i} z_i.
class ConvolutionWeights {
public:
    ConvolutionWeights() = default;

    ConvolutionWeights(const KernelSpec& kernel, const TimeGrid& grid) : n_(grid.n_steps) {
        const double dt = grid.dt();
        if (const auto* sm = std::get_if<SmoothKernel>(&kernel)) {
            toeplitz_ = false;
            dense_.resize(n_ * (n_ + 1) / 2);
            for (std::size_t k = 1; k <= n_; ++k)
                for (std::size_t i = 0; i < k; ++i)
                    dense_[row_offset(k) + i] = sm->kappa(grid.node(i), grid.node(k));
            return;
        }
        const double alpha = *kernel_alpha(kernel);
        const double scale = std::holds_alternative<FractionalHeat>(kernel)
                                 ? c_theta(std::get<FractionalHeat>(kernel).theta)
                                 : 1.0;
        // reversed_[m] = w(lag = n - m), so lags k-i for i = 0..k-1 are contiguous.
        reversed_.resize(n_);
        for (std::size_t lag = 1; lag <= n_; ++lag) {
            const double t = static_cast<double>(lag) * dt;
            const double var = kernel_l2_partial(alpha, t, 0.0, dt);
            reversed_[n_ - lag] = scale * std::sqrt(var / dt);
        }
    }

    /// Weight of increment i at node k (i < k).
    double weight(std::size_t k, std::size_t i) const {
        return toeplitz_ ? reversed_[n_ - (k - i)] : dense_[row_offset(k) + i];
    }

    /// Σ_{i<k} w_{k,i} z[i].
    double convolve(std::size_t k, std::span<const double> z) const {
        if (k == 0) return 0.0;
        const double* w = toeplitz_ ? reversed_.data() + (n_ - k) : dense_.data() + row_offset(k);
        return detail::dot(w, z.data(), k);
    }

private:
    static std::size_t row_offset(std::size_t k) { return k * (k - 1) / 2; }

    std::size_t n_ = 0;
    bool toeplitz_ = true;
    std::vector<double> reversed_;
    std::vector<double> dense_;
};

/// h(t_k) for a problem. The (x0, g) form uses exact kernel moments over each
/// subinterval with g held at the left endpoint.
inline std::vector<double> forcing_on_grid(const SieProblem& problem, const TimeGrid& grid) {
    std::vector<double> h(grid.n_nodes());
    if (problem.h_override) {
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = problem.h_override(grid.node(k));
        return h;
    }
    std::fill(h.begin(), h.end(), problem.x0);
    if (!problem.g_forcing) return h;

    std::vector<double> g(grid.n_steps);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = problem.g_forcing(grid.node(i));
        detail::require(std::isfinite(g[i]), "forcing g must be bounded on [0, t_end]");
    }
    const auto alpha = kernel_alpha(problem.kernel);
    for (std::size_t k = 1; k < h.size(); ++k) {
        const double tk = grid.node(k);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double w = alpha ? kernel_l1_partial(*alpha, tk, grid.node(i), grid.node(i + 1))
                                   : std::get<SmoothKernel>(problem.kernel).kappa(grid.node(i), tk) *
                                         grid.dt();
            acc += g[i] * w;
        }
        h[k] += acc;
    }
    return h;
}

/// Precomputed forcing and weights for repeated solves of one problem on one
/// grid. Immutable after construction; safe to share across threads.
class SieSolver {
public:
    SieSolver(SieProblem problem, const TimeGrid& grid)
        : problem_(std::move(problem)), grid_(grid) {
        validate_kernel(problem_.kernel, grid.t_end);
        detail::require(static_cast<bool>(problem_.sigma.sigma), "diffusion coefficient is empty");
        weights_ = ConvolutionWeights(problem_.kernel, grid_);
        h_ = forcing_on_grid(problem_, grid_);
        hash_ = problem_hash(problem_);
    }

    const SieProblem& problem() const noexcept { return problem_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& forcing() const noexcept { return h_; }
    const ConvolutionWeights& weights() const noexcept { return weights_; }

    SiePath euler(const BrownianPath& path) const {
        check_path(path);
        const std::size_t n = grid_.n_steps;
        SiePath out{grid_, std::vector<double>(n + 1), {hash_, path.seed}};
        std::vector<double> z(n);
        out.values[0] = h_[0];
        for (std::size_t k = 0; k < n; ++k) {
            z[k] = problem_.lambda_scale * problem_.sigma(out.values[k]) * path.increments[k];
            const double next = h_[k + 1] + weights_.convolve(k + 1, z);
            if (!std::isfinite(next) || !std::isfinite(z[k])) throw DivergenceError(path.seed, k + 1);
            out.values[k + 1] = next;
        }
        return out;
    }

    PicardResult picard(const BrownianPath& path, std::size_t max_iter, double tol,
                        const std::vector<double>* initial = nullptr) const {
        check_path(path);
        detail::require(max_iter > 0, "max_iter must be positive");
        detail::require(tol > 0.0, "tol must be positive");
        const std::size_t n = grid_.n_steps;
        PicardResult r;
        r.heuristic = problem_.sigma.gamma < 1.0;
        std::vector<double> cur = initial ? *initial : h_;
        detail::require(cur.size() == n + 1, "initial iterate has the wrong length");
        std::vector<double> next(n + 1), z(n);
        while (r.n_iterations < max_iter) {
            // The same increments are used in every sweep.
            for (std::size_t i = 0; i < n; ++i)
                z[i] = problem_.lambda_scale * problem_.sigma(cur[i]) * path.increments[i];
            double gap = 0.0;
            for (std::size_t k = 0; k <= n; ++k) {
                next[k] = h_[k] + weights_.convolve(k, z);
                if (!std::isfinite(next[k])) throw DivergenceError(path.seed, k);
                gap = std::max(gap, std::abs(next[k] - cur[k]));
            }
            ++r.n_iterations;
            r.sup_gaps.push_back(gap);
            cur.swap(next);
            if (gap < tol) {
                r.converged = true;
                break;
            }
        }
        r.final = SiePath{grid_, std::move(cur), {hash_, path.seed}};
        return r;
    }

private:
    void check_path(const BrownianPath& path) const {
        detail::require(path.grid == grid_ && path.increments.size() == grid_.n_steps,
                        "Brownian path grid does not match the solver grid");
    }

    SieProblem problem_;
    TimeGrid grid_;
    ConvolutionWeights weights_;
    std::vector<double> h_;
    std::uint64_t hash_ = 0;
};

inline SiePath euler_solve(const SieProblem& problem, const BrownianPath& path) {
    return SieSolver(problem, path.grid).euler(path);
}

/// Picard iteration X^{n+1} = h + Σ w σ(X^n) ΔB started from h (or `initial`).
/// Non-convergence is reported through PicardResult::converged.
inline PicardResult picard_solve(const SieProblem& problem, const BrownianPath& path,
                                 std::size_t max_iter, double tol,
                                 const std::vector<double>* initial = nullptr) {
    return SieSolver(problem, path.grid).picard(path, max_iter, tol, initial);
}

// ---------------------------------------------------------------------------
// Fractional transform pair  Y = ∫ (t-s)^{α-1} X ds  and
// X = c_α^{-1} d/dt ∫ (t-s)^{-α} Y ds.

/// c_α = ∫_0^1 (1-r)^{α-1} r^{-α} dr = B(α, 1-α) = π / sin(πα).
inline double c_alpha(double alpha) {
    detail::require(alpha > 0.0 && alpha < 1.0,
                    "c_alpha requires alpha in (0, 1), got " + std::to_string(alpha));
    return std::numbers::pi / std::sin(std::numbers::pi * alpha);
}

/// Y(t_k) = Σ_{i<k} X(t_i) ((t_k - t_i)^α - (t_k - t_{i+1})^α) / α, i.e. the
/// weakly singular weight integrated exactly against piecewise-constant X.
inline std::vector<double> transform_forward(std::span<const double> x, double alpha, const TimeGrid& grid) {
    detail::require_power_alpha(alpha);
    detail::require(x.size() == grid.n_nodes(), "path length does not match the grid");
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt();
    // a[j] = ((j dt)^α - ((j-1) dt)^α) / α, stored reversed like the solver weights.
    std::vector<double> rev(n);
    for (std::size_t j = 1; j <= n; ++j) {
        const double hi = std::pow(static_cast<double>(j) * dt, alpha);
        const double lo = std::pow(static_cast<double>(j - 1) * dt, alpha);
        rev[n - j] = (hi - lo) / alpha;
    }
    std::vector<double> y(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) y[k] = detail::dot(rev.data() + (n - k), x.data(), k);
    return y;
}

inline std::vector<double> transform_forward(const SiePath& x, double alpha) {
    return transform_forward(x.values, alpha, x.grid);
}

/// Discrete inverse of the transform.
///
/// F(t_k) = ∫_0^{t_k} (t_k - s)^{-α} Y(s) ds is integrated exactly against an
/// interpolant that is linear in s^α on each panel, Y(s) ≈ A_i + B_i s^α. Y
/// behaves like t^α near the origin, so this interpolant reproduces constant X
/// exactly where a piecewise-constant one leaves an O(1) boundary layer. The
/// s^α moment is an incomplete Beta function. X(t_k) is then the forward
/// difference (F(t_{k+1}) - F(t_k)) / (c_α dt), backward at the last node.
inline std::vector<double> transform_inverse(std::span<const double> y, double alpha, const TimeGrid& grid) {
    detail::require_power_alpha(alpha);
    detail::require(y.size() == grid.n_nodes(), "sequence length does not match the grid");
    const std::size_t n = grid.n_steps;
    const double a1 = 1.0 + alpha;
    const double b1 = 1.0 - alpha;
    const double beta_full = boost::math::beta(a1, b1);

    std::vector<double> s_pow(n + 1);
    for (std::size_t i = 0; i <= n; ++i) s_pow[i] = std::pow(grid.node(i), alpha);

    std::vector<double> f(n + 1, 0.0);
    std::vector<double> inc_beta(n + 1);
    for (std::size_t k = 1; k <= n; ++k) {
        const double tk = grid.node(k);
        for (std::size_t i = 0; i <= k; ++i)
            inc_beta[i] = (i == k) ? beta_full
                                   : boost::math::beta(a1, b1, grid.node(i) / tk);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double w0 = kernel_l1_partial(alpha, tk, grid.node(i), grid.node(i + 1));
            const double w1 = tk * (inc_beta[i + 1] - inc_beta[i]);  // ∫ (t_k-s)^{-α} s^α ds
            const double slope = (y[i + 1] - y[i]) / (s_pow[i + 1] - s_pow[i]);
            acc += y[i] * w0 + slope * (w1 - s_pow[i] * w0);
        }
        f[k] = acc;
    }

    const double denom = c_alpha(alpha) * grid.dt();
    std::vector<double> x(n + 1);
    for (std::size_t k = 0; k < n; ++k) x[k] = (f[k + 1] - f[k]) / denom;
    x[n] = (f[n] - f[n - 1]) / denom;
    return x;
}

}  // namespace volterra_lab
