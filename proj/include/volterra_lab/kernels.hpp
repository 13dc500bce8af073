#pragma once

// Convolution kernels shared by every solver: the singular power kernel
// (t-s)^-alpha, the origin row p^theta_t(x) of the fractional heat kernel, and
// smooth positive kernels kappa(s,t). All functions here are pure.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "volterra_lab/errors.hpp"
#include "volterra_lab/quadrature.hpp"

namespace volterra_lab {

namespace detail {

inline void require_power_alpha(double alpha) {
    require(alpha > 0.0 && alpha < 0.5,
            "alpha must lie in the open interval (0, 0.5), got " + std::to_string(alpha));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel descriptors

struct SingularPower {
    double alpha;
};

struct FractionalHeat {
    double theta;
};

struct SmoothKernel {
    std::function<double(double, double)> kappa;  // kappa(s, t), 0 <= s <= t
    double kappa_min = 0.0;
    double derivative_bound = 0.0;
};

using KernelSpec = std::variant<SingularPower, FractionalHeat, SmoothKernel>;

/// A non-negative test function with compact support [lo, hi].
struct TestFunction {
    std::function<double(double)> phi;
    double lo = -1.0;
    double hi = 1.0;
    std::string note;

    double operator()(double x) const {
        if (x < lo || x > hi) return 0.0;
        return phi(x);
    }

    /// ⟨1, φ⟩ by composite Gauss–Legendre over the support.
    double mass() const {
        return quad::gauss_legendre([this](double x) { return (*this)(x); }, lo, hi, 64);
    }

    /// `amplitude * (1 - u^2)^3` with u mapping [a, b] onto [-1, 1]; C^2 at the edges.
    static TestFunction bump(double a, double b, double amplitude = 1.0) {
        detail::require(b > a, "bump support must satisfy a < b");
        detail::require(amplitude >= 0.0, "bump amplitude must be non-negative");
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        TestFunction f;
        f.phi = [=](double x) {
            const double u = (x - mid) / half;
            if (std::abs(u) >= 1.0) return 0.0;
            const double v = 1.0 - u * u;
            return amplitude * v * v * v;
        };
        f.lo = a;
        f.hi = b;
        f.note = "polynomial bump (1-u^2)^3, C^2";
        return f;
    }

    /// Bump on [a, b] scaled to ⟨1, φ⟩ = 1. The (1-u^2)^3 profile has mass 32/35 on [-1, 1].
    static TestFunction unit_bump(double a, double b) {
        detail::require(b > a, "bump support must satisfy a < b");
        const double half = 0.5 * (b - a);
        return bump(a, b, 35.0 / (32.0 * half));
    }

    static TestFunction zero(double a = -1.0, double b = 1.0) {
        TestFunction f;
        f.phi = [](double) { return 0.0; };
        f.lo = a;
        f.hi = b;
        f.note = "identically zero";
        return f;
    }
};

// ---------------------------------------------------------------------------
// Singular power kernel

/// (t - s)^-alpha for 0 <= s < t.
inline double power_kernel_eval(double alpha, double t, double s) {
    detail::require_power_alpha(alpha);
    if (!(s < t)) throw DomainError("power kernel requires s < t (singular at s = t)");
    if (s < 0.0) throw DomainError("power kernel requires s >= 0");
    return std::pow(t - s, -alpha);
}

/// ∫_a^b (t - s)^{-2 alpha} ds, exact.
inline double kernel_l2_partial(double alpha, double t, double a, double b) {
    detail::require_power_alpha(alpha);
    if (a < 0.0 || a > b) throw DomainError("kernel_l2_partial requires 0 <= a <= b");
    if (b > t) throw DomainError("kernel_l2_partial requires b <= t");
    if (a == b) return 0.0;
    const double p = 1.0 - 2.0 * alpha;
    return (std::pow(t - a, p) - std::pow(t - b, p)) / p;
}

/// ∫_a^b (t - s)^{-alpha} ds, exact. Used for drift and product-integration weights.
inline double kernel_l1_partial(double alpha, double t, double a, double b) {
    if (a == b) return 0.0;
    const double p = 1.0 - alpha;
    return (std::pow(t - a, p) - std::pow(t - b, p)) / p;
}

// ---------------------------------------------------------------------------
// Fractional heat kernel at the origin

enum class Direction { AlphaToTheta, ThetaToAlpha };

/// alpha = 1/(2 + theta) and its inverse. theta = 0 maps to the excluded
/// boundary alpha = 1/2; SIE solvers reject it.
inline double alpha_theta_convert(double value, Direction direction) {
    if (direction == Direction::AlphaToTheta) {
        detail::require(value > 0.0 && value < 0.5,
                        "alpha must lie in (0, 0.5), got " + std::to_string(value));
        return 1.0 / value - 2.0;
    }
    detail::require(value >= 0.0 && std::isfinite(value),
                    "theta must be non-negative, got " + std::to_string(value));
    return 1.0 / (2.0 + value);
}

/// Normalizing constant of p^theta_t. With q = 2 + theta the substitution
/// y = |x|^q / (2t) gives ∫ e^{-|x|^q/(2t)} dx = 2 (2t)^{1/q} Γ(1/q) / q, and
/// the t-dependence cancels against t^{-1/q}.
inline double c_theta(double theta) {
    detail::require(theta >= 0.0 && std::isfinite(theta),
                    "theta must be non-negative, got " + std::to_string(theta));
    const double q = 2.0 + theta;
    return q / (2.0 * std::pow(2.0, 1.0 / q) * std::tgamma(1.0 / q));
}

inline double frac_heat_kernel_eval(double theta, double t, double x) {
    if (!(t > 0.0)) throw DomainError("fractional heat kernel requires t > 0");
    const double q = 2.0 + theta;
    return c_theta(theta) * std::pow(t, -1.0 / q) * std::exp(-std::pow(std::abs(x), q) / (2.0 * t));
}

/// p^theta_t(x) with c_theta computed once at construction.
class FracHeatKernel {
public:
    explicit FracHeatKernel(double theta)
        : theta_(theta), q_(2.0 + theta), alpha_(alpha_theta_convert(theta, Direction::ThetaToAlpha)),
          c_(c_theta(theta)) {}

    double theta() const noexcept { return theta_; }
    double alpha() const noexcept { return alpha_; }
    double c() const noexcept { return c_; }

    double operator()(double t, double x) const {
        if (!(t > 0.0)) throw DomainError("fractional heat kernel requires t > 0");
        return c_ * std::pow(t, -1.0 / q_) * std::exp(-std::pow(std::abs(x), q_) / (2.0 * t));
    }

    /// Length scale where the exponent equals one: |x|^q = 2t.
    double width(double t) const { return std::pow(2.0 * t, 1.0 / q_); }

private:
    double theta_;
    double q_;
    double alpha_;
    double c_;
};

/// S_t φ(0) = ∫ p^theta_t(y) φ(y) dy; φ(0) at t = 0.
inline double semigroup_at_origin(const FracHeatKernel& kernel, double t, const TestFunction& phi) {
    if (t < 0.0) throw DomainError("semigroup_at_origin requires t >= 0");
    detail::require(phi.hi > phi.lo, "test function support must be a non-empty interval");
    if (t == 0.0) return phi(0.0);

    // Break the support at the kernel peak and at ±10 widths so the panels
    // resolve the peak for small t.
    const double w = 10.0 * kernel.width(t);
    std::vector<double> cuts{phi.lo, phi.hi};
    for (double c : {-w, 0.0, w})
        if (c > phi.lo && c < phi.hi) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());

    const auto integrand = [&](double y) { return kernel(t, y) * phi(y); };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += quad::gauss_legendre_doubling(integrand, cuts[i], cuts[i + 1], 1e-10, 1e-300).value;
    return total;
}

inline double semigroup_at_origin(double theta, double t, const TestFunction& phi) {
    return semigroup_at_origin(FracHeatKernel(theta), t, phi);
}

// ---------------------------------------------------------------------------

/// SIE exponent alpha of a kernel, if it is singular.
inline std::optional<double> kernel_alpha(const KernelSpec& spec) {
    if (const auto* p = std::get_if<SingularPower>(&spec)) return p->alpha;
    if (const auto* h = std::get_if<FractionalHeat>(&spec))
        return alpha_theta_convert(h->theta, Direction::ThetaToAlpha);
    return std::nullopt;
}

/// Checks the invariants of a kernel descriptor for use on [0, t_end].
inline void validate_kernel(const KernelSpec& spec, double t_end) {
    std::visit(
        [t_end](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, SingularPower>) {
                detail::require_power_alpha(k.alpha);
            } else if constexpr (std::is_same_v<K, FractionalHeat>) {
                detail::require(k.theta > 0.0,
                                "fractional heat kernel in an SIE requires theta > 0 "
                                "(theta = 0 gives alpha = 0.5, outside (0, 0.5))");
            } else {
                detail::require(static_cast<bool>(k.kappa), "smooth kernel has no kappa");
                detail::require(k.kappa_min > 0.0, "smooth kernel requires kappa_min > 0");
                constexpr int n = 64;
                for (int i = 0; i <= n; ++i) {
                    const double t = t_end * i / n;
                    for (int j = 0; j <= i; ++j) {
                        const double s = t_end * j / n;
                        detail::require(k.kappa(s, t) >= k.kappa_min,
                                        "smooth kernel falls below kappa_min");
                    }
                }
            }
        },
        spec);
}

}  // namespace volterra_lab
