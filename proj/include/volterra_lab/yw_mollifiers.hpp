#pragma once

// Yamada–Watanabe approximation of |x|.
//
//   a_0 = 1,  ∫_{a_n}^{a_{n-1}} ρ^{-2}(x) dx = n
//   ψ_n ≥ 0,  supp ψ_n ⊂ (a_n, a_{n-1}),  ψ_n ≤ 2ρ^{-2}/n,  ∫ ψ_n = 1
//   φ_n(x) = ∫_0^{|x|} ∫_0^y ψ_n(z) dz dy
//
// ψ_n is ρ^{-2} times a smoothstep cutoff, renormalized. The intervals shrink
// super-exponentially, so every table lives on a logarithmic grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "volterra_lab/errors.hpp"

namespace volterra_lab {

/// The modulus ρ of the construction; strictly increasing with ρ(x) ≥ √x.
struct Rho {
    std::function<double(double)> f;
    bool is_sqrt = false;
    std::string name;

    double operator()(double x) const { return f(x); }
    double inv_sq(double x) const {
        if (is_sqrt) return 1.0 / x;
        const double r = f(x);
        return 1.0 / (r * r);
    }

    static Rho sqrt() { return {[](double x) { return std::sqrt(x); }, true, "sqrt"}; }
};

/// Coordinate in which the cutoff edges are measured.
enum class CutoffScale {
    Mass,    // fraction of ∫ρ^{-2} across the interval (log x for ρ = √x)
    Linear,  // fraction of the interval length
};

enum class SmoothstepOrder { C1 = 1, C2 = 2, Cinf = 3 };

struct MollifierOptions {
    double edge_fraction = 0.1;
    CutoffScale scale = CutoffScale::Mass;
    SmoothstepOrder order = SmoothstepOrder::C2;
    std::size_t panels = 10000;  // cached grid cells per interval
};

/// Largest n for which the family is built; a_n = e^{-n(n+1)/2} leaves the
/// comfortable double range soon after.
inline constexpr std::size_t kMaxMollifierIndex = 25;

namespace detail {

using yw_rule = boost::math::quadrature::gauss<double, 10>;

inline double smoothstep(double v, SmoothstepOrder order) {
    v = std::clamp(v, 0.0, 1.0);
    switch (order) {
        case SmoothstepOrder::C1: return v * v * (3.0 - 2.0 * v);
        case SmoothstepOrder::C2: return v * v * v * (10.0 + v * (-15.0 + 6.0 * v));
        case SmoothstepOrder::Cinf: {
            if (v <= 0.0) return 0.0;
            if (v >= 1.0) return 1.0;
            const double a = std::exp(-1.0 / v);
            const double b = std::exp(-1.0 / (1.0 - v));
            return a / (a + b);
        }
    }
    return v;
}

/// ∫_lo^hi f(x) dx computed in y = log x.
template <class F>
double log_integral(F&& f, double lo, double hi, std::size_t panels) {
    if (!(hi > lo)) return 0.0;
    const double ylo = std::log(lo), yhi = std::log(hi);
    const double h = (yhi - ylo) / static_cast<double>(panels);
    double total = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double a = ylo + h * static_cast<double>(p);
        const double b = (p + 1 == panels) ? yhi : a + h;
        total += yw_rule::integrate([&](double y) { const double x = std::exp(y); return f(x) * x; }, a, b);
    }
    return total;
}

/// Cumulative integral of f on [lo, hi] tabulated on a log grid; queries add a
/// local Gauss–Legendre piece from the nearest node below.
class CumulativeTable {
public:
    CumulativeTable() = default;

    template <class F>
    CumulativeTable(F f, double lo, double hi, std::size_t panels)
        : f_(std::move(f)), lo_(lo), hi_(hi), ylo_(std::log(lo)), panels_(panels) {
        h_ = (std::log(hi) - ylo_) / static_cast<double>(panels);
        cum_.assign(panels + 1, 0.0);
        for (std::size_t j = 0; j < panels; ++j) cum_[j + 1] = cum_[j] + piece(node(j), node(j + 1));
    }

    /// ∫_lo^x f, clamped to the table range.
    double operator()(double x) const {
        if (x <= lo_) return 0.0;
        if (x >= hi_) return cum_.back();
        const double pos = (std::log(x) - ylo_) / h_;
        std::size_t j = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
        j = std::min(j, panels_ - 1);
        return cum_[j] + piece(node(j), x);
    }

    double total() const { return cum_.back(); }

private:
    double node(std::size_t j) const {
        if (j == 0) return lo_;
        if (j == panels_) return hi_;
        return std::exp(ylo_ + h_ * static_cast<double>(j));
    }

    double piece(double a, double b) const {
        if (!(b > a)) return 0.0;
        return yw_rule::integrate([this](double y) { const double x = std::exp(y); return f_(x) * x; },
                                  std::log(a), std::log(b));
    }

    std::function<double(double)> f_;
    double lo_ = 0.0, hi_ = 0.0, ylo_ = 0.0, h_ = 0.0;
    std::size_t panels_ = 0;
    std::vector<double> cum_;
};

inline void check_rho_bound(const Rho& rho) {
    for (int i = 0; i <= 400; ++i) {
        const double x = std::pow(10.0, -40.0 + 0.1 * i);  // 1e-40 .. 1
        require(rho(x) >= std::sqrt(x) * (1.0 - 1e-12),
                "rho violates rho(x) >= sqrt(x) at x = " + std::to_string(x));
    }
}

}  // namespace detail

/// a_0 .. a_{n_max}. Closed form e^{-n(n+1)/2} for ρ = √x; otherwise each a_n
/// is found by bisection in log x to 1e-12 relative.
inline std::vector<double> a_sequence(std::size_t n_max, const Rho& rho = Rho::sqrt()) {
    detail::require(n_max >= 1, "n_max must be at least 1");
    detail::require(n_max <= kMaxMollifierIndex,
                    "n_max above " + std::to_string(kMaxMollifierIndex) + " underflows a_n");
    std::vector<double> a(n_max + 1);
    a[0] = 1.0;
    if (rho.is_sqrt) {
        for (std::size_t n = 1; n <= n_max; ++n) a[n] = std::exp(-0.5 * double(n) * double(n + 1));
        return a;
    }
    detail::check_rho_bound(rho);
    const auto mass = [&rho](double lo, double hi) {
        return detail::log_integral([&rho](double x) { return rho.inv_sq(x); }, lo, hi, 2000);
    };
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double target = static_cast<double>(n);
        const double hi = a[n - 1];
        // ρ ≥ √x gives mass ≤ log(hi/lo), so the root lies below hi·e^{-n}.
        double y_hi = std::log(hi) - target;
        double y_lo = y_hi;
        do {
            y_lo -= 2.0 * target + 1.0;
            if (y_lo < std::log(1e-300))
                throw ConstructionError("a_" + std::to_string(n) + " underflows: rho^-2 mass too small near 0");
        } while (mass(std::exp(y_lo), hi) < target);
        if (mass(std::exp(y_hi), hi) >= target) y_lo = y_hi;  // ρ = √x-like: already there
        while (y_hi - y_lo > 1e-12) {
            const double mid = 0.5 * (y_lo + y_hi);
            if (mass(std::exp(mid), hi) >= target) y_lo = mid;
            else y_hi = mid;
        }
        a[n] = std::exp(0.5 * (y_lo + y_hi));
    }
    return a;
}

/// ρ, a_n and the evaluators ψ_n, φ_n', φ_n for n = 1..n_max. Immutable after
/// construction.
class MollifierFamily {
public:
    explicit MollifierFamily(std::size_t n_max, Rho rho = Rho::sqrt(), MollifierOptions options = {})
        : rho_(std::move(rho)), options_(options), a_(a_sequence(n_max, rho_)) {
        detail::require(options_.edge_fraction > 0.0 && options_.edge_fraction < 0.5,
                        "edge_fraction must lie in (0, 0.5)");
        detail::require(options_.panels >= 16, "at least 16 panels per interval are required");
        parts_.resize(n_max + 1);
        for (std::size_t n = 1; n <= n_max; ++n) build(n);
    }

    std::size_t n_max() const noexcept { return a_.size() - 1; }
    const std::vector<double>& a() const noexcept { return a_; }
    const Rho& rho() const noexcept { return rho_; }
    const MollifierOptions& options() const noexcept { return options_; }

    /// Normalizer Z_n = ∫ ρ^{-2} s_n; the bound ψ_n ≤ 2ρ^{-2}/n holds iff n/Z_n ≤ 2.
    double normalizer(std::size_t n) const { return part(n).z; }

    double psi(std::size_t n, double x) const {
        const Part& p = part(n);
        if (!(x > p.lo && x < p.hi)) return 0.0;
        return rho_.inv_sq(x) * cutoff(p, x) / p.z;
    }

    /// φ_n'(x) = sgn(x) ∫_0^{|x|} ψ_n.
    double phi_prime(std::size_t n, double x) const {
        const double v = part(n).psi_cum(std::abs(x));
        return x < 0.0 ? -v : v;
    }

    /// φ_n(x) = ∫_0^{|x|} (|x| - z) ψ_n(z) dz.
    double phi(std::size_t n, double x) const {
        const Part& p = part(n);
        const double ax = std::abs(x);
        if (ax <= p.lo) return 0.0;
        return ax * p.psi_cum(ax) - p.zpsi_cum(ax);
    }

private:
    struct Part {
        double lo = 0.0, hi = 0.0, z = 1.0;
        detail::CumulativeTable mass_cum;  // ∫ρ^{-2} (general ρ only)
        detail::CumulativeTable psi_cum;
        detail::CumulativeTable zpsi_cum;
    };

    const Part& part(std::size_t n) const {
        detail::require(n >= 1 && n <= n_max(), "mollifier index out of range");
        return parts_[n];
    }

    /// Position of x across the interval in the configured coordinate, in [0, 1].
    double coordinate(const Part& p, double x, std::size_t n) const {
        if (options_.scale == CutoffScale::Linear) return (x - p.lo) / (p.hi - p.lo);
        if (rho_.is_sqrt) return std::log(x / p.lo) / static_cast<double>(n);
        return p.mass_cum(x) / p.mass_cum.total();
    }

    double cutoff(const Part& p, double x) const {
        const std::size_t n = static_cast<std::size_t>(&p - parts_.data());
        const double v = coordinate(p, x, n);
        const double e = options_.edge_fraction;
        if (v < e) return detail::smoothstep(v / e, options_.order);
        if (v > 1.0 - e) return detail::smoothstep((1.0 - v) / e, options_.order);
        return 1.0;
    }

    void build(std::size_t n) {
        Part& p = parts_[n];
        p.lo = a_[n];
        p.hi = a_[n - 1];
        const std::size_t m = options_.panels;
        if (!rho_.is_sqrt)
            p.mass_cum = detail::CumulativeTable([this](double x) { return rho_.inv_sq(x); }, p.lo, p.hi, m);

        const detail::CumulativeTable raw([this, &p](double x) { return rho_.inv_sq(x) * cutoff(p, x); },
                                          p.lo, p.hi, m);
        p.z = raw.total();
        if (static_cast<double>(n) / p.z > 2.0)
            throw ConstructionError("psi_" + std::to_string(n) + " would exceed 2 rho^-2 / n (n / Z_n = " +
                                    std::to_string(static_cast<double>(n) / p.z) +
                                    "); use a smaller edge_fraction");
        p.psi_cum = detail::CumulativeTable([this, n](double x) { return psi(n, x); }, p.lo, p.hi, m);
        p.zpsi_cum = detail::CumulativeTable([this, n](double x) { return x * psi(n, x); }, p.lo, p.hi, m);
    }

    Rho rho_;
    MollifierOptions options_;
    std::vector<double> a_;
    std::vector<Part> parts_;
};

inline double psi_n_eval(const MollifierFamily& family, std::size_t n, double x) { return family.psi(n, x); }
inline double phi_n_eval(const MollifierFamily& family, std::size_t n, double x) { return family.phi(n, x); }

// ---------------------------------------------------------------------------

struct PropertyCheck {
    std::string property;
    std::size_t n = 0;
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;

    double slack() const { return bound - measured; }
};

struct PropertyReport {
    std::vector<PropertyCheck> checks;

    bool all_pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.pass; });
    }
};

namespace detail {

/// Sample points: log-spaced from a_n/10 to 2 plus a dense sweep of (a_n, a_{n-1}).
inline std::vector<double> mollifier_grid(double lo, double hi, std::size_t count) {
    std::vector<double> xs;
    xs.reserve(count);
    const std::size_t half = count / 2;
    const double y0 = std::log(lo / 10.0), y1 = std::log(2.0);
    for (std::size_t i = 0; i < half; ++i) xs.push_back(std::exp(y0 + (y1 - y0) * (i + 0.5) / half));
    const double z0 = std::log(lo), z1 = std::log(hi);
    for (std::size_t i = half; i < count; ++i)
        xs.push_back(std::exp(z0 + (z1 - z0) * (i - half + 0.5) / (count - half)));
    return xs;
}

}  // namespace detail

/// Audits every property of the family for n = 1..n_check. Integrals use an
/// adaptive Gauss–Kronrod rule independent of the cached tables.
inline PropertyReport verify_family(const MollifierFamily& family, std::size_t n_check,
                                    std::size_t grid_points = 10000) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 31>;
    detail::require(n_check >= 1 && n_check <= family.n_max(), "n_check must lie in [1, n_max]");
    PropertyReport report;
    const auto& a = family.a();
    const Rho& rho = family.rho();
    const auto add = [&report](std::string name, std::size_t n, double measured, double bound) {
        report.checks.push_back({std::move(name), n, measured, bound, measured <= bound});
    };
    const auto log_gk = [](auto f, double lo, double hi) {
        return gk::integrate([&f](double y) { const double x = std::exp(y); return f(x) * x; }, std::log(lo),
                             std::log(hi), 12, 1e-11);
    };

    for (std::size_t n = 1; n <= n_check; ++n) {
        const double lo = a[n], hi = a[n - 1];
        const double nd = static_cast<double>(n);

        add("a_decreasing", n, lo - hi, 0.0);
        add("acond_integral", n, std::abs(log_gk([&rho](double x) { return rho.inv_sq(x); }, lo, hi) - nd),
            1e-8);
        if (rho.is_sqrt) {
            add("a_closed_form", n, std::abs(lo - std::exp(-0.5 * nd * (nd + 1.0))) / lo, 1e-15);
            add("a_ratio_e_pow_n", n, std::abs(hi / lo - std::exp(nd)) / std::exp(nd), 1e-12);
        }
        add("psi_integral", n, std::abs(log_gk([&](double x) { return family.psi(n, x); }, lo, hi) - 1.0), 1e-6);

        const std::vector<double> xs = detail::mollifier_grid(lo, hi, grid_points);
        double bound_rho = 0.0, bound_x = 0.0, outside = 0.0, negative = 0.0, psi_max = 0.0;
        double dphi = 0.0, fd_err = 0.0, above_abs = 0.0, gap_abs = 0.0, core = 0.0, even = 0.0, odd = 0.0;
        double monotone = -1.0;
        for (double x : xs) {
            const double psi = family.psi(n, x);
            psi_max = std::max(psi_max, psi);
            negative = std::max(negative, -psi);
            if (x <= lo || x >= hi) outside = std::max(outside, std::abs(psi));
            const double r = rho(x);
            bound_rho = std::max(bound_rho, psi * nd * r * r);
            bound_x = std::max(bound_x, psi * nd * x);

            const double phi = family.phi(n, x);
            dphi = std::max({dphi, std::abs(family.phi_prime(n, x)), std::abs(family.phi_prime(n, -x))});
            above_abs = std::max(above_abs, (phi - x) / x);
            gap_abs = std::max(gap_abs, x - phi);
            if (x <= lo) core = std::max(core, std::abs(phi));
            even = std::max(even, std::abs(phi - family.phi(n, -x)));
            odd = std::max(odd, std::abs(family.phi_prime(n, x) + family.phi_prime(n, -x)));
            if (x > lo && x < hi) {
                const double h = 1e-4 * x;
                const double fd = (family.phi_prime(n, x + h) - family.phi_prime(n, x - h)) / (2.0 * h);
                fd_err = std::max(fd_err, std::abs(fd - psi));
            }
            if (n < n_check) monotone = std::max(monotone, (phi - family.phi(n + 1, x)) / x);
        }
        add("psi_nonnegative", n, negative, 0.0);
        add("psi_support", n, outside, 0.0);
        add("psi_bound_2_over_n_rho2", n, bound_rho, 2.0 + 1e-9);
        add("psi_bound_2_over_nx", n, bound_x, 2.0 + 1e-9);
        add("phi_prime_abs_le_1", n, dphi, 1.0 + 1e-12);
        add("phi_second_derivative_eq_psi", n, fd_err / psi_max, 1e-5);
        add("phi_le_abs", n, above_abs, 1e-12);
        add("abs_minus_phi_le_a_prev", n, gap_abs, hi);
        add("phi_zero_on_core", n, core, 0.0);
        add("phi_even", n, even, 0.0);
        add("phi_prime_odd", n, odd, 0.0);
        if (n < n_check) add("phi_monotone_in_n", n, monotone, 1e-12);
    }
    return report;
}

}  // namespace volterra_lab
