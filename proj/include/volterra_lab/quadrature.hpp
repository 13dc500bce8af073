#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include <boost/math/quadrature/gauss.hpp>

#include "volterra_lab/errors.hpp"

namespace volterra_lab::quad {

/// Fixed order of every Gauss–Legendre panel in the library.
inline constexpr unsigned kGaussOrder = 20;

/// Composite Gauss–Legendre rule with `panels` equal panels on [a, b].
template <class F>
double gauss_legendre(F&& f, double a, double b, std::size_t panels) {
    using rule = boost::math::quadrature::gauss<double, kGaussOrder>;
    if (!(b > a) || panels == 0) return 0.0;
    const double h = (b - a) / static_cast<double>(panels);
    double total = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + h * static_cast<double>(p);
        const double hi = (p + 1 == panels) ? b : lo + h;
        total += rule::integrate(f, lo, hi);
    }
    return total;
}

struct AdaptiveResult {
    double value = 0.0;
    std::size_t panels = 0;
    bool converged = false;
};

/// Doubles the panel count until two successive composite results agree to
/// `rel_tol` (relative, with an absolute floor of rel_tol * abs_scale).
template <class F>
AdaptiveResult gauss_legendre_doubling(F&& f, double a, double b, double rel_tol = 1e-10,
                                       double abs_scale = 0.0, std::size_t start_panels = 4,
                                       std::size_t max_panels = std::size_t{1} << 16) {
    AdaptiveResult r;
    r.panels = start_panels;
    double prev = gauss_legendre(f, a, b, r.panels);
    while (r.panels < max_panels) {
        r.panels *= 2;
        const double cur = gauss_legendre(f, a, b, r.panels);
        const double scale = std::max(std::abs(cur), abs_scale);
        if (std::abs(cur - prev) <= rel_tol * scale) {
            r.value = cur;
            r.converged = true;
            return r;
        }
        prev = cur;
    }
    r.value = prev;
    return r;
}

/// Pairwise (cascade) summation; error grows as O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace volterra_lab::quad
