#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "volterra_lab/det_volterra.hpp"
#include "volterra_lab/monte_carlo.hpp"

using namespace volterra_lab;

namespace {

SieProblem linear_problem(double alpha, double x0) {
    SieProblem p;
    p.kernel = SingularPower{alpha};
    p.sigma = {[](double x) { return x; }, 1.0, 1.0, 1.0, "linear"};
    p.x0 = x0;
    return p;
}

// m(t) = 1 + ∫ (t-s)^{-2α} m(s) ds = 1 + Γ(p) I^p m with p = 1 - 2α, solved by
// the Mittag-Leffler function m(t) = E_p(Γ(p) t^p).
double mittag_leffler_moment(double alpha, double t) {
    const double p = 1.0 - 2.0 * alpha;
    const double z = std::tgamma(p) * std::pow(t, p);
    double sum = 0.0;
    for (int k = 0; k < 400; ++k) {
        const double term = std::exp(k * std::log(z) - std::lgamma(p * k + 1.0));
        sum += term;
        if (k > 10 && term < 1e-17 * sum) break;
    }
    return sum;
}

}  // namespace

TEST(LinearMoment, ZeroForcingGivesZero) {
    for (auto scheme : {MomentScheme::LeftPoint, MomentScheme::ProductTrapezoid}) {
        const auto m = solve_linear_moment(linear_problem(0.25, 0.0), TimeGrid(1.0, 64), scheme);
        EXPECT_TRUE(std::all_of(m.m.begin(), m.m.end(), [](double v) { return v == 0.0; }));
    }
}

TEST(LinearMoment, LeftPointMatchesDirectRecursion) {
    const double alpha = 0.3;
    const TimeGrid grid(0.7, 50);
    const auto m = solve_linear_moment(linear_problem(alpha, 1.2), grid);
    std::vector<double> ref(grid.n_nodes());
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        const double tk = grid.node(k);
        double acc = 1.44;
        for (std::size_t i = 0; i < k; ++i) {
            const double a = tk - grid.node(i), b = tk - grid.node(i + 1);
            acc += ref[i] * (std::pow(a, 1.0 - 2.0 * alpha) - std::pow(b, 1.0 - 2.0 * alpha)) / (1.0 - 2.0 * alpha);
        }
        ref[k] = acc;
        EXPECT_NEAR(m.m[k], ref[k], 1e-12 * ref[k]);
    }
}

TEST(LinearMoment, ProductTrapezoidConvergesToMittagLeffler) {
    const double exact = mittag_leffler_moment(0.25, 1.0);
    EXPECT_NEAR(exact, std::exp(std::numbers::pi) * std::erfc(-std::sqrt(std::numbers::pi)), 1e-10 * exact);
    const auto m = solve_linear_moment(linear_problem(0.25, 1.0), TimeGrid(1.0, 1024), MomentScheme::ProductTrapezoid);
    EXPECT_NEAR(m.m.back(), exact, 1e-4 * exact);
    for (auto [alpha, n] : {std::pair{0.1, 512u}, std::pair{0.3, 1024u}}) {
        const auto ma =
            solve_linear_moment(linear_problem(alpha, 1.0), TimeGrid(1.0, n), MomentScheme::ProductTrapezoid);
        const double e = mittag_leffler_moment(alpha, 1.0);
        EXPECT_NEAR(ma.m.back(), e, 1e-3 * e) << alpha;
    }
    // The implicit diagonal weight dt^{1-2α}(1/p - 1/(p+1)) exceeds 1 on coarse grids near α = 1/2.
    EXPECT_THROW(solve_linear_moment(linear_problem(0.4, 1.0), TimeGrid(1.0, 512), MomentScheme::ProductTrapezoid),
                 NumericalFailure);
}

TEST(LinearMoment, SelfConvergenceAtUnitHorizon) {
    const auto p = linear_problem(0.25, 1.0);
    const auto at = [&](std::size_t n, MomentScheme s) { return solve_linear_moment(p, TimeGrid(1.0, n), s).m.back(); };
    const double trap = std::abs(at(1024, MomentScheme::ProductTrapezoid) - at(512, MomentScheme::ProductTrapezoid)) /
                        at(1024, MomentScheme::ProductTrapezoid);
    EXPECT_LT(trap, 0.01);
    // Left-point is first order with a large constant here (m(1) ≈ 46): the
    // 512/1024 difference is just above 1% and halves per doubling.
    const double l512 = at(512, MomentScheme::LeftPoint), l1024 = at(1024, MomentScheme::LeftPoint);
    const double l2048 = at(2048, MomentScheme::LeftPoint);
    EXPECT_NEAR((l1024 - l512) / (l2048 - l1024), 2.0, 0.05);
    EXPECT_LT(std::abs(2.0 * l2048 - l1024 - mittag_leffler_moment(0.25, 1.0)) / l2048, 1e-3);
}

TEST(LinearMoment, HeatKernelIncludesNormalization) {
    SieProblem p = linear_problem(0.25, 1.0);
    p.kernel = FractionalHeat{2.0};
    const TimeGrid grid(1.0, 32);
    const auto m_heat = solve_linear_moment(p, grid);
    SieProblem q = linear_problem(0.25, 1.0);
    q.lambda_scale = c_theta(2.0);
    const auto m_power = solve_linear_moment(q, grid);
    for (std::size_t k = 0; k <= grid.n_steps; ++k) EXPECT_NEAR(m_heat.m[k], m_power.m[k], 1e-14 * m_power.m[k]);
}

TEST(LinearMoment, MonteCarloMatchesEulerMoment) {
    // Short horizon keeps X^2 light-tailed enough for 3-stderr comparisons.
    const TimeGrid grid(0.03, 128);
    const auto problem = linear_problem(0.25, 1.0);
    const SieSolver solver(problem, grid);
    const auto oracle = solve_linear_moment(problem, grid);
    const std::vector<std::size_t> ks{16, 32, 48, 64, 80, 96, 112, 128};
    struct Acc {
        std::vector<mc::MomentStats> s;
        void merge(const Acc& o) {
            for (std::size_t i = 0; i < s.size(); ++i) s[i].merge(o.s[i]);
        }
    };
    auto acc = mc::block_reduce<Acc>(
        40000, 0, [&] { return Acc{std::vector<mc::MomentStats>(ks.size())}; },
        [&](Acc& a, std::size_t i) {
            const auto x = solver.euler(sample_brownian_increments(grid, derive_path_seed(99, i)));
            for (std::size_t j = 0; j < ks.size(); ++j) a.s[j].add(x.values[ks[j]] * x.values[ks[j]]);
        });
    for (std::size_t j = 0; j < ks.size(); ++j)
        EXPECT_LT(std::abs(acc.s[j].mean - oracle.m[ks[j]]), 3.0 * acc.s[j].stderr_mean()) << "k=" << ks[j];
}

TEST(LinearMoment, RequiresSingularKernel) {
    SieProblem p = linear_problem(0.25, 1.0);
    p.kernel = SmoothKernel{[](double, double) { return 1.0; }, 1.0, 0.0};
    EXPECT_THROW(solve_linear_moment(p, TimeGrid(1.0, 8)), ParameterError);
}

TEST(LogLaplace, ZeroTestFunction) {
    const auto sol = solve_log_laplace(2.0, TestFunction::zero(), TimeGrid(0.5, 64));
    EXPECT_TRUE(std::all_of(sol.u0.begin(), sol.u0.end(), [](double v) { return v == 0.0; }));
    EXPECT_TRUE(std::all_of(sol.mass.begin(), sol.mass.end(), [](double v) { return v == 0.0; }));
    EXPECT_EQ(sol.clamp_count, 0u);
}

TEST(LogLaplace, DominatedByFreeEvolution) {
    for (double theta : {0.5, 2.0, 5.0}) {
        const TimeGrid grid(1.0, 256);
        const auto phi = TestFunction::bump(-1.0, 1.0, 3.0);
        const auto sol = solve_log_laplace(theta, phi, grid);
        for (std::size_t k = 0; k <= grid.n_steps; ++k) {
            const double s = semigroup_at_origin(theta, grid.node(k), phi);
            EXPECT_LE(sol.u0[k], s) << "theta=" << theta << " k=" << k;
            EXPECT_GE(sol.u0[k], 0.0);
        }
    }
}

TEST(LogLaplace, LinearOnlyIsFreeEvolution) {
    const TimeGrid grid(0.5, 128);
    const auto phi = TestFunction::unit_bump(-1.0, 1.0);
    LogLaplaceOptions opts;
    opts.linear_only = true;
    const auto sol = solve_log_laplace(2.0, phi, grid, opts);
    for (std::size_t k = 0; k <= grid.n_steps; ++k)
        EXPECT_EQ(sol.u0[k], semigroup_at_origin(2.0, grid.node(k), phi));
}

TEST(LogLaplace, MassIdentityConsistency) {
    const TimeGrid grid(0.5, 512);
    const auto phi = TestFunction::unit_bump(-1.0, 1.0);
    const auto sol = solve_log_laplace(2.0, phi, grid);
    std::vector<double> panels;
    for (std::size_t k = 0; k < grid.n_steps; ++k)
        panels.push_back(0.25 * grid.dt() * (sol.u0[k] * sol.u0[k] + sol.u0[k + 1] * sol.u0[k + 1]));
    const double recomputed = phi.mass() - quad::pairwise_sum(panels);
    EXPECT_NEAR(sol.mass.back(), recomputed, 1e-10);
    for (std::size_t k = 1; k <= grid.n_steps; ++k) EXPECT_LE(sol.mass[k], sol.mass[k - 1]);
    EXPECT_GE(sol.mass.back(), 0.0);
}

TEST(LogLaplace, MonotoneInTestFunction) {
    const TimeGrid grid(1.0, 256);
    const std::vector<std::pair<TestFunction, TestFunction>> pairs{
        {TestFunction::bump(-1.0, 1.0, 1.0), TestFunction::bump(-1.0, 1.0, 2.0)},
        {TestFunction::bump(-0.5, 0.5, 1.0), TestFunction::bump(-1.0, 1.0, 1.0)},
        {TestFunction::bump(0.0, 0.5, 4.0), TestFunction::bump(-1.0, 1.0, 8.0)},
    };
    for (const auto& [lo, hi] : pairs) {
        const auto a = solve_log_laplace(2.0, lo, grid);
        const auto b = solve_log_laplace(2.0, hi, grid);
        for (std::size_t k = 0; k <= grid.n_steps; ++k) EXPECT_LE(a.u0[k], b.u0[k] + 1e-14) << k;
    }
}

TEST(LogLaplace, SelfConvergence) {
    const auto phi = TestFunction::bump(-1.0, 1.0, 3.0);
    const auto coarse = solve_log_laplace(2.0, phi, TimeGrid(1.0, 512));
    const auto fine = solve_log_laplace(2.0, phi, TimeGrid(1.0, 2048));
    double diff = 0.0, top = 0.0;
    for (std::size_t k = 0; k <= 512; ++k) {
        diff = std::max(diff, std::abs(coarse.u0[k] - fine.u0[4 * k]));
        top = std::max(top, coarse.u0[k]);
    }
    EXPECT_LT(diff, 0.01 * top);
}

TEST(LogLaplace, DiagonalSweepStaysClose) {
    const auto phi = TestFunction::bump(-1.0, 1.0, 3.0);
    const TimeGrid grid(1.0, 512);
    LogLaplaceOptions opts;
    opts.diagonal_sweep = true;
    const auto a = solve_log_laplace(2.0, phi, grid);
    const auto b = solve_log_laplace(2.0, phi, grid, opts);
    double diff = 0.0;
    for (std::size_t k = 0; k <= grid.n_steps; ++k) diff = std::max(diff, std::abs(a.u0[k] - b.u0[k]));
    EXPECT_LT(diff, 0.01 * phi(0.0));
    EXPECT_GT(diff, 0.0);
}

TEST(LogLaplace, RejectsNonPositiveTheta) {
    EXPECT_THROW(solve_log_laplace(0.0, TestFunction::unit_bump(-1.0, 1.0), TimeGrid(1.0, 8)), ParameterError);
}
