#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "volterra_lab/monte_carlo.hpp"

using namespace volterra_lab;

TEST(MomentStatsTest, MatchesTwoPassFormulas) {
    std::vector<double> xs;
    for (int i = 0; i < 1000; ++i) xs.push_back(std::sin(0.37 * i) * 10.0 + 1e6);
    mc::MomentStats s;
    for (double x : xs) s.add(x);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size() - 1.0;
    EXPECT_NEAR(s.mean, mean, 1e-8);
    EXPECT_NEAR(s.variance(), var, 1e-8 * var);
    EXPECT_NEAR(s.stderr_mean(), std::sqrt(var / xs.size()), 1e-10);
}

TEST(MomentStatsTest, MergeEqualsSequential) {
    mc::MomentStats all, a, b;
    for (int i = 0; i < 300; ++i) {
        const double x = std::cos(1.3 * i) + 0.01 * i;
        all.add(x);
        (i < 120 ? a : b).add(x);
    }
    a.merge(b);
    EXPECT_DOUBLE_EQ(a.count, all.count);
    EXPECT_NEAR(a.mean, all.mean, 1e-14);
    EXPECT_NEAR(a.m2, all.m2, 1e-10);
    mc::MomentStats empty;
    empty.merge(all);
    EXPECT_EQ(empty.mean, all.mean);
}

namespace {

struct Sum {
    mc::MomentStats s;
    void merge(const Sum& o) { s.merge(o.s); }
};

Sum reduce(std::size_t n, std::size_t threads) {
    return mc::block_reduce<Sum>(n, threads, [] { return Sum{}; },
                                 [](Sum& a, std::size_t i) { a.s.add(std::sin(static_cast<double>(i)) * 1e3); });
}

}  // namespace

TEST(BlockReduce, BitIdenticalAcrossThreadCounts) {
    const Sum one = reduce(10007, 1);
    for (std::size_t t : {2, 3, 4, 8}) {
        const Sum r = reduce(10007, t);
        EXPECT_EQ(r.s.mean, one.s.mean) << t;
        EXPECT_EQ(r.s.m2, one.s.m2) << t;
    }
    EXPECT_EQ(one.s.count, 10007.0);
}

TEST(BlockReduce, PropagatesExceptions) {
    EXPECT_THROW((mc::block_reduce<Sum>(
                     1000, 2, [] { return Sum{}; },
                     [](Sum&, std::size_t i) {
                         if (i == 777) throw std::runtime_error("boom");
                     })),
                 std::runtime_error);
}

TEST(BlockReduce, EmptyRange) {
    EXPECT_EQ(reduce(0, 4).s.count, 0.0);
}
