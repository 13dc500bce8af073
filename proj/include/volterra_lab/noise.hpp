#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

#include "volterra_lab/errors.hpp"

namespace volterra_lab {

/// Uniform grid t_k = k * dt on [0, t_end].
struct TimeGrid {
    double t_end = 1.0;
    std::size_t n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double t_end_, std::size_t n_steps_) : t_end(t_end_), n_steps(n_steps_) {
        detail::require(t_end > 0.0 && std::isfinite(t_end), "t_end must be positive and finite");
        detail::require(n_steps > 0, "n_steps must be positive");
    }

    double dt() const noexcept { return t_end / static_cast<double>(n_steps); }
    std::size_t n_nodes() const noexcept { return n_steps + 1; }

    /// Exact at both ends: node(0) = 0, node(n_steps) = t_end.
    double node(std::size_t k) const noexcept {
        return k == n_steps ? t_end : static_cast<double>(k) * dt();
    }

    bool operator==(const TimeGrid&) const = default;
};

/// Identifier of the increment generator. Bump when the stream changes.
inline constexpr std::string_view kGeneratorVersion = "mt19937_64+box-muller/v1";

/// Gaussian increments of one Brownian path. Immutable once built; several
/// solvers sharing one BrownianPath see the same noise.
struct BrownianPath {
    TimeGrid grid;
    std::vector<double> increments;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Standard normals from a 64-bit Mersenne Twister via Box–Muller. The engine
/// output is fixed by the C++ standard; std::normal_distribution is not, so it
/// is avoided here.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace detail

/// Seed of path `path_index` under `master_seed`. For a fixed master seed the
/// map is a bijection of the index (odd-multiplier offset followed by the
/// splitmix64 finalizer), so distinct paths never share a stream.
inline std::uint64_t derive_path_seed(std::uint64_t master_seed, std::uint64_t path_index) noexcept {
    return detail::splitmix64_mix(master_seed + (path_index + 1) * 0x9E3779B97F4A7C15ULL);
}

inline BrownianPath sample_brownian_increments(const TimeGrid& grid, std::uint64_t seed) {
    BrownianPath path{grid, std::vector<double>(grid.n_steps), seed};
    detail::NormalStream normals(seed);
    const double sd = std::sqrt(grid.dt());
    for (double& inc : path.increments) inc = sd * normals.next();
    return path;
}

/// Same Brownian path on a grid `factor` times coarser (increments summed).
inline BrownianPath coarsen(const BrownianPath& fine, std::size_t factor) {
    detail::require(factor > 0 && fine.grid.n_steps % factor == 0,
                    "coarsening factor must divide n_steps");
    BrownianPath coarse{TimeGrid(fine.grid.t_end, fine.grid.n_steps / factor),
                        std::vector<double>(fine.grid.n_steps / factor, 0.0), fine.seed};
    for (std::size_t i = 0; i < fine.increments.size(); ++i)
        coarse.increments[i / factor] += fine.increments[i];
    return coarse;
}

}  // namespace volterra_lab
