#pragma once

// Reference computations used only by the tests. Each one follows a route
// that differs from the library code it checks.

#include <cmath>
#include <cstdint>
#include <vector>

#include "towerprod/tower.hpp"

namespace oracle {

inline towerprod::TowerModel geometric(std::int64_t R_max = 64)
{
    return towerprod::build_tower(towerprod::TailSpec::exponential(std::log(2.0)), R_max, 1e-3);
}

inline towerprod::TowerModel three_five()
{
    return towerprod::TowerModel::from_columns({{3, 0.5}, {5, 0.5}});
}

inline towerprod::TowerModel unit()
{
    return towerprod::TowerModel::from_columns({{1, 1.0}});
}

/// P(level 0 at time n) from a base start, by pushing the full (column,
/// level) distribution forward one step at a time.
inline std::vector<double> base_occupation(const towerprod::TowerModel& m, std::int64_t N)
{
    const auto& cols = m.columns();
    std::vector<std::vector<long double>> d(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
        d[i].assign(static_cast<std::size_t>(cols[i].R), 0.0L);
        d[i][0] = cols[i].p;
    }
    std::vector<double> out{1.0};
    for (std::int64_t n = 1; n <= N; ++n) {
        long double top = 0.0L;
        for (auto& col : d) {
            top += col.back();
            for (std::size_t l = col.size() - 1; l > 0; --l) col[l] = col[l - 1];
            col[0] = 0.0L;
        }
        long double base = 0.0L;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            d[i][0] = top * cols[i].p;
            base += d[i][0];
        }
        out.push_back(static_cast<double>(base));
    }
    return out;
}

/// P(T > n) for two geometric(1/2) components with n0 = 1: each probe
/// stops with probability 1/2 after a geometric(1/2) gap, so T > n has
/// probability (3/4)^n.
inline double double_geometric_tail(std::int64_t n)
{
    return std::pow(0.75, static_cast<double>(n));
}

}  // namespace oracle
