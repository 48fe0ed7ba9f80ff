#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace towerprod {

enum class CurveSource { Dp, Mc, ClosedForm, BruteForce };

std::string to_string(CurveSource source);

/// tail[n] = P(T > n) for n = 0..horizon. Monte Carlo curves carry
/// confidence intervals; exact curves carry a per-n truncation leak bound.
struct SurvivalCurve {
    std::vector<double> tail;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    std::vector<double> leak;
    CurveSource source = CurveSource::Dp;

    std::int64_t horizon() const { return static_cast<std::int64_t>(tail.size()) - 1; }
    double leak_at(std::int64_t n) const;
    bool has_ci() const { return !ci_low.empty(); }
};

struct Interval {
    double low = 0.0;
    double high = 1.0;
};

/// Wilson score interval for k successes out of s trials.
Interval wilson_interval(std::int64_t k, std::int64_t s, double z);

/// Shortest round-tripping decimal form (%.17g).
std::string format_double(double x);

/// `n,tail,ci_low,ci_high,leak_bound`, absent columns left empty.
std::string to_csv(const SurvivalCurve& curve);

/// Reads the format written by to_csv.
SurvivalCurve curve_from_csv(const std::string& text);

}  // namespace towerprod
