#include "towerprod/survival.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "towerprod/error.hpp"

namespace towerprod {

std::string to_string(CurveSource source)
{
    switch (source) {
    case CurveSource::Dp: return "dp";
    case CurveSource::Mc: return "mc";
    case CurveSource::ClosedForm: return "closed_form";
    case CurveSource::BruteForce: return "brute_force";
    }
    return "unknown";
}

double SurvivalCurve::leak_at(std::int64_t n) const
{
    if (leak.empty() || n < 0) return 0.0;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(n), leak.size() - 1);
    return leak[i];
}

Interval wilson_interval(std::int64_t k, std::int64_t s, double z)
{
    if (s <= 0) return {0.0, 1.0};
    const double n = static_cast<double>(s);
    const double p = static_cast<double>(k) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // the exact endpoints at k = 0 and k = s are 0 and 1
    return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == s ? 1.0 : std::min(1.0, centre + half)};
}

std::string format_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string to_csv(const SurvivalCurve& curve)
{
    std::string out = "n,tail,ci_low,ci_high,leak_bound\n";
    for (std::size_t n = 0; n < curve.tail.size(); ++n) {
        out += std::to_string(n);
        out += ',';
        out += format_double(curve.tail[n]);
        out += ',';
        if (curve.has_ci()) out += format_double(curve.ci_low[n]);
        out += ',';
        if (curve.has_ci()) out += format_double(curve.ci_high[n]);
        out += ',';
        if (!curve.leak.empty()) out += format_double(curve.leak_at(static_cast<std::int64_t>(n)));
        out += '\n';
    }
    return out;
}

SurvivalCurve curve_from_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("n,tail", 0) != 0)
        throw Error(ErrorKind::ConfigError, "survival CSV must start with the n,tail header");
    SurvivalCurve curve;
    bool any_ci = false;
    bool any_leak = false;
    std::vector<std::string> fields;
    std::int64_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        fields.clear();
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        if (fields.size() < 2 || std::stoll(fields[0]) != row)
            throw Error(ErrorKind::ConfigError,
                        "survival CSV rows must be consecutive from n = 0",
                        static_cast<double>(row));
        const auto get = [&](std::size_t i) {
            return i < fields.size() && !fields[i].empty() ? std::stod(fields[i]) : NAN;
        };
        curve.tail.push_back(get(1));
        curve.ci_low.push_back(get(2));
        curve.ci_high.push_back(get(3));
        curve.leak.push_back(get(4));
        any_ci = any_ci || !std::isnan(curve.ci_low.back());
        any_leak = any_leak || !std::isnan(curve.leak.back());
        ++row;
    }
    if (curve.tail.empty()) throw Error(ErrorKind::ConfigError, "survival CSV has no rows");
    if (any_ci) {
        curve.source = CurveSource::Mc;
    } else {
        curve.ci_low.clear();
        curve.ci_high.clear();
    }
    if (!any_leak) curve.leak.clear();
    return curve;
}

}  // namespace towerprod
