#include "towerprod/tails.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "towerprod/error.hpp"

namespace towerprod {

std::string to_string(TailFamily family)
{
    switch (family) {
    case TailFamily::Exponential: return "exponential";
    case TailFamily::Stretched: return "stretched";
    case TailFamily::Polynomial: return "polynomial";
    case TailFamily::Explicit: return "explicit";
    }
    return "unknown";
}

TailFamily tail_family_from_string(const std::string& name)
{
    if (name == "exponential") return TailFamily::Exponential;
    if (name == "stretched") return TailFamily::Stretched;
    if (name == "polynomial") return TailFamily::Polynomial;
    if (name == "explicit") return TailFamily::Explicit;
    throw Error(ErrorKind::ConfigError, "unknown tail family '" + name + "'");
}

TailSpec TailSpec::exponential(double tau)
{
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw Error(ErrorKind::DomainError, "exponential tail needs tau > 0", tau);
    TailSpec s;
    s.family_ = TailFamily::Exponential;
    s.tau_ = tau;
    return s;
}

TailSpec TailSpec::stretched(double tau, double theta)
{
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw Error(ErrorKind::DomainError, "stretched tail needs tau > 0", tau);
    if (!(theta > 0.0 && theta < 1.0))
        throw Error(ErrorKind::DomainError, "stretched tail needs theta in (0,1)", theta);
    TailSpec s;
    s.family_ = TailFamily::Stretched;
    s.tau_ = tau;
    s.theta_ = theta;
    return s;
}

TailSpec TailSpec::polynomial(double alpha, double scale)
{
    if (!(alpha > 1.0) || !std::isfinite(alpha))
        throw Error(ErrorKind::DomainError, "polynomial tail needs alpha > 1", alpha);
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw Error(ErrorKind::DomainError, "polynomial tail needs scale > 0", scale);
    TailSpec s;
    s.family_ = TailFamily::Polynomial;
    s.alpha_ = alpha;
    s.scale_ = scale;
    return s;
}

TailSpec TailSpec::explicit_values(std::vector<double> values)
{
    if (values.empty() || values.front() != 1.0)
        throw Error(ErrorKind::DomainError, "explicit tail must start with survival(0) = 1");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0 && values[i] <= 1.0))
            throw Error(ErrorKind::DomainError, "explicit tail value outside [0,1]",
                        static_cast<double>(i));
        if (i > 0 && values[i] > values[i - 1])
            throw Error(ErrorKind::DomainError, "explicit tail must be non-increasing",
                        static_cast<double>(i));
    }
    TailSpec s;
    s.family_ = TailFamily::Explicit;
    s.values_ = std::move(values);
    return s;
}

double TailSpec::explicit_truncation_leak() const
{
    if (family_ != TailFamily::Explicit) return 0.0;
    return values_.back();
}

double tail(const TailSpec& spec, std::int64_t n)
{
    if (n <= 0) return 1.0;
    const double x = static_cast<double>(n);
    switch (spec.family()) {
    case TailFamily::Exponential:
        return std::exp(-spec.tau() * x);
    case TailFamily::Stretched:
        return std::exp(-spec.tau() * std::pow(x, spec.theta()));
    case TailFamily::Polynomial:
        return std::min(1.0, spec.scale() * std::pow(x, -spec.alpha()));
    case TailFamily::Explicit: {
        const auto& v = spec.values();
        return static_cast<std::size_t>(n) < v.size() ? v[static_cast<std::size_t>(n)] : 0.0;
    }
    }
    return 0.0;
}

double pmf(const TailSpec& spec, std::int64_t k)
{
    if (k < 1) return 0.0;
    const double prev = tail(spec, k - 1);
    const double cur = tail(spec, k);
    const double x = static_cast<double>(k);
    switch (spec.family()) {
    case TailFamily::Exponential:
        return std::exp(-spec.tau() * (x - 1.0)) * -std::expm1(-spec.tau());
    case TailFamily::Stretched: {
        const double gap = std::pow(x, spec.theta()) - std::pow(x - 1.0, spec.theta());
        return prev * -std::expm1(-spec.tau() * gap);
    }
    case TailFamily::Polynomial:
        // both neighbours past the clamp: c (k-1)^-a (1 - ((k-1)/k)^a)
        if (k >= 2 && prev < 1.0)
            return prev * -std::expm1(-spec.alpha() * std::log1p(1.0 / (x - 1.0)));
        return std::max(0.0, prev - cur);
    case TailFamily::Explicit:
        return std::max(0.0, prev - cur);
    }
    return 0.0;
}

double aggregate_M(std::span<const TailSpec> specs, std::int64_t n)
{
    if (specs.empty()) throw Error(ErrorKind::EmptyComponents, "aggregate_M needs a component");
    double m = 0.0;
    for (const auto& s : specs) m = std::max(m, tail(s, n));
    return m;
}

double stretched_sum_bound(double tau, double theta, std::int64_t m)
{
    if (m < 1) m = 1;
    const double x = static_cast<double>(m);
    const double a = 1.0 / theta;
    const double z = tau * std::pow(x, theta);
    // first term plus int_m^inf exp(-tau x^theta) dx
    const double integral = boost::math::tgamma(a, z) / (theta * std::pow(tau, a));
    return std::exp(-z) + integral;
}

namespace {

double family_remainder(const TailSpec& spec, std::int64_t m)
{
    if (m < 1) m = 1;
    const double x = static_cast<double>(m);
    switch (spec.family()) {
    case TailFamily::Exponential:
        return std::exp(-spec.tau() * x) / -std::expm1(-spec.tau());
    case TailFamily::Stretched:
        return stretched_sum_bound(spec.tau(), spec.theta(), m);
    case TailFamily::Polynomial: {
        const double c = spec.scale();
        const double a = spec.alpha();
        return c * std::pow(x, -a) + c * std::pow(x, 1.0 - a) / (a - 1.0);
    }
    case TailFamily::Explicit: {
        double r = 0.0;
        const auto& v = spec.values();
        for (std::size_t j = static_cast<std::size_t>(m); j < v.size(); ++j) r += v[j];
        return r;
    }
    }
    return 0.0;
}

}  // namespace

MbarResult mbar(std::span<const TailSpec> specs, std::int64_t n, std::int64_t horizon)
{
    if (specs.empty()) throw Error(ErrorKind::EmptyComponents, "mbar needs a component");
    if (n > horizon) throw Error(ErrorKind::DomainError, "mbar needs n <= horizon");
    long double sum = 0.0L;
    // summed from the far end so small terms are not swamped
    for (std::int64_t j = horizon; j >= n; --j) sum += aggregate_M(specs, j);
    MbarResult r;
    r.value = static_cast<double>(sum);
    if (specs.size() == 1) {
        r.remainder_bound = family_remainder(specs.front(), horizon + 1);
    } else {
        for (const auto& s : specs) r.remainder_bound += family_remainder(s, horizon + 1);
    }
    return r;
}

MbarResult mbar(std::span<const double> M, std::int64_t n, std::int64_t horizon)
{
    if (n > horizon) throw Error(ErrorKind::DomainError, "mbar needs n <= horizon");
    if (horizon < 0 || static_cast<std::size_t>(horizon) >= M.size())
        throw Error(ErrorKind::TruncationUnbounded, "horizon past the end of the sequence",
                    static_cast<double>(horizon));
    if (M[static_cast<std::size_t>(horizon)] > 0.0)
        throw Error(ErrorKind::TruncationUnbounded,
                    "sequence has not terminated at the horizon and has no analytic family",
                    static_cast<double>(horizon));
    long double sum = 0.0L;
    for (std::int64_t j = horizon; j >= std::max<std::int64_t>(n, 0); --j)
        sum += M[static_cast<std::size_t>(j)];
    // negative indices: M_j = 1
    if (n < 0) sum += static_cast<long double>(-n);
    return {static_cast<double>(sum), 0.0};
}

StretchedLemmaResult stretched_tail_lemma(double tau, double theta, std::int64_t n)
{
    if (!(tau > 0.0))
        throw Error(ErrorKind::DomainError, "stretched lemma needs tau > 0", tau);
    if (!(theta > 0.0 && theta < 1.0))
        throw Error(ErrorKind::DomainError, "stretched lemma needs theta in (0,1)", theta);
    StretchedLemmaResult r;
    r.threshold =
        static_cast<std::int64_t>(std::ceil(std::pow(2.0 / (tau * theta), 1.0 / theta)));
    if (n < r.threshold)
        throw Error(ErrorKind::ThresholdNotMet,
                    "n = " + std::to_string(n) + " is below the validity threshold " +
                        std::to_string(r.threshold),
                    static_cast<double>(r.threshold));

    long double sum = 0.0L;
    std::int64_t k = n;
    for (;; ++k) {
        const long double term =
            std::exp(-static_cast<long double>(tau) *
                     std::pow(static_cast<long double>(k), static_cast<long double>(theta)));
        sum += term;
        if (term / sum < 1e-18L) break;
    }
    r.terms = k - n + 1;
    r.lhs = static_cast<double>(sum);
    r.remainder_bound = stretched_sum_bound(tau, theta, k + 1);
    const double x = static_cast<double>(n);
    r.rhs = 2.0 / (tau * theta) * std::exp(-tau * std::pow(x, theta)) * std::pow(x, 1.0 - theta);
    r.holds = r.lhs <= r.rhs;
    return r;
}

std::vector<StretchedLemmaResult> stretched_lemma_sweep(double tau, double theta,
                                                        std::int64_t count)
{
    // validates and yields the threshold
    const auto first_point = stretched_tail_lemma(tau, theta,
        static_cast<std::int64_t>(std::ceil(std::pow(2.0 / (tau * theta), 1.0 / theta))));
    const std::int64_t lo = first_point.threshold;
    const std::int64_t hi = lo + count - 1;
    const auto term = [tau, theta](std::int64_t k) {
        return std::exp(-static_cast<long double>(tau) *
                        std::pow(static_cast<long double>(k), static_cast<long double>(theta)));
    };

    // locate the cut-off for the smallest lhs (at n = hi)
    long double running = 0.0L;
    std::int64_t last = hi;
    for (;; ++last) {
        const long double t = term(last);
        running += t;
        if (t / running < 1e-18L) break;
    }
    // suffix sums from the far end back to lo
    std::vector<long double> suffix(static_cast<std::size_t>(hi - lo + 1));
    long double acc = 0.0L;
    for (std::int64_t k = last; k >= lo; --k) {
        acc += term(k);
        if (k <= hi) suffix[static_cast<std::size_t>(k - lo)] = acc;
    }

    const double remainder = stretched_sum_bound(tau, theta, last + 1);
    std::vector<StretchedLemmaResult> out;
    out.reserve(suffix.size());
    for (std::int64_t n = lo; n <= hi; ++n) {
        StretchedLemmaResult r;
        r.threshold = lo;
        r.terms = last - n + 1;
        r.lhs = static_cast<double>(suffix[static_cast<std::size_t>(n - lo)]);
        r.remainder_bound = remainder;
        const double x = static_cast<double>(n);
        r.rhs = 2.0 / (tau * theta) * std::exp(-tau * std::pow(x, theta)) *
                std::pow(x, 1.0 - theta);
        r.holds = r.lhs <= r.rhs;
        out.push_back(r);
    }
    return out;
}

GammaTailResult gamma_tail_inequality(double a, double B, double x)
{
    if (!(a > 0.0)) throw Error(ErrorKind::DomainError, "gamma tail needs a > 0", a);
    if (!(B > 1.0)) throw Error(ErrorKind::DomainError, "gamma tail needs B > 1", B);
    GammaTailResult r;
    r.threshold = B * (a - 1.0) / (B - 1.0);
    if (!(x > r.threshold) || !(x > 0.0))
        throw Error(ErrorKind::ThresholdNotMet,
                    "x must exceed B(a-1)/(B-1) = " + std::to_string(r.threshold),
                    r.threshold);
    // int_x^inf t^(a-1) e^-t dt = e^-x int_0^inf (x+s)^(a-1) e^-s ds
    boost::math::quadrature::exp_sinh<double> integrator;
    double err = 0.0;
    const auto f = [a, x](double s) { return std::pow(x + s, a - 1.0) * std::exp(-s); };
    const double inner = integrator.integrate(f, 1e-13, &err);
    r.quadrature_error = err;
    r.lhs = std::exp(-x) * inner;
    r.rhs = B * std::pow(x, a - 1.0) * std::exp(-x);
    r.holds = inner < B * std::pow(x, a - 1.0);
    return r;
}

BigInt binomial(std::int64_t top, std::int64_t bottom)
{
    if (bottom == 0) return 1;
    if (bottom < 0 || top < 0 || bottom > top) return 0;
    bottom = std::min(bottom, top - bottom);
    BigInt c = 1;
    for (std::int64_t j = 1; j <= bottom; ++j) {
        c *= (top - bottom + j);
        c /= j;
    }
    return c;
}

namespace {

std::int64_t enumerate_compositions(std::int64_t parts, std::int64_t budget, std::int64_t n0)
{
    if (parts == 0) return 1;
    std::int64_t total = 0;
    for (std::int64_t k = n0; k <= budget; ++k)
        total += enumerate_compositions(parts - 1, budget - k, n0);
    return total;
}

}  // namespace

CompositionCount compositions_count(std::int64_t n, std::int64_t i, std::int64_t n0)
{
    if (i < 1 || n < 0 || n0 < 1)
        throw Error(ErrorKind::DomainError, "compositions_count needs i >= 1, n >= 0, n0 >= 1");
    CompositionCount r;
    const std::int64_t parts = i - 1;
    if (parts <= 6 && n <= 40) {
        r.count = enumerate_compositions(parts, n, n0);
        r.enumerated = true;
    } else {
        const std::int64_t slack = n - parts * n0;
        r.count = slack < 0 ? BigInt(0) : binomial(slack + parts, parts);
    }
    r.binomial_bound = binomial(n + i - n0, i - 1);
    r.within_bound = r.count <= r.binomial_bound;
    return r;
}

}  // namespace towerprod
