#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace towerprod {

using BigInt = boost::multiprecision::cpp_int;

enum class TailFamily { Exponential, Stretched, Polynomial, Explicit };

std::string to_string(TailFamily family);
TailFamily tail_family_from_string(const std::string& name);

/// Survival sequence m{R > n} of a return time, n >= 0.
///
/// Exponential:  exp(-tau n)
/// Stretched:    exp(-tau n^theta), theta in (0,1)
/// Polynomial:   min(1, scale n^-alpha) for n >= 1, alpha > 1
/// Explicit:     values[n], and 0 beyond the end of the list
class TailSpec {
public:
    static TailSpec exponential(double tau);
    static TailSpec stretched(double tau, double theta);
    static TailSpec polynomial(double alpha, double scale = 1.0);
    static TailSpec explicit_values(std::vector<double> values);

    TailFamily family() const noexcept { return family_; }
    double tau() const noexcept { return tau_; }
    double theta() const noexcept { return theta_; }
    double alpha() const noexcept { return alpha_; }
    double scale() const noexcept { return scale_; }
    const std::vector<double>& values() const noexcept { return values_; }

    /// Mass discarded by reading an explicit list as zero past its end.
    double explicit_truncation_leak() const;

    bool operator==(const TailSpec&) const = default;

private:
    TailSpec() = default;

    TailFamily family_ = TailFamily::Exponential;
    double tau_ = 0.0;
    double theta_ = 0.0;
    double alpha_ = 0.0;
    double scale_ = 1.0;
    std::vector<double> values_;
};

double tail(const TailSpec& spec, std::int64_t n);

/// P(R = k) = tail(k-1) - tail(k), evaluated without cancellation where the
/// family has a closed form.
double pmf(const TailSpec& spec, std::int64_t k);

/// M_n = max_i tail(spec_i, n). Throws EmptyComponents for an empty list.
double aggregate_M(std::span<const TailSpec> specs, std::int64_t n);

struct MbarResult {
    double value = 0.0;            ///< sum of M_j for n <= j <= horizon
    double remainder_bound = 0.0;  ///< upper bound on sum_{j > horizon} M_j

    double upper() const { return value + remainder_bound; }
};

/// Summed tail of the aggregate M over the given components, with an
/// analytic bound on everything past `horizon`.
MbarResult mbar(std::span<const TailSpec> specs, std::int64_t n, std::int64_t horizon);

/// Summed tail of a raw sequence M[0..]. The remainder is zero only if the
/// sequence has terminated (M[horizon] == 0); otherwise there is no
/// analytic family to bound it and TruncationUnbounded is thrown.
MbarResult mbar(std::span<const double> M, std::int64_t n, std::int64_t horizon);

/// Upper bound on sum_{k >= m} exp(-tau k^theta) by integral comparison.
double stretched_sum_bound(double tau, double theta, std::int64_t m);

struct StretchedLemmaResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    std::int64_t threshold = 0;
    std::int64_t terms = 0;
    double remainder_bound = 0.0;  ///< bound on the part of lhs not summed
};

/// sum_{k>=n} exp(-tau k^theta) <= (2/(tau theta)) exp(-tau n^theta) n^(1-theta)
/// for n >= (2/(tau theta))^(1/theta).
StretchedLemmaResult stretched_tail_lemma(double tau, double theta, std::int64_t n);

/// The same check at `count` consecutive n starting from the threshold. One
/// summation serves every point; the stopping rule is applied against the
/// smallest lhs in the range, so each point meets it.
std::vector<StretchedLemmaResult> stretched_lemma_sweep(double tau, double theta,
                                                        std::int64_t count);

struct GammaTailResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    double threshold = 0.0;
    double quadrature_error = 0.0;
};

/// int_x^inf t^(a-1) e^-t dt < B x^(a-1) e^-x for x > B(a-1)/(B-1).
GammaTailResult gamma_tail_inequality(double a, double B, double x);

/// Binomial coefficient, zero when the top is out of range. binom(m, 0) = 1.
BigInt binomial(std::int64_t top, std::int64_t bottom);

struct CompositionCount {
    BigInt count;
    BigInt binomial_bound;  ///< binom(n + i - n0, i - 1)
    bool enumerated = false;
    bool within_bound = true;
};

/// |{(k_1..k_{i-1}) : k_j >= n0, sum k_j <= n}|, together with the
/// binomial upper bound used for the super-polynomial estimate.
CompositionCount compositions_count(std::int64_t n, std::int64_t i, std::int64_t n0);

}  // namespace towerprod
