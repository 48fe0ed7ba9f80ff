#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "towerprod/survival.hpp"
#include "towerprod/tails.hpp"

namespace towerprod {

struct FitWindow {
    std::int64_t lo = 1;
    std::int64_t hi = 1;
    bool operator==(const FitWindow&) const = default;
};

/// [max(1, ceil(N/10)), N]: the leading tenth of the horizon is treated as
/// pre-asymptotic.
FitWindow default_fit_window(const SurvivalCurve& curve);

/// 0.10, 0.15, ..., 0.90
std::vector<double> default_theta_grid();

/// Linearized least-squares fit of one decay family.
///
/// Exponential:  log tail = log C - tau n
/// Stretched:    log tail = log C - tau n^theta, theta scanned on a grid
/// Polynomial:   log tail = log C - alpha log n
struct RateFit {
    TailFamily family = TailFamily::Exponential;
    double tau = 0.0;
    double theta = 1.0;
    double alpha = 0.0;
    double C = 1.0;
    FitWindow window;
    double r2 = 0.0;
    double residual_max = 0.0;
    std::int64_t points = 0;
    std::int64_t skipped = 0;  ///< window points below the clean floor
    std::vector<std::string> notes;
};

/// Points with tail <= 0 or tail <= 10 * leak are skipped. Fewer than 8
/// clean points throws WindowTooNoisy.
RateFit fit_rate(const SurvivalCurve& curve, TailFamily family, FitWindow window,
                 const std::vector<double>& theta_grid = default_theta_grid());

struct SequenceCheck {
    double sup = 0.0;
    bool bounded = false;            ///< the last quarter does not exceed the rest
    bool last_quarter_nonincreasing = false;
};

/// Finite-window reading of "bounded" for b_lo..b_hi.
SequenceCheck check_sequence(const std::vector<double>& b);

struct TheoremReport {
    TailFamily family = TailFamily::Exponential;
    std::int64_t ell = 2;
    FitWindow window;
    std::optional<RateFit> fit;
    SequenceCheck envelope;      ///< tail e^{tau' n / 2} (exponential)
    SequenceCheck b;             ///< tail n^{alpha - l}      (polynomial)
    SequenceCheck b_prime;       ///< tail n^{alpha - 1}      (polynomial)
    bool theorem_holds = false;  ///< the rate claimed for l components
    bool sharper_holds = false;  ///< polynomial only: bounded, non-increasing b'
    std::vector<std::string> notes;
};

/// Checks the decay claimed for a product of `ell` components whose tails
/// follow `component`. Points of the window with tail <= leak throw
/// WindowTooNoisy.
TheoremReport verify_theorem_bound(const SurvivalCurve& curve, const TailSpec& component,
                                   std::int64_t ell, FitWindow window);

/// K = 2 max(base masses, K0) with every base mass equal to one.
double bound_constant(double K0);

struct EstmValue {
    double value = 0.0;
    double sum = 0.0;
    double low = 0.0;     ///< part of the sum from i < 3
    double second = 0.0;
    std::int64_t terms = 0;
    std::vector<std::string> notes;
};

/// Polynomial-case bound
///   K sum_{1 <= i <= [n/n0]/2} i (1-eps0)^{i-3} Mbar_{[n/i]-n0}
///     + mass (1-eps0)^{[n/n0]/2 - 1}.
/// For i in {1, 2} the larger of the literal term and K Mbar_{[n/2]-n0}
/// is used. With eps0 = 1 the i < 3 terms and the second term are dropped.
EstmValue estm_rhs(std::int64_t n, double K, double eps0, std::int64_t n0,
                   const std::function<double(std::int64_t)>& mbar, double mass = 1.0);

/// Exponential envelope M_n <= C' e^{-tau n} of the component tails.
struct ExponentialEnvelope {
    double C_prime = 1.0;
    double tau = 0.0;
};

/// max over k in A(i) of Mbar_{n - sum k - n0} prod_j Mbar_{k_j - n0}, in
/// log form, for i = 1..max_i and n = 0..max_n. Built once by a max-plus
/// recursion over the partial sums of k.
class MbarMaxTable {
public:
    MbarMaxTable(const std::function<double(std::int64_t)>& mbar, std::int64_t n0,
                 std::int64_t max_i, std::int64_t max_n, double max_cells = 2e9);

    /// log Mbar(i, n); -inf when every product vanishes.
    double log_value(std::int64_t i, std::int64_t n) const;
    std::int64_t max_i() const { return max_i_; }
    std::int64_t max_n() const { return max_n_; }

private:
    std::int64_t n0_;
    std::int64_t max_i_;
    std::int64_t max_n_;
    std::vector<double> log_mbar_;            ///< index m + n0, m >= -n0
    std::vector<std::vector<double>> G_;      ///< G_[i][s], best prefix of i - 1 gaps
};

/// log Mbar(i, n) by listing A(i); EnumerationBound past `max_nodes`.
double mbar_max_enumerated(const std::function<double(std::int64_t)>& mbar, std::int64_t n0,
                           std::int64_t i, std::int64_t n, std::int64_t max_nodes = 10000000);

struct StnexpValue {
    double value = 0.0;
    double second = 0.0;
    std::int64_t L = 0;                 ///< [delta n^theta']
    std::vector<double> log_terms;      ///< log of the i-th summand, i = 1..L
    std::vector<std::string> notes;
};

/// Super-polynomial bound
///   sum_{i <= L} binom(n+i-n0, i-1) K0^i Mbar(i,n) + mass (1-eps0)^{L-1},
/// L = [delta n^theta']. Mbar(i,n) comes from the table, or from the
/// envelope as C^i e^{-tau (n - i n0)} with C = C'/(1 - e^{-tau}).
StnexpValue stnexp_rhs(std::int64_t n, double theta_prime, double delta, double K0, double eps0,
                       std::int64_t n0, const MbarMaxTable& table, double mass = 1.0);
StnexpValue stnexp_rhs(std::int64_t n, double theta_prime, double delta, double K0, double eps0,
                       std::int64_t n0, const ExponentialEnvelope& envelope, double mass = 1.0);

/// Documented choice for the super-polynomial bound.
struct DeltaPolicy {
    double delta = 0.05;
    double theta_prime = 1.0;
};

struct Violation {
    std::int64_t n = 0;
    double tail = 0.0;
    double bound = 0.0;
};

struct DominanceReport {
    bool pass = true;
    std::int64_t checked = 0;
    FitWindow window;
    std::vector<Violation> violations;
};

/// tail(n) <= bound(n) + leak(n) for n in the window; `bound` is indexed
/// like the curve.
DominanceReport dominance_check(const SurvivalCurve& curve, const std::vector<double>& bound,
                                FitWindow window);

nlohmann::json to_json(const RateFit& fit);
nlohmann::json to_json(const TheoremReport& report);
nlohmann::json to_json(const DominanceReport& report);

}  // namespace towerprod
