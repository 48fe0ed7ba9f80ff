#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "towerprod/random.hpp"
#include "towerprod/survival.hpp"
#include "towerprod/tower.hpp"

namespace towerprod {

using Rational = boost::multiprecision::cpp_rational;

/// Exact value of a double as a fraction.
Rational to_rational(double x);

/// A pair of towers with one mixing window valid for both.
struct ProductModel {
    std::vector<TowerModel> components;
    std::int64_t n0 = 1;
    double c = 0.0;
    std::vector<MixingWindow> windows;  ///< per component, at the shared c
};

/// c is the smaller of the two targets fraction / E[R]; n0 is the larger
/// of the two windows at that c. A zero mixing horizon means the default.
ProductModel make_product(const TowerModel& first, const TowerModel& second,
                          double fraction = 0.5, std::int64_t mixing_horizon = 0);

/// Fixed n0 and c, for models whose window is known by other means.
ProductModel make_product(const TowerModel& first, const TowerModel& second, std::int64_t n0,
                          double c);

/// Waits n0 steps, then runs the active component to its base. Returns the
/// new probe time; `active` is left on the base.
std::int64_t tau_advance(const TowerModel& model, std::int64_t t, TowerState& active,
                         std::int64_t n0, Rng& rng);

struct TauTrace {
    std::vector<std::int64_t> taus;  ///< tau_1, tau_2, ...
    std::vector<int> active;         ///< component driven to reach each tau
    std::int64_t stop_index = 0;     ///< i with T = tau_i
    std::int64_t T = 0;
    bool increments_ok = true;       ///< every gap is at least n0
    bool active_in_base = true;      ///< the driven component sits on its base at every tau
    bool both_in_base = false;       ///< both components on their bases at T
};

/// One draw of the simultaneous return time from a base start. Component 0
/// drives odd probes and component 1 even ones. `cap` bounds physical time.
TauTrace simultaneous_return(const ProductModel& model, Rng& rng, std::int64_t cap = 1000000);

struct DpResult {
    SurvivalCurve curve;
    std::vector<double> pmf;  ///< P(T = n), n = 0..N
    double drift = 0.0;       ///< |sum pmf + tail(N) - 1|
    std::size_t bytes = 0;
};

/// Exact law of T up to the horizon by forward recursion over probe
/// states (probe time, next driven component, its residual).
DpResult product_tail_dp(const ProductModel& model, std::int64_t N,
                         double memory_budget_bytes = 4.0e9);

struct McOptions {
    std::int64_t samples = 100000;
    std::int64_t horizon = 64;
    std::uint64_t seed = 0;
    std::int64_t cap = 1000000;
    double z = 3.0;
    unsigned threads = 0;    ///< 0 reads TOWERPROD_THREADS, else hardware
    std::size_t keep_traces = 0;  ///< number of leading traces returned
};

struct McResult {
    SurvivalCurve curve;
    std::int64_t trace_violations = 0;
    std::int64_t min_increment = 0;
    std::vector<TauTrace> traces;
};

McResult product_tail_mc(const ProductModel& model, const McOptions& options);

/// Worker count from TOWERPROD_THREADS, else the hardware count.
unsigned worker_threads(unsigned requested = 0);

/// P(T = n), n = 0..N, by enumerating every joint column history that
/// can stop by N. Column draws are revealed only when the stopping rule
/// needs them.
template <class T>
std::vector<T> brute_force_pmf(const ProductModel& model, std::int64_t N,
                               std::int64_t max_nodes = 50000000);

SurvivalCurve brute_force_tail(const ProductModel& model, std::int64_t N,
                               std::int64_t max_nodes = 50000000);

struct FoldPolicy {
    double fraction = 0.5;
    std::int64_t horizon = 512;
    double leak_budget = 1e-6;
    /// Tail exponent of the components when they are polynomial.
    std::optional<double> polynomial_alpha;
};

struct FoldResult {
    TowerModel model;
    std::vector<ProductModel> stages;
    double leak = 0.0;
};

/// FoldNotIntegrable unless alpha > ell, so that the product tail
/// n^{ell - alpha} decays.
void require_integrable(double alpha, std::size_t ell);

/// Replaces the first two towers by the tower of their simultaneous return
/// time, left to right, until one remains.
FoldResult fold(const std::vector<TowerModel>& models, const FoldPolicy& policy);

/// Return-time sampler of a renewal process started on its base.
using ReturnSampler = std::function<std::int64_t(Rng&)>;

/// T for two independent renewal processes under the alternating rule.
std::int64_t alternating_return(const ReturnSampler& first, const ReturnSampler& second,
                                std::int64_t n0, Rng& rng, std::int64_t cap = 1000000);

/// Survival of the nested simultaneous return across all components, each
/// stage using the n0 of the matching fold stage.
SurvivalCurve nested_return_mc(const FoldResult& folded, const std::vector<TowerModel>& models,
                               std::int64_t samples, std::int64_t N, std::uint64_t seed);

struct KeyPropWitness {
    int component = 0;          ///< next driven component
    std::int64_t previous = 0;  ///< previous gap, 0 for the start state
    std::int64_t n = 0;
    double value = 0.0;
};

struct KeyPropReport {
    double eps0 = 1.0;
    double K0 = 0.0;
    double c = 0.0;
    bool eps_floor_ok = false;
    bool K0_finite = false;
    bool domination_ok = false;
    std::int64_t states = 0;
    std::int64_t checks = 0;
    KeyPropWitness eps_witness;
    KeyPropWitness K0_witness;
};

/// Empirical constants of the conditional stop and gap estimates. States
/// are the partition cells seen by the recursion: the start, and (p, k)
/// for a driven component p whose residual was produced by k free steps.
KeyPropReport key_prop_check(const ProductModel& model, std::int64_t i_max,
                             std::int64_t horizon);

/// Sum over j >= m of max_i P(R_i > j) on the truncated towers, with
/// P(R > j) = 1 for j < 0.
std::function<double(std::int64_t)> model_mbar(const std::vector<TowerModel>& models);

/// Union bound on the probability that the truncation changed T <= n:
/// sum over components of leak_i * expected renewals up to n - onset_i,
/// since a cut column cannot be told apart before it reaches its onset.
std::vector<double> truncation_leak_curve(const ProductModel& model, std::int64_t N);

}  // namespace towerprod
