#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "towerprod/tower.hpp"

namespace towerprod {

/// Row-compressed stochastic matrix over tower states.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::int64_t size, std::vector<std::int64_t> row_start,
                 std::vector<std::int64_t> cols, std::vector<double> values);

    std::int64_t size() const noexcept { return size_; }
    std::size_t nonzeros() const noexcept { return values_.size(); }
    double at(std::int64_t row, std::int64_t col) const;
    double row_sum(std::int64_t row) const;

    /// v P
    std::vector<double> left(const std::vector<double>& v) const;
    /// P f
    std::vector<double> right(const std::vector<double>& f) const;

    /// The same products on one factor of a product space, x[s1 * S2 + s2].
    /// `other` is the size of the factor left alone.
    std::vector<double> left_factor(const std::vector<double>& x, std::int64_t other,
                                    bool first_factor) const;
    std::vector<double> right_factor(const std::vector<double>& x, std::int64_t other,
                                     bool first_factor) const;

private:
    std::int64_t size_ = 0;
    std::vector<std::int64_t> row_start_;
    std::vector<std::int64_t> cols_;
    std::vector<double> values_;
};

/// Level chain: one step up a column, or from a top level to the base of
/// column j with probability p_j.
SparseMatrix transition_matrix(const TowerModel& model);

/// Observables are functions of the tower state, indexed by state_index.
using Observable = std::vector<double>;

double sup_norm(const Observable& f);
Observable base_indicator(const TowerModel& model);
/// f(s1) g(s2) on the product state space, index s1 * size(g) + s2.
Observable tensor(const Observable& f, const Observable& g);

struct CorrelationSequence {
    std::vector<double> covariance;  ///< int phi (psi o f^n) - int phi int psi
    std::vector<double> cor;         ///< |covariance| / (|phi| |psi|)
};

/// Under the invariant measure, by repeated vector-matrix products. Zero
/// sup norms throw ZeroObservable.
CorrelationSequence correlation_sequence(const TowerModel& model, const Observable& phi,
                                         const Observable& psi, std::int64_t N);

/// gamma_n = max over states s of TV(delta_s P^n, nu), TV = half the l1
/// distance, for n = 0..N.
std::vector<double> component_rate(const TowerModel& model, std::int64_t N);

/// For sup-norm observables |Cov_n| <= 2 gamma_n |phi| |psi|.
constexpr double kCorrelationConstant = 2.0;

struct ProductCorrelationRow {
    std::int64_t n = 0;
    double cor = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double bound = 0.0;          ///< 2 C max(gamma1, gamma2)
    bool holds = false;
    double term_fixed = 0.0;     ///< covariance at fixed first coordinate, normalized
    double term_marginal = 0.0;  ///< covariance of the marginal, normalized
    double term_fixed_bound = 0.0;
    double term_marginal_bound = 0.0;
    double reconstruction_error = 0.0;
};

struct ProductCorrelationReport {
    double C = kCorrelationConstant;
    std::vector<ProductCorrelationRow> rows;
    bool holds = true;
    bool terms_hold = true;
    double max_reconstruction_error = 0.0;
    std::vector<std::int64_t> failing;
};

/// Checks Cor(n) <= 2 C gamma_n on the product chain for n = 0..N. phi is
/// centered internally; the normalization uses the centered phi and psi
/// as given. The two-term split is computed on its own route and compared
/// with the full covariance.
ProductCorrelationReport product_correlation_check(const TowerModel& first,
                                                   const TowerModel& second,
                                                   const Observable& phi, const Observable& psi,
                                                   std::int64_t N);

/// `n,cor_product,gamma1,gamma2,bound,holds`
std::string to_csv(const ProductCorrelationReport& report);

}  // namespace towerprod
