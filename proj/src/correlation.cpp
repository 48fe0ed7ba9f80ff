#include "towerprod/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "towerprod/error.hpp"
#include "towerprod/survival.hpp"

namespace towerprod {

SparseMatrix::SparseMatrix(std::int64_t size, std::vector<std::int64_t> row_start,
                           std::vector<std::int64_t> cols, std::vector<double> values)
    : size_(size), row_start_(std::move(row_start)), cols_(std::move(cols)), values_(std::move(values))
{
}

double SparseMatrix::at(std::int64_t row, std::int64_t col) const
{
    double v = 0.0;
    for (auto k = row_start_[static_cast<std::size_t>(row)];
         k < row_start_[static_cast<std::size_t>(row + 1)]; ++k)
        if (cols_[static_cast<std::size_t>(k)] == col) v += values_[static_cast<std::size_t>(k)];
    return v;
}

double SparseMatrix::row_sum(std::int64_t row) const
{
    long double s = 0.0L;
    for (auto k = row_start_[static_cast<std::size_t>(row)];
         k < row_start_[static_cast<std::size_t>(row + 1)]; ++k)
        s += values_[static_cast<std::size_t>(k)];
    return static_cast<double>(s);
}

std::vector<double> SparseMatrix::left(const std::vector<double>& v) const
{
    return left_factor(v, 1, true);
}

std::vector<double> SparseMatrix::right(const std::vector<double>& f) const
{
    return right_factor(f, 1, true);
}

std::vector<double> SparseMatrix::left_factor(const std::vector<double>& x, std::int64_t other,
                                              bool first_factor) const
{
    const auto S = static_cast<std::size_t>(size_);
    const auto O = static_cast<std::size_t>(other);
    if (x.size() != S * O) throw Error(ErrorKind::DomainError, "vector size does not match the chain");
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t s = 0; s < S; ++s)
        for (auto k = row_start_[s]; k < row_start_[s + 1]; ++k) {
            const auto t = static_cast<std::size_t>(cols_[static_cast<std::size_t>(k)]);
            const double v = values_[static_cast<std::size_t>(k)];
            if (first_factor) {
                const double* src = &x[s * O];
                double* dst = &y[t * O];
                for (std::size_t o = 0; o < O; ++o) dst[o] += src[o] * v;
            } else {
                for (std::size_t o = 0; o < O; ++o) y[o * S + t] += x[o * S + s] * v;
            }
        }
    return y;
}

std::vector<double> SparseMatrix::right_factor(const std::vector<double>& x, std::int64_t other,
                                               bool first_factor) const
{
    const auto S = static_cast<std::size_t>(size_);
    const auto O = static_cast<std::size_t>(other);
    if (x.size() != S * O) throw Error(ErrorKind::DomainError, "vector size does not match the chain");
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t s = 0; s < S; ++s)
        for (auto k = row_start_[s]; k < row_start_[s + 1]; ++k) {
            const auto t = static_cast<std::size_t>(cols_[static_cast<std::size_t>(k)]);
            const double v = values_[static_cast<std::size_t>(k)];
            if (first_factor) {
                const double* src = &x[t * O];
                double* dst = &y[s * O];
                for (std::size_t o = 0; o < O; ++o) dst[o] += v * src[o];
            } else {
                for (std::size_t o = 0; o < O; ++o) y[o * S + s] += v * x[o * S + t];
            }
        }
    return y;
}

SparseMatrix transition_matrix(const TowerModel& model)
{
    const auto& cols = model.columns();
    const std::int64_t S = model.state_count();
    std::vector<std::int64_t> start{0};
    std::vector<std::int64_t> target;
    std::vector<double> value;
    for (std::size_t i = 0; i < cols.size(); ++i)
        for (std::int64_t l = 0; l < cols[i].R; ++l) {
            if (l + 1 < cols[i].R) {
                target.push_back(model.state_index(i, l + 1));
                value.push_back(1.0);
            } else {
                for (std::size_t j = 0; j < cols.size(); ++j) {
                    target.push_back(model.state_index(j, 0));
                    value.push_back(cols[j].p);
                }
            }
            start.push_back(static_cast<std::int64_t>(target.size()));
        }
    return SparseMatrix(S, std::move(start), std::move(target), std::move(value));
}

double sup_norm(const Observable& f)
{
    double m = 0.0;
    for (double v : f) m = std::max(m, std::fabs(v));
    return m;
}

Observable base_indicator(const TowerModel& model)
{
    Observable f(static_cast<std::size_t>(model.state_count()), 0.0);
    for (std::size_t i = 0; i < model.size(); ++i) f[static_cast<std::size_t>(model.state_index(i, 0))] = 1.0;
    return f;
}

Observable tensor(const Observable& f, const Observable& g)
{
    Observable h;
    h.reserve(f.size() * g.size());
    for (double a : f)
        for (double b : g) h.push_back(a * b);
    return h;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    long double s = 0.0L;
    for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<long double>(a[k]) * b[k];
    return static_cast<double>(s);
}

void require_size(const Observable& f, std::int64_t states, const char* name)
{
    if (static_cast<std::int64_t>(f.size()) != states)
        throw Error(ErrorKind::DomainError, std::string(name) + " has the wrong number of states");
}

}  // namespace

CorrelationSequence correlation_sequence(const TowerModel& model, const Observable& phi,
                                         const Observable& psi, std::int64_t N)
{
    require_size(phi, model.state_count(), "phi");
    require_size(psi, model.state_count(), "psi");
    const double norm = sup_norm(phi) * sup_norm(psi);
    if (!(norm > 0.0)) throw Error(ErrorKind::ZeroObservable, "observables must be non-zero");
    const auto P = transition_matrix(model);
    const auto nu = invariant_measure(model);
    const double mean = dot(nu, phi) * dot(nu, psi);
    std::vector<double> weighted(nu.size());
    for (std::size_t s = 0; s < nu.size(); ++s) weighted[s] = nu[s] * phi[s];
    CorrelationSequence out;
    for (std::int64_t n = 0; n <= N; ++n) {
        const double c = dot(weighted, psi) - mean;
        out.covariance.push_back(c);
        out.cor.push_back(std::fabs(c) / norm);
        if (n < N) weighted = P.left(weighted);
    }
    return out;
}

std::vector<double> component_rate(const TowerModel& model, std::int64_t N)
{
    // from (i, l) the chain climbs deterministically, then restarts from the
    // base law; D_m is the distance of the restarted law after m steps
    const auto P = transition_matrix(model);
    const auto nu = invariant_measure(model);
    const auto& cols = model.columns();
    std::vector<double> pi(nu.size(), 0.0);
    for (std::size_t i = 0; i < cols.size(); ++i) pi[static_cast<std::size_t>(model.state_index(i, 0))] = cols[i].p;
    std::vector<double> D;
    for (std::int64_t m = 0; m < N; ++m) {
        long double l1 = 0.0L;
        for (std::size_t s = 0; s < nu.size(); ++s) l1 += std::fabs(pi[s] - nu[s]);
        D.push_back(static_cast<double>(l1 / 2.0L));
        pi = P.left(pi);
    }
    const std::int64_t maxR = model.max_return();
    std::vector<double> gamma;
    for (std::int64_t n = 0; n <= N; ++n) {
        double g = 0.0;
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i].R > n) g = std::max(g, 1.0 - cols[i].p / model.mean_return());
        for (std::int64_t m = std::max<std::int64_t>(0, n - maxR); m < n; ++m)
            g = std::max(g, D[static_cast<std::size_t>(m)]);
        gamma.push_back(g);
    }
    return gamma;
}

ProductCorrelationReport product_correlation_check(const TowerModel& first,
                                                   const TowerModel& second,
                                                   const Observable& phi, const Observable& psi,
                                                   std::int64_t N)
{
    const std::int64_t S1 = first.state_count();
    const std::int64_t S2 = second.state_count();
    require_size(phi, S1 * S2, "phi");
    require_size(psi, S1 * S2, "psi");
    const auto P1 = transition_matrix(first);
    const auto P2 = transition_matrix(second);
    const auto nu1 = invariant_measure(first);
    const auto nu2 = invariant_measure(second);
    const auto nu = tensor(nu1, nu2);

    Observable phi_c = phi;
    const double m = dot(nu, phi);
    for (double& v : phi_c) v -= m;
    const double norm = sup_norm(phi_c) * sup_norm(psi);
    if (!(norm > 0.0))
        throw Error(ErrorKind::ZeroObservable, "centered phi and psi must be non-zero");

    // marginal over the second coordinate
    std::vector<double> phi_bar(static_cast<std::size_t>(S1), 0.0);
    for (std::int64_t a = 0; a < S1; ++a)
        for (std::int64_t b = 0; b < S2; ++b)
            phi_bar[static_cast<std::size_t>(a)] +=
                nu2[static_cast<std::size_t>(b)] * phi_c[static_cast<std::size_t>(a * S2 + b)];

    // full covariance: psi pushed by P^n from the right
    std::vector<double> weighted(nu.size());
    for (std::size_t s = 0; s < nu.size(); ++s) weighted[s] = nu[s] * phi_c[s];
    std::vector<double> g = psi;

    // fixed-x1 term: the signed measure nu (phi_c - phi_bar(x1)) pushed from the left
    std::vector<double> mu_fixed(nu.size());
    for (std::int64_t a = 0; a < S1; ++a)
        for (std::int64_t b = 0; b < S2; ++b) {
            const auto s = static_cast<std::size_t>(a * S2 + b);
            mu_fixed[s] = nu[s] * (phi_c[s] - phi_bar[static_cast<std::size_t>(a)]);
        }
    // marginal term: the second coordinate stays at nu2, only the first moves
    std::vector<double> mu_marginal(static_cast<std::size_t>(S1));
    for (std::size_t a = 0; a < mu_marginal.size(); ++a) mu_marginal[a] = nu1[a] * phi_bar[a];
    std::vector<double> psi_avg2(static_cast<std::size_t>(S1), 0.0);
    for (std::int64_t a = 0; a < S1; ++a)
        for (std::int64_t b = 0; b < S2; ++b)
            psi_avg2[static_cast<std::size_t>(a)] +=
                nu2[static_cast<std::size_t>(b)] * psi[static_cast<std::size_t>(a * S2 + b)];

    const auto g1 = component_rate(first, N);
    const auto g2 = component_rate(second, N);

    ProductCorrelationReport rep;
    for (std::int64_t n = 0; n <= N; ++n) {
        const double full = dot(weighted, g);
        const double fixed = dot(mu_fixed, psi);
        const double marginal = dot(mu_marginal, psi_avg2);

        ProductCorrelationRow row;
        row.n = n;
        row.cor = std::fabs(full) / norm;
        row.gamma1 = g1[static_cast<std::size_t>(n)];
        row.gamma2 = g2[static_cast<std::size_t>(n)];
        row.bound = 2.0 * rep.C * std::max(row.gamma1, row.gamma2);
        row.holds = row.cor <= row.bound + 1e-10;
        row.term_fixed = fixed / norm;
        row.term_marginal = marginal / norm;
        row.term_fixed_bound = rep.C * row.gamma2;
        row.term_marginal_bound = rep.C * row.gamma1;
        row.reconstruction_error = std::fabs(fixed + marginal - full);
        rep.holds = rep.holds && row.holds;
        rep.terms_hold = rep.terms_hold && std::fabs(row.term_fixed) <= row.term_fixed_bound + 1e-10 &&
                         std::fabs(row.term_marginal) <= row.term_marginal_bound + 1e-10;
        rep.max_reconstruction_error = std::max(rep.max_reconstruction_error, row.reconstruction_error);
        if (!row.holds) rep.failing.push_back(n);
        rep.rows.push_back(row);

        if (n < N) {
            g = P2.right_factor(P1.right_factor(g, S2, true), S1, false);
            mu_fixed = P2.left_factor(P1.left_factor(mu_fixed, S2, true), S1, false);
            mu_marginal = P1.left(mu_marginal);
        }
    }
    return rep;
}

std::string to_csv(const ProductCorrelationReport& report)
{
    std::ostringstream out;
    out << "n,cor_product,gamma1,gamma2,bound,holds\n";
    for (const auto& r : report.rows)
        out << r.n << ',' << format_double(r.cor) << ',' << format_double(r.gamma1) << ','
            << format_double(r.gamma2) << ',' << format_double(r.bound) << ','
            << (r.holds ? "true" : "false") << '\n';
    return out.str();
}

}  // namespace towerprod
