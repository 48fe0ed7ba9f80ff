#include "towerprod/tower.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "towerprod/error.hpp"

namespace towerprod {

TowerModel TowerModel::from_columns(std::vector<Column> columns, double leak,
                                     std::int64_t leak_onset)
{
    if (columns.empty()) throw Error(ErrorKind::DomainError, "tower needs at least one column");
    std::sort(columns.begin(), columns.end(),
              [](const Column& a, const Column& b) { return a.R < b.R; });
    long double total = 0.0L;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto& c = columns[i];
        if (c.R < 1)
            throw Error(ErrorKind::DomainError, "return time must be >= 1",
                        static_cast<double>(c.R));
        if (!(c.p > 0.0) || !std::isfinite(c.p))
            throw Error(ErrorKind::DomainError, "column probability must be positive", c.p);
        if (i > 0 && columns[i - 1].R == c.R)
            throw Error(ErrorKind::DomainError, "duplicate return time",
                        static_cast<double>(c.R));
        total += c.p;
    }
    if (std::fabs(static_cast<double>(total) - 1.0) > 1e-12)
        throw Error(ErrorKind::DomainError, "column probabilities must sum to 1",
                    static_cast<double>(total));

    TowerModel m;
    m.columns_ = std::move(columns);
    m.leak_ = leak;
    m.leak_onset_ = leak_onset > 0 ? leak_onset : m.columns_.back().R;
    std::int64_t g = 0;
    long double mean = 0.0L;
    double beta = 1.0;
    for (const auto& c : m.columns_) {
        g = std::gcd(g, c.R);
        mean += static_cast<long double>(c.p) * static_cast<long double>(c.R);
        beta = std::min(beta, c.p);
    }
    if (g != 1)
        throw Error(ErrorKind::AperiodicityViolated,
                    "gcd of return times is " + std::to_string(g), static_cast<double>(g));
    m.gcd_ = g;
    m.mean_ = static_cast<double>(mean);
    m.beta_ = beta;

    m.pmf_.assign(static_cast<std::size_t>(m.columns_.back().R + 1), 0.0);
    m.cumulative_.reserve(m.columns_.size());
    m.offsets_.reserve(m.columns_.size() + 1);
    long double run = 0.0L;
    std::int64_t offset = 0;
    for (const auto& c : m.columns_) {
        m.pmf_[static_cast<std::size_t>(c.R)] = c.p;
        run += c.p;
        m.cumulative_.push_back(static_cast<double>(run));
        m.offsets_.push_back(offset);
        offset += c.R;
    }
    m.offsets_.push_back(offset);
    return m;
}

double TowerModel::survival(std::int64_t k) const
{
    if (k < 0) return 1.0;
    long double s = 0.0L;
    for (auto it = columns_.rbegin(); it != columns_.rend() && it->R > k; ++it) s += it->p;
    return static_cast<double>(s);
}

std::size_t TowerModel::sample_column(double u) const
{
    const double target = u * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end()) return columns_.size() - 1;
    return static_cast<std::size_t>(it - cumulative_.begin());
}

TowerModel build_tower(const TailSpec& spec, std::int64_t R_max, double leak_budget)
{
    if (R_max < 2) throw Error(ErrorKind::DomainError, "R_max must be >= 2");
    const double leak = tail(spec, R_max) + spec.explicit_truncation_leak();
    if (leak > leak_budget)
        throw Error(ErrorKind::TruncationTooLossy,
                    "tail mass beyond R_max exceeds the leak budget", leak);
    std::vector<Column> cols;
    for (std::int64_t k = 1; k < R_max; ++k) {
        const double p = pmf(spec, k);
        if (p > 0.0) cols.push_back({k, p});
    }
    const double lump = tail(spec, R_max - 1);
    if (lump > 0.0) cols.push_back({R_max, lump});
    std::int64_t onset = R_max;
    if (spec.explicit_truncation_leak() > 0.0)
        onset = std::min(onset, static_cast<std::int64_t>(spec.values().size()));
    return TowerModel::from_columns(std::move(cols), leak, onset);
}

TowerState step(const TowerModel& model, const TowerState& state, Rng& rng)
{
    if (state.level + 1 < model.columns()[state.column].R) return {state.column, state.level + 1};
    return {model.sample_column(uniform01(rng)), 0};
}

std::int64_t first_hitting(const TowerModel& model, const TowerState& state)
{
    if (state.level == 0) return 0;
    return model.columns()[state.column].R - state.level;
}

std::vector<double> renewal_probabilities(const TowerModel& model, std::int64_t N)
{
    if (N < 0) throw Error(ErrorKind::DomainError, "renewal horizon must be >= 0");
    std::vector<long double> u(static_cast<std::size_t>(N + 1), 0.0L);
    u[0] = 1.0L;
    const auto& cols = model.columns();
    for (std::int64_t n = 1; n <= N; ++n) {
        long double s = 0.0L;
        for (const auto& c : cols) {
            if (c.R > n) break;
            s += static_cast<long double>(c.p) * u[static_cast<std::size_t>(n - c.R)];
        }
        u[static_cast<std::size_t>(n)] = s;
    }
    return {u.begin(), u.end()};
}

std::int64_t default_mixing_horizon(const TowerModel& model)
{
    return static_cast<std::int64_t>(std::ceil(20.0 * model.mean_return())) + model.max_return();
}

MixingWindow select_n0(const TowerModel& model, double fraction, std::int64_t N,
                       std::optional<double> floor)
{
    if (!(fraction > 0.0 && fraction < 1.0))
        throw Error(ErrorKind::DomainError, "fraction must lie in (0,1)", fraction);
    if (N < default_mixing_horizon(model))
        throw Error(ErrorKind::DomainError,
                    "mixing horizon must be at least 20 E[R] + max R = " +
                        std::to_string(default_mixing_horizon(model)),
                    static_cast<double>(N));
    const double limit = 1.0 / model.mean_return();
    MixingWindow w;
    w.c = floor.value_or(fraction * limit);
    w.c_tower_normalized = w.c / model.mean_return();
    w.horizon = N;
    const auto u = renewal_probabilities(model, N);
    w.limit_gap = std::fabs(u.back() - limit);
    // the sequence must have settled near its limit for the floor to persist
    if (w.limit_gap > 0.5 * (limit - w.c))
        throw Error(ErrorKind::MixingWindowNotFound,
                    "renewal sequence has not converged by the horizon", w.limit_gap);
    std::int64_t n0 = N + 1;
    for (std::int64_t n = N; n >= 1 && u[static_cast<std::size_t>(n)] >= w.c; --n) n0 = n;
    if (n0 > N)
        throw Error(ErrorKind::MixingWindowNotFound, "no mixing window within the horizon",
                    static_cast<double>(N));
    w.n0 = n0;
    return w;
}

std::vector<double> invariant_measure(const TowerModel& model)
{
    std::vector<double> nu(static_cast<std::size_t>(model.state_count()));
    const auto& cols = model.columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const double mass = cols[i].p / model.mean_return();
        for (std::int64_t l = 0; l < cols[i].R; ++l)
            nu[static_cast<std::size_t>(model.state_index(i, l))] = mass;
    }
    return nu;
}

double stationarity_residual(const TowerModel& model, const std::vector<double>& nu)
{
    const auto& cols = model.columns();
    long double top = 0.0L;
    for (std::size_t i = 0; i < cols.size(); ++i)
        top += nu[static_cast<std::size_t>(model.state_index(i, cols[i].R - 1))];
    double worst = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const double base = static_cast<double>(top * static_cast<long double>(cols[i].p));
        worst = std::max(worst,
                         std::fabs(base - nu[static_cast<std::size_t>(model.state_index(i, 0))]));
        for (std::int64_t l = 1; l < cols[i].R; ++l) {
            const auto s = static_cast<std::size_t>(model.state_index(i, l));
            worst = std::max(worst, std::fabs(nu[s - 1] - nu[s]));
        }
    }
    return worst;
}

namespace {

void extend_words(const TowerModel& model, std::int64_t n, const CylinderLimits& limits,
                  std::vector<std::size_t>& word, std::int64_t elapsed, double measure,
                  std::vector<Cylinder>& out)
{
    const auto& cols = model.columns();
    if (static_cast<std::int64_t>(word.size()) >= limits.max_returns)
        throw Error(ErrorKind::EnumerationBound, "word longer than the return bound",
                    static_cast<double>(limits.max_returns));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const std::int64_t end = elapsed + cols[c].R;
        word.push_back(c);
        if (end > n - 1) {
            if (static_cast<std::int64_t>(out.size()) >= limits.max_cylinders)
                throw Error(ErrorKind::EnumerationBound, "too many cylinders",
                            static_cast<double>(limits.max_cylinders));
            out.push_back({word, n - elapsed, measure * cols[c].p, end == n});
        } else {
            extend_words(model, n, limits, word, end, measure * cols[c].p, out);
        }
        word.pop_back();
    }
}

}  // namespace

std::vector<Cylinder> enumerate_cylinders(const TowerModel& model, std::int64_t n,
                                          CylinderLimits limits)
{
    if (n < 1) throw Error(ErrorKind::DomainError, "cylinder depth must be >= 1");
    std::vector<Cylinder> out;
    std::vector<std::size_t> word;
    extend_words(model, n, limits, word, 0, 1.0, out);
    return out;
}

DensityBound pushforward_density_bound(const TowerModel& model, std::int64_t n)
{
    if (n < 0) throw Error(ErrorKind::DomainError, "n must be >= 0");
    const auto& cols = model.columns();
    const auto S = static_cast<std::size_t>(model.state_count());
    std::vector<long double> mass(S, 0.0L), next(S);
    for (std::size_t i = 0; i < cols.size(); ++i)
        mass[static_cast<std::size_t>(model.state_index(i, 0))] = cols[i].p;
    for (std::int64_t t = 0; t < n; ++t) {
        std::fill(next.begin(), next.end(), 0.0L);
        long double top = 0.0L;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            for (std::int64_t l = 0; l + 1 < cols[i].R; ++l) {
                const auto s = static_cast<std::size_t>(model.state_index(i, l));
                next[s + 1] = mass[s];
            }
            top += mass[static_cast<std::size_t>(model.state_index(i, cols[i].R - 1))];
        }
        for (std::size_t i = 0; i < cols.size(); ++i)
            next[static_cast<std::size_t>(model.state_index(i, 0))] =
                top * static_cast<long double>(cols[i].p);
        mass.swap(next);
    }
    const auto nu = invariant_measure(model);
    DensityBound r;
    for (std::size_t s = 0; s < S; ++s)
        r.max_density = std::max(r.max_density, static_cast<double>(mass[s] / nu[s]));
    r.bound = (model.distortion() + 1.0) * model.mean_return();
    r.holds = r.max_density <= r.bound * (1.0 + 1e-12);
    return r;
}

nlohmann::json model_summary(const TowerModel& model, const std::optional<MixingWindow>& window)
{
    nlohmann::json j;
    // long truncated tails are summarized by their head
    constexpr std::size_t listed = 64;
    auto& cols = j["columns"] = nlohmann::json::array();
    for (std::size_t i = 0; i < std::min(listed, model.size()); ++i)
        cols.push_back({{"R", model.columns()[i].R}, {"p", model.columns()[i].p}});
    j["column_count"] = model.size();
    j["max_return"] = model.max_return();
    j["mean_return"] = model.mean_return();
    j["gcd"] = model.gcd();
    j["leak"] = model.leak();
    j["beta"] = model.beta();
    j["distortion"] = model.distortion();
    if (window) {
        j["n0"] = window->n0;
        j["c"] = window->c;
        j["c_tower_normalized"] = window->c_tower_normalized;
        j["mixing_horizon"] = window->horizon;
        j["limit_gap"] = window->limit_gap;
    }
    return j;
}

}  // namespace towerprod
