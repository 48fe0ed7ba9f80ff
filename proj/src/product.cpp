#include "towerprod/product.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>

#include "towerprod/error.hpp"

namespace towerprod {

Rational to_rational(double x)
{
    if (!std::isfinite(x)) throw Error(ErrorKind::DomainError, "non-finite value has no fraction");
    if (x == 0.0) return Rational(0);
    int e = 0;
    const double m = std::frexp(x, &e);
    const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
    e -= 53;
    Rational r{boost::multiprecision::cpp_int(mant)};
    const boost::multiprecision::cpp_int two_e = boost::multiprecision::cpp_int(1) << std::abs(e);
    if (e >= 0)
        r *= Rational(two_e);
    else
        r /= Rational(two_e);
    return r;
}

ProductModel make_product(const TowerModel& first, const TowerModel& second, double fraction,
                          std::int64_t mixing_horizon)
{
    ProductModel pm;
    pm.components = {first, second};
    pm.c = std::min(fraction / first.mean_return(), fraction / second.mean_return());
    pm.n0 = 1;
    for (const auto& m : pm.components) {
        const std::int64_t h = std::max(mixing_horizon, default_mixing_horizon(m));
        pm.windows.push_back(select_n0(m, fraction, h, pm.c));
        pm.n0 = std::max(pm.n0, pm.windows.back().n0);
    }
    return pm;
}

ProductModel make_product(const TowerModel& first, const TowerModel& second, std::int64_t n0,
                          double c)
{
    if (n0 < 1) throw Error(ErrorKind::DomainError, "n0 must be >= 1", static_cast<double>(n0));
    ProductModel pm;
    pm.components = {first, second};
    pm.n0 = n0;
    pm.c = c;
    for (const auto& m : pm.components) {
        MixingWindow w;
        w.n0 = n0;
        w.c = c;
        w.c_tower_normalized = c / m.mean_return();
        pm.windows.push_back(w);
    }
    return pm;
}

std::int64_t tau_advance(const TowerModel& model, std::int64_t t, TowerState& active,
                         std::int64_t n0, Rng& rng)
{
    std::int64_t tau = t;
    for (std::int64_t k = 0; k < n0; ++k, ++tau) active = step(model, active, rng);
    while (active.level != 0) {
        active = step(model, active, rng);
        ++tau;
    }
    return tau;
}

TauTrace simultaneous_return(const ProductModel& model, Rng& rng, std::int64_t cap)
{
    const auto& comps = model.components;
    TowerState state[2] = {{comps[0].sample_column(uniform01(rng)), 0},
                           {comps[1].sample_column(uniform01(rng)), 0}};
    TauTrace trace;
    std::int64_t t = 0;
    for (int a = 0;; a = 1 - a) {
        const int b = 1 - a;
        const std::int64_t tau = tau_advance(comps[static_cast<std::size_t>(a)], t,
                                             state[a], model.n0, rng);
        for (std::int64_t k = t; k < tau; ++k)
            state[b] = step(comps[static_cast<std::size_t>(b)], state[b], rng);
        trace.taus.push_back(tau);
        trace.active.push_back(a);
        trace.increments_ok = trace.increments_ok && tau - t >= model.n0;
        trace.active_in_base = trace.active_in_base && state[a].level == 0;
        t = tau;
        if (state[b].level == 0) {
            trace.stop_index = static_cast<std::int64_t>(trace.taus.size());
            trace.T = tau;
            trace.both_in_base = state[a].level == 0 && state[b].level == 0;
            return trace;
        }
        if (t > cap)
            throw Error(ErrorKind::RunawayTrace, "no simultaneous return within the cap",
                        static_cast<double>(cap));
    }
}

namespace {

/// k-step law of the residual time to the base, started on the base:
/// q(k, r) for r <= width and suffix sums tail_from(k, r) for r <= width + 1.
class ResidualTable {
public:
    ResidualTable(const TowerModel& model, std::int64_t rows, std::int64_t width)
        : width_(width),
          q_(static_cast<std::size_t>((rows + 1) * (width + 1)), 0.0),
          s_(static_cast<std::size_t>((rows + 1) * (width + 2)), 0.0)
    {
        const auto& pmf = model.pmf_by_value();
        const std::int64_t L = model.max_return();
        std::vector<long double> cur(static_cast<std::size_t>(L + 1), 0.0L);
        std::vector<long double> next(cur.size());
        cur[0] = 1.0L;
        for (std::int64_t k = 0;; ++k) {
            long double acc = 0.0L;
            for (std::int64_t r = L; r >= 0; --r) {
                acc += cur[static_cast<std::size_t>(r)];
                if (r <= width + 1) s_[idx_s(k, r)] = static_cast<double>(acc);
                if (r <= width) q_[idx_q(k, r)] = static_cast<double>(cur[static_cast<std::size_t>(r)]);
            }
            if (k == rows) break;
            const long double base = cur[0];
            for (std::int64_t r = 0; r < L; ++r)
                next[static_cast<std::size_t>(r)] =
                    cur[static_cast<std::size_t>(r + 1)] +
                    base * static_cast<long double>(pmf[static_cast<std::size_t>(r + 1)]);
            next[static_cast<std::size_t>(L)] = 0.0L;
            cur.swap(next);
        }
    }

    static std::size_t bytes(std::int64_t rows, std::int64_t width)
    {
        return static_cast<std::size_t>((rows + 1) * (2 * width + 3)) * sizeof(double);
    }

    double q(std::int64_t k, std::int64_t r) const { return q_[idx_q(k, r)]; }
    const double* row(std::int64_t k) const { return &q_[idx_q(k, 0)]; }
    double tail_from(std::int64_t k, std::int64_t r) const
    {
        return s_[idx_s(k, std::clamp<std::int64_t>(r, 0, width_ + 1))];
    }

private:
    std::size_t idx_q(std::int64_t k, std::int64_t r) const
    {
        return static_cast<std::size_t>(k * (width_ + 1) + r);
    }
    std::size_t idx_s(std::int64_t k, std::int64_t r) const
    {
        return static_cast<std::size_t>(k * (width_ + 2) + r);
    }

    std::int64_t width_;
    std::vector<double> q_;
    std::vector<double> s_;
};

std::vector<double> survival_vector(const TowerModel& model)
{
    const auto& pmf = model.pmf_by_value();
    std::vector<double> s(pmf.size(), 0.0);
    long double acc = 0.0L;
    for (std::size_t k = pmf.size(); k-- > 0;) {
        s[k] = static_cast<double>(acc);  // P(R > k)
        acc += pmf[k];
    }
    return s;
}

}  // namespace

std::vector<double> truncation_leak_curve(const ProductModel& model, std::int64_t N)
{
    std::vector<double> leak(static_cast<std::size_t>(N + 1), 0.0);
    for (const auto& m : model.components) {
        if (m.leak() == 0.0) continue;
        // a cut column started at s shows only from s + onset on
        const std::int64_t onset = m.leak_onset();
        if (onset > N) continue;
        const auto u = renewal_probabilities(m, N - onset);
        long double renewals = 0.0L;
        for (std::int64_t n = onset; n <= N; ++n) {
            renewals += u[static_cast<std::size_t>(n - onset)];
            leak[static_cast<std::size_t>(n)] += m.leak() * static_cast<double>(renewals);
        }
    }
    return leak;
}

DpResult product_tail_dp(const ProductModel& model, std::int64_t N, double memory_budget_bytes)
{
    if (N < 1) throw Error(ErrorKind::DomainError, "DP horizon must be >= 1");
    const std::int64_t n0 = model.n0;
    const std::int64_t rows = std::max(N, n0);
    const bool shared = model.components[0] == model.components[1];
    const std::size_t state_bytes =
        static_cast<std::size_t>((N + 1) * (N + 2)) * sizeof(long double);
    const std::size_t table_bytes = ResidualTable::bytes(rows, N) * (shared ? 1 : 2);
    if (static_cast<double>(state_bytes + table_bytes) > memory_budget_bytes)
        throw Error(ErrorKind::StateSpaceBound, "DP state space exceeds the memory budget",
                    static_cast<double>(state_bytes + table_bytes));

    std::shared_ptr<const ResidualTable> table[2];
    table[0] = std::make_shared<ResidualTable>(model.components[0], rows, N);
    table[1] = shared ? table[0] : std::make_shared<ResidualTable>(model.components[1], rows, N);

    // mass[2t + p][r]: probe at time t survived, component p drives next
    // with residual r, the other one is on its base
    std::vector<std::vector<long double>> mass(static_cast<std::size_t>(2 * (N + 1)));
    std::vector<long double> beyond(mass.size(), 0.0L);  // residual past the horizon
    for (std::int64_t t = 0; t <= N; ++t)
        for (int p = 0; p < 2; ++p)
            mass[static_cast<std::size_t>(2 * t + p)].assign(static_cast<std::size_t>(N - t + 1),
                                                             0.0L);
    mass[0][0] = 1.0L;

    std::vector<long double> pmf(static_cast<std::size_t>(N + 1), 0.0L);
    std::vector<long double> tail(static_cast<std::size_t>(N + 1), 0.0L);
    std::vector<long double> arrive(static_cast<std::size_t>(N + 1));

    for (std::int64_t t = 0; t <= N; ++t) {
        const std::int64_t span = N - t;
        for (int p = 0; p < 2; ++p) {
            const auto cell = static_cast<std::size_t>(2 * t + p);
            auto& f = mass[cell];
            const int o = 1 - p;
            const ResidualTable& own = *table[p];
            const ResidualTable& other = *table[o];

            std::fill(arrive.begin(), arrive.begin() + span + 1, 0.0L);
            long double over = beyond[cell];
            bool any = over > 0.0L;
            for (std::int64_t r = 0; r <= span; ++r) {
                const long double m = f[static_cast<std::size_t>(r)];
                if (m == 0.0L) continue;
                any = true;
                if (r >= n0) {
                    arrive[static_cast<std::size_t>(r)] += m;
                } else {
                    // reaches the base inside the wait, then runs freely
                    const std::int64_t j = n0 - r;
                    const double* q = own.row(j);
                    for (std::int64_t s = 0; n0 + s <= span; ++s)
                        arrive[static_cast<std::size_t>(n0 + s)] += m * q[s];
                    over += m * own.tail_from(j, span - n0 + 1);
                }
            }
            std::vector<long double>().swap(f);
            if (!any) continue;

            long double later = over;
            for (std::int64_t d = span; d >= 0; --d) {
                tail[static_cast<std::size_t>(t + d)] += later;
                later += arrive[static_cast<std::size_t>(d)];
            }

            for (std::int64_t k = n0; k <= span; ++k) {
                const long double a = arrive[static_cast<std::size_t>(k)];
                if (a == 0.0L) continue;
                const double* q = other.row(k);
                pmf[static_cast<std::size_t>(t + k)] += a * q[0];
                const auto target = static_cast<std::size_t>(2 * (t + k) + o);
                auto& g = mass[target];
                const std::int64_t room = span - k;
                for (std::int64_t r = 1; r <= room; ++r) g[static_cast<std::size_t>(r)] += a * q[r];
                beyond[target] += a * other.tail_from(k, room + 1);
            }
        }
    }

    DpResult res;
    res.bytes = state_bytes + table_bytes;
    res.curve.source = CurveSource::Dp;
    res.curve.tail.assign(tail.begin(), tail.end());
    res.pmf.assign(pmf.begin(), pmf.end());
    long double total = tail[static_cast<std::size_t>(N)];
    for (const auto v : pmf) total += v;
    res.drift = static_cast<double>(std::fabs(total - 1.0L));
    if (res.drift > 1e-10)
        throw Error(ErrorKind::DomainError, "DP probability drift exceeds 1e-10", res.drift);
    res.curve.leak = truncation_leak_curve(model, N);
    return res;
}

unsigned worker_threads(unsigned requested)
{
    if (requested > 0) return requested;
    if (const char* env = std::getenv("TOWERPROD_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

McResult product_tail_mc(const ProductModel& model, const McOptions& options)
{
    if (options.samples < 1) throw Error(ErrorKind::DomainError, "MC needs at least one sample");
    if (options.horizon < 0) throw Error(ErrorKind::DomainError, "MC horizon must be >= 0");
    const std::int64_t S = options.samples;
    const std::int64_t N = options.horizon;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::int64_t>(worker_threads(options.threads), S));

    struct Partial {
        std::vector<std::int64_t> hist;  // T capped at N + 1
        std::int64_t violations = 0;
        std::int64_t min_increment = std::numeric_limits<std::int64_t>::max();
        std::int64_t failed_replica = -1;
        std::string failure;
    };
    std::vector<Partial> parts(workers);
    std::vector<TauTrace> kept(std::min<std::size_t>(options.keep_traces,
                                                     static_cast<std::size_t>(S)));

    const auto work = [&](unsigned w) {
        Partial& part = parts[w];
        part.hist.assign(static_cast<std::size_t>(N + 2), 0);
        const std::int64_t lo = S * w / workers;
        const std::int64_t hi = S * (w + 1) / workers;
        for (std::int64_t i = lo; i < hi; ++i) {
            Rng rng = make_stream(options.seed, static_cast<std::uint64_t>(i));
            TauTrace tr;
            try {
                tr = simultaneous_return(model, rng, options.cap);
            } catch (const Error& e) {
                part.failed_replica = i;
                part.failure = e.what();
                return;
            }
            part.hist[static_cast<std::size_t>(std::min(tr.T, N + 1))]++;
            if (!tr.increments_ok || !tr.active_in_base || !tr.both_in_base) part.violations++;
            std::int64_t prev = 0;
            for (const auto tau : tr.taus) {
                part.min_increment = std::min(part.min_increment, tau - prev);
                prev = tau;
            }
            if (static_cast<std::size_t>(i) < kept.size()) kept[static_cast<std::size_t>(i)] = tr;
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }

    McResult res;
    std::vector<std::int64_t> hist(static_cast<std::size_t>(N + 2), 0);
    res.min_increment = std::numeric_limits<std::int64_t>::max();
    for (const auto& part : parts) {
        if (part.failed_replica >= 0)
            throw Error(ErrorKind::RunawayTrace,
                        "replica " + std::to_string(part.failed_replica) + ": " + part.failure,
                        static_cast<double>(part.failed_replica));
        for (std::size_t n = 0; n < hist.size(); ++n) hist[n] += part.hist[n];
        res.trace_violations += part.violations;
        res.min_increment = std::min(res.min_increment, part.min_increment);
    }
    auto& curve = res.curve;
    curve.source = CurveSource::Mc;
    curve.tail.resize(static_cast<std::size_t>(N + 1));
    curve.ci_low.resize(curve.tail.size());
    curve.ci_high.resize(curve.tail.size());
    std::int64_t alive = S;
    for (std::int64_t n = 0; n <= N; ++n) {
        alive -= hist[static_cast<std::size_t>(n)];  // T > n
        const auto ci = wilson_interval(alive, S, options.z);
        curve.tail[static_cast<std::size_t>(n)] = static_cast<double>(alive) / static_cast<double>(S);
        curve.ci_low[static_cast<std::size_t>(n)] = ci.low;
        curve.ci_high[static_cast<std::size_t>(n)] = ci.high;
    }
    res.traces = std::move(kept);
    return res;
}

namespace {

template <class T>
class BruteForce {
public:
    BruteForce(const ProductModel& model, std::int64_t N, std::int64_t max_nodes)
        : n0_(model.n0), N_(N), max_nodes_(max_nodes), pmf_(static_cast<std::size_t>(N + 1), T(0))
    {
        for (int c = 0; c < 2; ++c)
            for (const auto& col : model.components[static_cast<std::size_t>(c)].columns()) {
                R_[c].push_back(col.R);
                if constexpr (std::is_same_v<T, Rational>)
                    p_[c].push_back(to_rational(col.p));
                else
                    p_[c].push_back(static_cast<T>(col.p));
            }
    }

    std::vector<T> run()
    {
        reveal_active(0, 0, 0, 0, T(1));
        return std::move(pmf_);
    }

private:
    void count()
    {
        if (++nodes_ > max_nodes_)
            throw Error(ErrorKind::EnumerationBound, "brute force exceeded its node budget",
                        static_cast<double>(max_nodes_));
    }

    // ea, eb: end of the revealed history of the driven / waiting component
    void reveal_active(std::int64_t t, int a, std::int64_t ea, std::int64_t eb, const T& prob)
    {
        if (ea >= t + n0_) {
            if (ea > N_) return;
            reveal_passive(ea, a, ea, eb, prob);
            return;
        }
        for (std::size_t c = 0; c < R_[a].size(); ++c) {
            count();
            reveal_active(t, a, ea + R_[a][c], eb, prob * p_[a][c]);
        }
    }

    void reveal_passive(std::int64_t tau, int a, std::int64_t ea, std::int64_t eb, const T& prob)
    {
        const int b = 1 - a;
        if (eb >= tau) {
            if (eb == tau)
                pmf_[static_cast<std::size_t>(tau)] += prob;
            else if (eb <= N_)
                reveal_active(tau, b, eb, ea, prob);
            return;
        }
        for (std::size_t c = 0; c < R_[b].size(); ++c) {
            count();
            reveal_passive(tau, a, ea, eb + R_[b][c], prob * p_[b][c]);
        }
    }

    std::int64_t n0_;
    std::int64_t N_;
    std::int64_t max_nodes_;
    std::int64_t nodes_ = 0;
    std::vector<std::int64_t> R_[2];
    std::vector<T> p_[2];
    std::vector<T> pmf_;
};

}  // namespace

template <class T>
std::vector<T> brute_force_pmf(const ProductModel& model, std::int64_t N, std::int64_t max_nodes)
{
    if (N < 0) throw Error(ErrorKind::DomainError, "brute force horizon must be >= 0");
    return BruteForce<T>(model, N, max_nodes).run();
}

template std::vector<double> brute_force_pmf<double>(const ProductModel&, std::int64_t,
                                                     std::int64_t);
template std::vector<Rational> brute_force_pmf<Rational>(const ProductModel&, std::int64_t,
                                                         std::int64_t);

SurvivalCurve brute_force_tail(const ProductModel& model, std::int64_t N, std::int64_t max_nodes)
{
    const auto pmf = brute_force_pmf<Rational>(model, N, max_nodes);
    SurvivalCurve curve;
    curve.source = CurveSource::BruteForce;
    Rational left(1);
    for (const auto& p : pmf) {
        left -= p;
        curve.tail.push_back(static_cast<double>(left));
    }
    return curve;
}

void require_integrable(double alpha, std::size_t ell)
{
    if (alpha <= static_cast<double>(ell))
        throw Error(ErrorKind::FoldNotIntegrable,
                    "polynomial tail exponent alpha = " + format_double(alpha) +
                        " must exceed the number of components l = " + std::to_string(ell) +
                        " (alpha > l)",
                    alpha);
}

FoldResult fold(const std::vector<TowerModel>& models, const FoldPolicy& policy)
{
    if (models.empty()) throw Error(ErrorKind::EmptyComponents, "fold needs a component");
    if (policy.polynomial_alpha && models.size() > 1)
        require_integrable(*policy.polynomial_alpha, models.size());
    FoldResult out{models.front(), {}, models.front().leak()};
    const std::int64_t H = policy.horizon;
    for (std::size_t j = 1; j < models.size(); ++j) {
        auto pm = make_product(out.model, models[j], policy.fraction);
        const auto dp = product_tail_dp(pm, H);
        const double lumped = dp.curve.tail[static_cast<std::size_t>(H)];
        const double leak = lumped + dp.curve.leak_at(H);
        if (leak > policy.leak_budget)
            throw Error(ErrorKind::TruncationTooLossy,
                        "folded return time has too much mass beyond the horizon", leak);
        std::vector<Column> cols;
        long double total = lumped;
        for (std::int64_t n = 1; n <= H; ++n) {
            const double p = dp.pmf[static_cast<std::size_t>(n)];
            if (p > 0.0) {
                cols.push_back({n, p});
                total += p;
            }
        }
        if (lumped > 0.0) cols.push_back({H + 1, lumped});
        for (auto& c : cols) c.p = static_cast<double>(c.p / total);
        // a perturbed pmf can differ anywhere; a clean lump only past H
        const std::int64_t onset = dp.curve.leak_at(H) > 0.0 ? 1 : H + 1;
        out.model = TowerModel::from_columns(std::move(cols), leak, onset);
        out.leak = leak;
        out.stages.push_back(std::move(pm));
    }
    return out;
}

std::int64_t alternating_return(const ReturnSampler& first, const ReturnSampler& second,
                                std::int64_t n0, Rng& rng, std::int64_t cap)
{
    const ReturnSampler* sampler[2] = {&first, &second};
    std::int64_t end[2] = {0, 0};
    std::int64_t t = 0;
    for (int a = 0;; a = 1 - a) {
        const int b = 1 - a;
        while (end[a] < t + n0) end[a] += (*sampler[a])(rng);
        const std::int64_t tau = end[a];
        while (end[b] < tau) end[b] += (*sampler[b])(rng);
        if (end[b] == tau) return tau;
        t = tau;
        if (t > cap)
            throw Error(ErrorKind::RunawayTrace, "no simultaneous return within the cap",
                        static_cast<double>(cap));
    }
}

SurvivalCurve nested_return_mc(const FoldResult& folded, const std::vector<TowerModel>& models,
                               std::int64_t samples, std::int64_t N, std::uint64_t seed)
{
    if (models.size() != folded.stages.size() + 1)
        throw Error(ErrorKind::DomainError, "fold stages do not match the component list");
    const auto column_sampler = [](const TowerModel& m) -> ReturnSampler {
        return [&m](Rng& rng) { return m.columns()[m.sample_column(uniform01(rng))].R; };
    };
    std::vector<ReturnSampler> level{column_sampler(models[0])};
    for (std::size_t j = 1; j < models.size(); ++j) {
        const ReturnSampler inner = level.back();
        const ReturnSampler outer = column_sampler(models[j]);
        const std::int64_t n0 = folded.stages[j - 1].n0;
        level.push_back([inner, outer, n0](Rng& rng) {
            return alternating_return(inner, outer, n0, rng);
        });
    }
    std::vector<std::int64_t> hist(static_cast<std::size_t>(N + 2), 0);
    for (std::int64_t i = 0; i < samples; ++i) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
        hist[static_cast<std::size_t>(std::min(level.back()(rng), N + 1))]++;
    }
    SurvivalCurve curve;
    curve.source = CurveSource::Mc;
    std::int64_t alive = samples;
    for (std::int64_t n = 0; n <= N; ++n) {
        alive -= hist[static_cast<std::size_t>(n)];
        const auto ci = wilson_interval(alive, samples, 3.0);
        curve.tail.push_back(static_cast<double>(alive) / static_cast<double>(samples));
        curve.ci_low.push_back(ci.low);
        curve.ci_high.push_back(ci.high);
    }
    return curve;
}

std::function<double(std::int64_t)> model_mbar(const std::vector<TowerModel>& models)
{
    if (models.empty()) throw Error(ErrorKind::EmptyComponents, "mbar needs a component");
    std::size_t len = 0;
    for (const auto& m : models) len = std::max(len, m.pmf_by_value().size());
    std::vector<double> M(len, 0.0);
    for (const auto& m : models) {
        const auto s = survival_vector(m);
        for (std::size_t j = 0; j < s.size(); ++j) M[j] = std::max(M[j], s[j]);
    }
    auto suffix = std::make_shared<std::vector<double>>(len + 1, 0.0);
    long double acc = 0.0L;
    for (std::size_t j = len; j-- > 0;) {
        acc += M[j];
        (*suffix)[j] = static_cast<double>(acc);
    }
    return [suffix](std::int64_t m) -> double {
        if (m < 0) return static_cast<double>(-m) + (*suffix)[0];
        if (static_cast<std::size_t>(m) >= suffix->size()) return 0.0;
        return (*suffix)[static_cast<std::size_t>(m)];
    };
}

KeyPropReport key_prop_check(const ProductModel& model, std::int64_t i_max, std::int64_t horizon)
{
    if (i_max < 2) throw Error(ErrorKind::DomainError, "i_max must be >= 2");
    const std::int64_t n0 = model.n0;
    const std::int64_t H = horizon;
    if (H <= n0) throw Error(ErrorKind::DomainError, "horizon must exceed n0");
    const auto& comps = model.components;
    const std::int64_t rows = std::max(H, n0);
    const ResidualTable tables[2] = {ResidualTable(comps[0], rows, H),
                                     ResidualTable(comps[1], rows, H)};

    // u beyond the horizon only enters through its minimum
    std::vector<double> u[2];
    double u_far_min[2];
    for (int c = 0; c < 2; ++c) {
        const std::int64_t far = comps[static_cast<std::size_t>(c)].max_return() + n0 + H;
        u[c] = renewal_probabilities(comps[static_cast<std::size_t>(c)], far);
        u_far_min[c] = *std::min_element(u[c].begin() + H + 1, u[c].end());
    }
    const auto mbar = model_mbar(comps);

    // increment law on [0, H] plus mass beyond H, for a driven component
    // whose residual law is w (w[H + 1] holds residuals past H)
    const auto increments = [&](int p, const std::vector<long double>& w) {
        std::vector<long double> dist(static_cast<std::size_t>(H + 2), 0.0L);
        const ResidualTable& tab = tables[p];
        for (std::int64_t r = 0; r <= H; ++r) {
            const long double m = w[static_cast<std::size_t>(r)];
            if (m == 0.0L) continue;
            if (r >= n0) {
                dist[static_cast<std::size_t>(r)] += m;
            } else {
                const std::int64_t j = n0 - r;
                for (std::int64_t s = 0; n0 + s <= H; ++s)
                    dist[static_cast<std::size_t>(n0 + s)] += m * tab.q(j, s);
                dist[static_cast<std::size_t>(H + 1)] += m * tab.tail_from(j, H - n0 + 1);
            }
        }
        dist[static_cast<std::size_t>(H + 1)] += w[static_cast<std::size_t>(H + 1)];
        return dist;
    };
    const auto residual_law = [&](int p, std::int64_t k) {
        std::vector<long double> w(static_cast<std::size_t>(H + 2), 0.0L);
        if (k == 0) {
            w[0] = 1.0L;
            return w;
        }
        const ResidualTable& tab = tables[p];
        const long double moving = 1.0L - tab.q(k, 0);
        for (std::int64_t r = 1; r <= H; ++r)
            w[static_cast<std::size_t>(r)] = tab.q(k, r) / moving;
        w[static_cast<std::size_t>(H + 1)] = tab.tail_from(k, H + 1) / moving;
        return w;
    };

    KeyPropReport rep;
    rep.c = model.c;
    rep.eps0 = std::numeric_limits<double>::infinity();
    std::vector<std::vector<long double>> dists;
    std::vector<std::pair<int, std::int64_t>> ids;

    // breadth-first over probe index; state (p, 0) is the start
    std::vector<char> seen(static_cast<std::size_t>(2 * (H + 1)), 0);
    std::vector<std::pair<int, std::int64_t>> frontier{{0, 0}};
    seen[0] = 1;
    for (std::int64_t i = 1; i <= i_max && !frontier.empty(); ++i) {
        std::vector<std::pair<int, std::int64_t>> next;
        for (const auto& [p, k] : frontier) {
            const int o = 1 - p;
            const auto dist = increments(p, residual_law(p, k));
            long double stop = dist[static_cast<std::size_t>(H + 1)] * u_far_min[o];
            for (std::int64_t n = n0; n <= H; ++n)
                stop += dist[static_cast<std::size_t>(n)] * u[o][static_cast<std::size_t>(n)];
            if (static_cast<double>(stop) < rep.eps0) {
                rep.eps0 = static_cast<double>(stop);
                rep.eps_witness = {p, k, 0, rep.eps0};
            }
            if (i < i_max) {
                for (std::int64_t n = n0; n <= H; ++n) {
                    const auto cell = static_cast<std::size_t>(2 * n + o);
                    if (dist[static_cast<std::size_t>(n)] > 0.0L && tables[o].q(n, 0) < 1.0 &&
                        !seen[cell]) {
                        seen[cell] = 1;
                        next.emplace_back(o, n);
                    }
                }
            }
            dists.push_back(dist);
            ids.emplace_back(p, k);
        }
        frontier = std::move(next);
    }
    rep.states = static_cast<std::int64_t>(dists.size());

    // K0 = worst ratio of the gap tail to the summed tail
    const auto gap_tail = [&](const std::vector<long double>& dist) {
        std::vector<long double> g(static_cast<std::size_t>(H + 2), 0.0L);
        long double acc = dist[static_cast<std::size_t>(H + 1)];
        g[static_cast<std::size_t>(H + 1)] = acc;
        for (std::int64_t n = H; n >= 0; --n) {
            acc += dist[static_cast<std::size_t>(n)];
            g[static_cast<std::size_t>(n)] = acc;
        }
        return g;
    };
    std::vector<std::vector<long double>> tails;
    tails.reserve(dists.size());
    for (std::size_t s = 0; s < dists.size(); ++s) {
        tails.push_back(gap_tail(dists[s]));
        for (std::int64_t n = n0 + 1; n <= H; ++n) {
            const double g = static_cast<double>(tails[s][static_cast<std::size_t>(n)]);
            const double m = mbar(n - n0);
            const double ratio =
                m > 0.0 ? g / m : (g > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            if (ratio > rep.K0) {
                rep.K0 = ratio;
                rep.K0_witness = {ids[s].first, ids[s].second, n, ratio};
            }
        }
    }
    rep.K0_finite = std::isfinite(rep.K0);
    rep.domination_ok = rep.K0_finite;
    for (std::size_t s = 0; s < tails.size() && rep.domination_ok; ++s)
        for (std::int64_t n = n0 + 1; n <= H; ++n) {
            ++rep.checks;
            if (static_cast<double>(tails[s][static_cast<std::size_t>(n)]) >
                rep.K0 * mbar(n - n0) * (1.0 + 1e-12)) {
                rep.domination_ok = false;
                break;
            }
        }
    rep.eps_floor_ok = rep.eps0 >= rep.c * (1.0 - 1e-12);
    return rep;
}

}  // namespace towerprod
