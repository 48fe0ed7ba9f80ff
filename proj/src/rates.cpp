#include "towerprod/rates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "towerprod/error.hpp"

namespace towerprod {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double residual_max = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y)
{
    const auto count = static_cast<double>(x.size());
    long double mx = 0.0L, my = 0.0L;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= count;
    my /= count;
    long double sxx = 0.0L, sxy = 0.0L, syy = 0.0L;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const long double dx = x[k] - mx;
        const long double dy = y[k] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    LineFit f;
    f.slope = static_cast<double>(sxy / sxx);
    f.intercept = static_cast<double>(my - sxy / sxx * mx);
    long double ss_res = 0.0L;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = y[k] - (f.intercept + f.slope * x[k]);
        ss_res += static_cast<long double>(r) * r;
        f.residual_max = std::max(f.residual_max, std::fabs(r));
    }
    if (syy > 0.0L)
        f.r2 = std::clamp(static_cast<double>(1.0L - ss_res / syy), 0.0, 1.0);
    else
        f.r2 = 1.0;
    return f;
}

void check_window(const SurvivalCurve& curve, FitWindow w)
{
    if (w.lo < 0 || w.hi > curve.horizon() || w.lo > w.hi)
        throw Error(ErrorKind::DomainError,
                    "window [" + std::to_string(w.lo) + ", " + std::to_string(w.hi) +
                        "] is outside the curve horizon " + std::to_string(curve.horizon()));
}

double log_bigint(const BigInt& b)
{
    if (b <= 0) return kNegInf;
    const auto bits = static_cast<std::int64_t>(boost::multiprecision::msb(b));
    if (bits < 1000) return std::log(b.convert_to<double>());
    const std::int64_t shift = bits - 60;
    const BigInt top = b >> static_cast<unsigned>(shift);
    return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
}

}  // namespace

FitWindow default_fit_window(const SurvivalCurve& curve)
{
    const std::int64_t N = curve.horizon();
    return {std::max<std::int64_t>(1, (N + 9) / 10), N};
}

std::vector<double> default_theta_grid()
{
    std::vector<double> g;
    for (int k = 2; k <= 18; ++k) g.push_back(k * 0.05);
    return g;
}

RateFit fit_rate(const SurvivalCurve& curve, TailFamily family, FitWindow window,
                 const std::vector<double>& theta_grid)
{
    if (family == TailFamily::Explicit)
        throw Error(ErrorKind::DomainError, "no decay law to fit for an explicit family");
    check_window(curve, window);
    RateFit fit;
    fit.family = family;
    fit.window = window;
    std::vector<double> n;
    std::vector<double> y;
    for (std::int64_t k = window.lo; k <= window.hi; ++k) {
        const double t = curve.tail[static_cast<std::size_t>(k)];
        const bool usable = t > 0.0 && t > 10.0 * curve.leak_at(k) &&
                            (family == TailFamily::Exponential || k >= 1);
        if (!usable) {
            ++fit.skipped;
            continue;
        }
        n.push_back(static_cast<double>(k));
        y.push_back(std::log(t));
    }
    if (fit.skipped > 0)
        fit.notes.push_back(std::to_string(fit.skipped) +
                            " window points skipped (non-positive or within 10x of the leak bound)");
    fit.points = static_cast<std::int64_t>(n.size());
    if (n.size() < 8)
        throw Error(ErrorKind::WindowTooNoisy,
                    "only " + std::to_string(n.size()) + " clean points in the fit window",
                    static_cast<double>(n.size()));

    std::vector<double> x(n.size());
    LineFit line;
    switch (family) {
    case TailFamily::Exponential:
        line = least_squares(n, y);
        fit.tau = -line.slope;
        break;
    case TailFamily::Polynomial:
        for (std::size_t k = 0; k < n.size(); ++k) x[k] = std::log(n[k]);
        line = least_squares(x, y);
        fit.alpha = -line.slope;
        break;
    case TailFamily::Stretched: {
        if (theta_grid.empty()) throw Error(ErrorKind::DomainError, "empty theta grid");
        bool first = true;
        for (double th : theta_grid) {
            if (!(th > 0.0 && th <= 1.0))
                throw Error(ErrorKind::DomainError, "theta grid values must lie in (0, 1]", th);
            for (std::size_t k = 0; k < n.size(); ++k) x[k] = std::pow(n[k], th);
            const auto candidate = least_squares(x, y);
            if (first || candidate.r2 > line.r2) {
                line = candidate;
                fit.theta = th;
                first = false;
            }
        }
        fit.tau = -line.slope;
        break;
    }
    case TailFamily::Explicit:
        break;
    }
    fit.C = std::exp(line.intercept);
    fit.r2 = line.r2;
    fit.residual_max = line.residual_max;
    if (family != TailFamily::Polynomial && fit.tau <= 0.0)
        fit.notes.push_back("fitted rate is not positive");
    return fit;
}

SequenceCheck check_sequence(const std::vector<double>& b)
{
    SequenceCheck s;
    if (b.empty()) return s;
    const std::size_t q = std::max<std::size_t>(1, b.size() / 4);
    const std::size_t split = b.size() - q;
    double head = 0.0, last = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
        s.sup = std::max(s.sup, b[k]);
        double& part = k < split ? head : last;
        part = std::max(part, b[k]);
    }
    s.bounded = split == 0 || last <= head * (1.0 + 1e-9);
    s.last_quarter_nonincreasing = true;
    for (std::size_t k = split + 1; k < b.size(); ++k)
        if (b[k] > b[k - 1] * (1.0 + 1e-9)) s.last_quarter_nonincreasing = false;
    return s;
}

TheoremReport verify_theorem_bound(const SurvivalCurve& curve, const TailSpec& component,
                                   std::int64_t ell, FitWindow window)
{
    if (ell < 1) throw Error(ErrorKind::DomainError, "need at least one component");
    check_window(curve, window);
    for (std::int64_t k = window.lo; k <= window.hi; ++k) {
        const double t = curve.tail[static_cast<std::size_t>(k)];
        if (!(t > curve.leak_at(k)))
            throw Error(ErrorKind::WindowTooNoisy,
                        "tail at n = " + std::to_string(k) + " is within the leak bound",
                        static_cast<double>(k));
    }
    TheoremReport rep;
    rep.family = component.family();
    rep.ell = ell;
    rep.window = window;
    const auto values = [&](auto&& weight) {
        std::vector<double> b;
        for (std::int64_t k = window.lo; k <= window.hi; ++k)
            b.push_back(curve.tail[static_cast<std::size_t>(k)] * weight(static_cast<double>(k)));
        return b;
    };

    switch (component.family()) {
    case TailFamily::Exponential: {
        rep.fit = fit_rate(curve, TailFamily::Exponential, window);
        const double tau = rep.fit->tau;
        rep.envelope = check_sequence(values([tau](double n) { return std::exp(tau * n / 2.0); }));
        rep.theorem_holds = tau > 0.0 && rep.envelope.bounded;
        break;
    }
    case TailFamily::Stretched: {
        rep.fit = fit_rate(curve, TailFamily::Stretched, window);
        rep.theorem_holds =
            rep.fit->theta > 0.0 && rep.fit->theta < component.theta() && rep.fit->tau > 0.0;
        if (rep.fit->theta >= component.theta())
            rep.notes.push_back("fitted theta' is not below the component theta");
        break;
    }
    case TailFamily::Polynomial: {
        const double alpha = component.alpha();
        const double l = static_cast<double>(ell);
        rep.b = check_sequence(values([&](double n) { return std::pow(n, alpha - l); }));
        rep.b_prime = check_sequence(values([&](double n) { return std::pow(n, alpha - 1.0); }));
        rep.theorem_holds = alpha > l && rep.b.bounded;
        rep.sharper_holds = rep.b_prime.bounded && rep.b_prime.last_quarter_nonincreasing;
        if (!(alpha > l)) rep.notes.push_back("alpha <= l: no polynomial rate is claimed");
        try {
            rep.fit = fit_rate(curve, TailFamily::Polynomial, window);
        } catch (const Error& e) {
            rep.notes.push_back(std::string("no polynomial fit: ") + e.what());
        }
        break;
    }
    case TailFamily::Explicit:
        throw Error(ErrorKind::DomainError, "an explicit tail carries no rate claim");
    }
    return rep;
}

double bound_constant(double K0)
{
    return 2.0 * std::max(1.0, K0);
}

EstmValue estm_rhs(std::int64_t n, double K, double eps0, std::int64_t n0,
                   const std::function<double(std::int64_t)>& mbar, double mass)
{
    if (!(eps0 > 0.0 && eps0 <= 1.0)) throw Error(ErrorKind::DomainError, "eps0 must lie in (0, 1]", eps0);
    if (n0 < 1) throw Error(ErrorKind::DomainError, "n0 must be >= 1", static_cast<double>(n0));
    if (n < 0) throw Error(ErrorKind::DomainError, "n must be >= 0", static_cast<double>(n));
    EstmValue out;
    const std::int64_t h = n / n0;
    const std::int64_t I = h / 2;
    const bool degenerate = eps0 == 1.0;
    long double sum = 0.0L;
    long double low = 0.0L;
    for (std::int64_t i = 1; i <= I; ++i) {
        if (degenerate && i < 3) continue;
        const double tail_sum = mbar(n / i - n0);
        double term = K * static_cast<double>(i) * std::pow(1.0 - eps0, static_cast<double>(i - 3)) *
                      tail_sum;
        if (i < 3) {
            term = std::max(term, K * mbar(n / 2 - n0));
            low += term;
        }
        sum += term;
        ++out.terms;
    }
    out.sum = static_cast<double>(sum);
    out.low = static_cast<double>(low);
    if (degenerate) {
        out.second = 0.0;
        out.notes.push_back("eps0 = 1: terms with i < 3 and the second term are dropped");
    } else {
        out.second = mass * std::pow(1.0 - eps0, static_cast<double>(h) / 2.0 - 1.0);
    }
    if (I == 0) out.notes.push_back("empty sum: n < 2 n0");
    out.value = out.sum + out.second;
    return out;
}

MbarMaxTable::MbarMaxTable(const std::function<double(std::int64_t)>& mbar, std::int64_t n0,
                           std::int64_t max_i, std::int64_t max_n, double max_cells)
    : n0_(n0), max_i_(max_i), max_n_(max_n)
{
    if (n0 < 1 || max_i < 1 || max_n < 0)
        throw Error(ErrorKind::DomainError, "table needs n0 >= 1, max_i >= 1, max_n >= 0");
    const double cells = static_cast<double>(max_i) * static_cast<double>(max_n + 1) *
                         static_cast<double>(max_n + 1) / 2.0;
    if (cells > max_cells)
        throw Error(ErrorKind::EnumerationBound, "max-plus table exceeds the work bound", cells);
    log_mbar_.resize(static_cast<std::size_t>(max_n + n0 + 1));
    for (std::int64_t m = -n0; m <= max_n; ++m) {
        const double v = mbar(m);
        log_mbar_[static_cast<std::size_t>(m + n0)] = v > 0.0 ? std::log(v) : kNegInf;
    }
    const auto N = static_cast<std::size_t>(max_n + 1);
    G_.assign(static_cast<std::size_t>(max_i + 1), std::vector<double>(N, kNegInf));
    G_[1][0] = 0.0;
    for (std::int64_t i = 2; i <= max_i; ++i) {
        const auto& prev = G_[static_cast<std::size_t>(i - 1)];
        auto& cur = G_[static_cast<std::size_t>(i)];
        for (std::int64_t s = 0; s <= max_n; ++s) {
            double best = kNegInf;
            for (std::int64_t k = n0; k <= s; ++k) {
                const double p = prev[static_cast<std::size_t>(s - k)];
                if (p == kNegInf) continue;
                best = std::max(best, p + log_mbar_[static_cast<std::size_t>(k)]);
            }
            cur[static_cast<std::size_t>(s)] = best;
        }
    }
}

double MbarMaxTable::log_value(std::int64_t i, std::int64_t n) const
{
    if (i < 1 || i > max_i_ || n < 0 || n > max_n_)
        throw Error(ErrorKind::DomainError, "(i, n) outside the table");
    const auto& g = G_[static_cast<std::size_t>(i)];
    double best = kNegInf;
    for (std::int64_t s = 0; s <= n; ++s) {
        const double p = g[static_cast<std::size_t>(s)];
        if (p == kNegInf) continue;
        best = std::max(best, p + log_mbar_[static_cast<std::size_t>(n - s)]);
    }
    return best;
}

double mbar_max_enumerated(const std::function<double(std::int64_t)>& mbar, std::int64_t n0,
                           std::int64_t i, std::int64_t n, std::int64_t max_nodes)
{
    if (i < 1 || n0 < 1) throw Error(ErrorKind::DomainError, "need i >= 1 and n0 >= 1");
    std::int64_t nodes = 0;
    double best = kNegInf;
    std::vector<std::int64_t> k;
    const auto visit = [&](auto&& self, std::int64_t used, double acc) -> void {
        if (++nodes > max_nodes)
            throw Error(ErrorKind::EnumerationBound, "A(i) enumeration exceeds the node bound",
                        static_cast<double>(max_nodes));
        if (static_cast<std::int64_t>(k.size()) == i - 1) {
            const double last = mbar(n - used - n0);
            if (last > 0.0) best = std::max(best, acc + std::log(last));
            return;
        }
        for (std::int64_t kj = n0; used + kj <= n; ++kj) {
            const double f = mbar(kj - n0);
            if (!(f > 0.0)) continue;
            k.push_back(kj);
            self(self, used + kj, acc + std::log(f));
            k.pop_back();
        }
    };
    visit(visit, 0, 0.0);
    return best;
}

namespace {

template <class LogMbar>
StnexpValue stnexp_impl(std::int64_t n, double theta_prime, double delta, double K0, double eps0,
                        std::int64_t n0, double mass, LogMbar&& log_mbar)
{
    if (!(delta > 0.0)) throw Error(ErrorKind::DomainError, "delta must be positive", delta);
    if (!(theta_prime > 0.0 && theta_prime <= 1.0))
        throw Error(ErrorKind::DomainError, "theta' must lie in (0, 1]", theta_prime);
    if (!(eps0 > 0.0 && eps0 <= 1.0)) throw Error(ErrorKind::DomainError, "eps0 must lie in (0, 1]", eps0);
    if (K0 < 0.0) throw Error(ErrorKind::DomainError, "K0 must be >= 0", K0);
    StnexpValue out;
    out.L = static_cast<std::int64_t>(std::floor(delta * std::pow(static_cast<double>(n), theta_prime)));
    const double logK = K0 > 0.0 ? std::log(K0) : kNegInf;
    long double sum = 0.0L;
    for (std::int64_t i = 1; i <= out.L; ++i) {
        const double lb = log_bigint(binomial(n + i - n0, i - 1));
        const double lm = log_mbar(i);
        double lt = kNegInf;
        if (lb != kNegInf && lm != kNegInf && logK != kNegInf)
            lt = lb + static_cast<double>(i) * logK + lm;
        out.log_terms.push_back(lt);
        if (lt != kNegInf) sum += std::exp(static_cast<long double>(lt));
    }
    out.second = mass * std::pow(1.0 - eps0, static_cast<double>(out.L - 1));
    if (out.L == 0) out.notes.push_back("empty sum: [delta n^theta'] = 0");
    out.value = static_cast<double>(sum) + out.second;
    return out;
}

}  // namespace

StnexpValue stnexp_rhs(std::int64_t n, double theta_prime, double delta, double K0, double eps0,
                       std::int64_t n0, const MbarMaxTable& table, double mass)
{
    return stnexp_impl(n, theta_prime, delta, K0, eps0, n0, mass,
                       [&](std::int64_t i) { return table.log_value(i, n); });
}

StnexpValue stnexp_rhs(std::int64_t n, double theta_prime, double delta, double K0, double eps0,
                       std::int64_t n0, const ExponentialEnvelope& envelope, double mass)
{
    if (!(envelope.tau > 0.0) || !(envelope.C_prime > 0.0))
        throw Error(ErrorKind::DomainError, "envelope needs C' > 0 and tau > 0");
    const double logC = std::log(envelope.C_prime / -std::expm1(-envelope.tau));
    return stnexp_impl(n, theta_prime, delta, K0, eps0, n0, mass, [&](std::int64_t i) {
        return static_cast<double>(i) * logC -
               envelope.tau * static_cast<double>(n - i * n0);
    });
}

DominanceReport dominance_check(const SurvivalCurve& curve, const std::vector<double>& bound,
                                FitWindow window)
{
    if (bound.size() != curve.tail.size())
        throw Error(ErrorKind::DomainError, "bound and curve have different index ranges");
    check_window(curve, window);
    DominanceReport rep;
    rep.window = window;
    for (std::int64_t n = window.lo; n <= window.hi; ++n) {
        const auto k = static_cast<std::size_t>(n);
        ++rep.checked;
        if (!(curve.tail[k] <= bound[k] + curve.leak_at(n))) {
            rep.pass = false;
            rep.violations.push_back({n, curve.tail[k], bound[k]});
        }
    }
    return rep;
}

nlohmann::json to_json(const RateFit& fit)
{
    nlohmann::json params;
    switch (fit.family) {
    case TailFamily::Exponential:
        params = {{"tau", fit.tau}, {"C", fit.C}};
        break;
    case TailFamily::Stretched:
        params = {{"tau", fit.tau}, {"theta", fit.theta}, {"C", fit.C}};
        break;
    default:
        params = {{"alpha", fit.alpha}, {"C", fit.C}};
        break;
    }
    return {{"family", to_string(fit.family)},
            {"params", params},
            {"window", {fit.window.lo, fit.window.hi}},
            {"r2", fit.r2},
            {"residual_max", fit.residual_max},
            {"points", fit.points},
            {"skipped", fit.skipped},
            {"notes", fit.notes}};
}

namespace {

nlohmann::json to_json(const SequenceCheck& s)
{
    return {{"sup", s.sup}, {"bounded", s.bounded},
            {"last_quarter_nonincreasing", s.last_quarter_nonincreasing}};
}

}  // namespace

nlohmann::json to_json(const TheoremReport& r)
{
    nlohmann::json verdicts = nlohmann::json::array();
    switch (r.family) {
    case TailFamily::Exponential:
        verdicts.push_back({{"claim", "exponential"},
                            {"pass", r.theorem_holds},
                            {"envelope", to_json(r.envelope)}});
        break;
    case TailFamily::Stretched:
        verdicts.push_back({{"claim", "stretched"}, {"pass", r.theorem_holds}});
        break;
    default:
        verdicts.push_back({{"claim", "polynomial n^(l - alpha)"},
                            {"pass", r.theorem_holds},
                            {"sequence", to_json(r.b)}});
        verdicts.push_back({{"claim", "polynomial n^(1 - alpha)"},
                            {"pass", r.sharper_holds},
                            {"sequence", to_json(r.b_prime)}});
        break;
    }
    nlohmann::json j = {{"family", to_string(r.family)},
                        {"ell", r.ell},
                        {"window", {r.window.lo, r.window.hi}},
                        {"verdicts", verdicts},
                        {"notes", r.notes}};
    if (r.fit) {
        const auto f = to_json(*r.fit);
        j["params"] = f["params"];
        j["r2"] = f["r2"];
        j["fit"] = f;
    }
    return j;
}

nlohmann::json to_json(const DominanceReport& r)
{
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : r.violations) v.push_back({{"n", x.n}, {"tail", x.tail}, {"bound", x.bound}});
    return {{"pass", r.pass},
            {"checked", r.checked},
            {"window", {r.window.lo, r.window.hi}},
            {"violations", v}};
}

}  // namespace towerprod
