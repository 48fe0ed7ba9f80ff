// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "towerprod/correlation.hpp"
#include "towerprod/error.hpp"
#include "towerprod/experiment.hpp"
#include "towerprod/product.hpp"
#include "towerprod/rates.hpp"

using namespace towerprod;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

TowerModel geometric_half(std::int64_t R_max)
{
    return build_tower(TailSpec::exponential(std::log(2.0)), R_max, 1e-3);
}

// Models shared between criteria, built on first use.
struct Desk {
    std::optional<ProductModel> double_geometric;
    std::optional<ProductModel> three_five;
    std::optional<ProductModel> exponential;  // 2^-n tails, horizon 512
    std::optional<DpResult> exponential_dp;
    std::optional<ProductModel> polynomial;   // n^-3 tails
    std::optional<DpResult> polynomial_dp;
    std::optional<ProductModel> stretched;    // e^{-sqrt n} tails
    std::optional<DpResult> stretched_dp;

    const ProductModel& dg()
    {
        if (!double_geometric) double_geometric = make_product(geometric_half(64), geometric_half(64), 0.5);
        return *double_geometric;
    }
    const ProductModel& tf()
    {
        if (!three_five) three_five = make_product(oracle::three_five(), oracle::three_five(), 0.5);
        return *three_five;
    }
    const ProductModel& ex()
    {
        if (!exponential) {
            exponential = make_product(geometric_half(512), geometric_half(512), 0.5);
            exponential_dp = product_tail_dp(*exponential, 512);
        }
        return *exponential;
    }
    const ProductModel& poly()
    {
        if (!polynomial) {
            const auto t = build_tower(TailSpec::polynomial(3.0), 16384, 1e-3);
            polynomial = make_product(t, t, 0.5);
            polynomial_dp = product_tail_dp(*polynomial, 2048);
        }
        return *polynomial;
    }
    const ProductModel& st()
    {
        if (!stretched) {
            const auto t = build_tower(TailSpec::stretched(1.0, 0.5), 4096, 1e-3);
            stretched = make_product(t, t, 0.5);
            stretched_dp = product_tail_dp(*stretched, 1024);
        }
        return *stretched;
    }
};

Outcome closed_form(Desk& desk)
{
    const auto t0 = Clock::now();
    const auto& pm = desk.dg();
    const auto dp = product_tail_dp(pm, 64);
    double worst = 0.0;
    bool dp_ok = pm.n0 == 1;
    for (std::int64_t n = 1; n <= 64; ++n) {
        const double d = std::fabs(dp.curve.tail[static_cast<std::size_t>(n)] - std::pow(0.75, static_cast<double>(n)));
        worst = std::max(worst, d);
        dp_ok = dp_ok && d <= 1e-12 + dp.curve.leak_at(n);
    }
    // brute-force enumeration against the same closed form
    const auto bf = brute_force_tail(pm, 10);
    double bf_worst = 0.0;
    for (std::int64_t n = 1; n <= 10; ++n)
        bf_worst = std::max(bf_worst, std::fabs(bf.tail[static_cast<std::size_t>(n)] - std::pow(0.75, static_cast<double>(n))));
    McOptions o;
    o.samples = 100000;
    o.seed = 7;
    o.horizon = 32;
    const auto mc = product_tail_mc(pm, o);
    int outside = 0;
    for (std::int64_t n = 0; n <= 32; ++n) {
        const double exact = std::pow(0.75, static_cast<double>(n));
        const auto k = static_cast<std::size_t>(n);
        if (exact < mc.curve.ci_low[k] || exact > mc.curve.ci_high[k]) ++outside;
    }
    const double secs = seconds_since(t0);
    const bool ok = dp_ok && bf_worst <= 1e-12 && outside == 0 && secs < 10.0;
    return {ok, "n0 = " + std::to_string(pm.n0) + ", max|DP-(3/4)^n| = " + fmt("%.3g", worst) +
                    ", max|brute-(3/4)^n| (n<=10) = " + fmt("%.3g", bf_worst) + ", MC 1e5 seed 7: " +
                    std::to_string(outside) + "/33 outside 3-sigma Wilson bands, " + fmt("%.2f", secs) + " s (< 10)"};
}

Outcome dual_implementation(Desk& desk)
{
    const auto t0 = Clock::now();
    const auto& pm = desk.tf();
    const auto dp = product_tail_dp(pm, 40);
    const auto pmf = brute_force_pmf<Rational>(pm, 40);
    Rational left = 1;
    double worst = 0.0;
    bool exact = true;
    for (std::int64_t n = 0; n <= 40; ++n) {
        left -= pmf[static_cast<std::size_t>(n)];
        const double d = std::fabs(dp.curve.tail[static_cast<std::size_t>(n)] - static_cast<double>(left));
        worst = std::max(worst, d);
        exact = exact && to_rational(dp.curve.tail[static_cast<std::size_t>(n)]) == left;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 60.0,
            "max |DP - rational brute force| over n <= 40 = " + fmt("%.3g", worst) +
                (exact ? " (bit-exact)" : "") + ", " + fmt("%.2f", secs) + " s (< 60)"};
}

Outcome exponential_case(Desk& desk)
{
    desk.ex();
    const auto& curve = desk.exponential_dp->curve;
    const auto fit = fit_rate(curve, TailFamily::Exponential, {16, 128});
    return {fit.r2 >= 0.999 && fit.tau > 0.0,
            "window [16, 128]: tau' = " + fmt("%.6f", fit.tau) + ", R^2 = " + fmt("%.12f", fit.r2)};
}

Outcome polynomial_case(Desk& desk)
{
    const auto t0 = Clock::now();
    desk.poly();
    const auto r = verify_theorem_bound(desk.polynomial_dp->curve, TailSpec::polynomial(3.0), 2, {32, 2048});
    const double secs = seconds_since(t0);
    const auto& c = desk.polynomial_dp->curve;
    return {r.sharper_holds && r.theorem_holds && secs < 300.0,
            "window [32, 2048]: b'_n = tail n^2 bounded " + std::string(r.b_prime.bounded ? "yes" : "no") +
                ", non-increasing over last quarter " + (r.b_prime.last_quarter_nonincreasing ? "yes" : "no") +
                " (b'_2048 = " + fmt("%.4g", c.tail[2048] * 2048.0 * 2048.0) + "), tail n bounded " +
                (r.b.bounded ? "yes" : "no") + ", leak(2048) = " + fmt("%.2g", c.leak_at(2048)) + ", " +
                fmt("%.1f", secs) + " s (< 300)"};
}

Outcome stretched_case(Desk& desk)
{
    desk.st();
    const auto& curve = desk.stretched_dp->curve;
    const auto w = default_fit_window(curve);
    const auto fit = fit_rate(curve, TailFamily::Stretched, w);
    return {fit.theta > 0.0 && fit.theta < 0.5 && fit.tau > 0.0 && fit.r2 >= 0.99,
            "default window [" + std::to_string(w.lo) + ", " + std::to_string(w.hi) + "]: theta' = " +
                fmt("%.2f", fit.theta) + ", tau' = " + fmt("%.4f", fit.tau) + ", R^2 = " + fmt("%.6f", fit.r2)};
}

Outcome key_proposition(Desk& desk)
{
    struct Case {
        const char* name;
        const ProductModel* pm;
        std::int64_t horizon;
    };
    const Case cases[] = {{"double geometric", &desk.dg(), 64},
                          {"(3,5)x(3,5)", &desk.tf(), 40},
                          {"2^-n", &desk.ex(), 512},
                          {"n^-3", &desk.poly(), 2048},
                          {"e^-sqrt(n)", &desk.st(), 1024}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto r = key_prop_check(*c.pm, 8, c.horizon);
        const bool good = r.eps_floor_ok && r.K0_finite && r.domination_ok && r.eps0 >= r.c;
        ok = ok && good;
        detail += std::string(detail.empty() ? "" : "; ") + c.name + ": eps0 = " + fmt("%.4g", r.eps0) +
                  " >= c = " + fmt("%.4g", r.c) + ", K0 = " + fmt("%.4g", r.K0) + ", " +
                  std::to_string(r.checks) + " checks" + (good ? "" : " FAILED");
    }
    return {ok, detail};
}

Outcome bound_domination(Desk& desk)
{
    const auto& poly = desk.poly();
    const auto kp = key_prop_check(poly, 8, 512);
    const auto mb = model_mbar(poly.components);
    const double K = bound_constant(kp.K0);
    const FitWindow pw{2 * poly.n0 + 1, 512};
    std::vector<double> estm(2049, 1.0);
    for (std::int64_t n = pw.lo; n <= pw.hi; ++n)
        estm[static_cast<std::size_t>(n)] = estm_rhs(n, K, kp.eps0, poly.n0, mb).value;
    const auto pd = dominance_check(desk.polynomial_dp->curve, estm, pw);

    const auto& ex = desk.ex();
    const auto ke = key_prop_check(ex, 8, 512);
    const auto me = model_mbar(ex.components);
    const DeltaPolicy policy;
    const auto L = static_cast<std::int64_t>(std::floor(policy.delta * std::pow(512.0, policy.theta_prime)));
    const MbarMaxTable table(me, ex.n0, L, 512);
    std::vector<double> stn(513, 1.0);
    for (std::int64_t n = 64; n <= 512; ++n)
        stn[static_cast<std::size_t>(n)] =
            stnexp_rhs(n, policy.theta_prime, policy.delta, ke.K0, ke.eps0, ex.n0, table).value;
    const auto ed = dominance_check(desk.exponential_dp->curve, stn, {64, 512});
    return {pd.pass && ed.pass,
            "polynomial bound on [" + std::to_string(pw.lo) + ", 512] (K = " + fmt("%.4g", K) + ", eps0 = " +
                fmt("%.4g", kp.eps0) + "): " + std::to_string(pd.violations.size()) + "/" +
                std::to_string(pd.checked) + " violations; super-polynomial bound on [64, 512] (delta = 0.05, theta' = 1): " +
                std::to_string(ed.violations.size()) + "/" + std::to_string(ed.checked) + " violations"};
}

Outcome lemma_sweep(Desk&)
{
    const auto lc = check_lemmas(100);
    std::size_t holding = 0;
    for (const auto& r : lc.sweep) holding += r.holds ? 1 : 0;
    const bool ref = std::fabs(lc.reference_rhs - 0.293050) < 5e-7;
    return {lc.pass && ref && holding == lc.sweep.size() && lc.sweep.size() == 900,
            std::to_string(holding) + "/" + std::to_string(lc.sweep.size()) +
                " sweep points hold; tau = 1, theta = 0.5, n = 16: rhs = " + fmt("%.6f", lc.reference_rhs)};
}

Outcome correlation_bound(Desk&)
{
    const auto a = oracle::three_five();
    const auto obs = tensor(base_indicator(a), base_indicator(a));
    const auto r = product_correlation_check(a, a, obs, obs, 200);
    double margin = 1e300;
    for (const auto& row : r.rows)
        if (row.cor > 0) margin = std::min(margin, row.bound / row.cor);
    return {r.holds && r.max_reconstruction_error <= 1e-12 && r.rows.size() == 201,
            "Cor(n) <= 2C gamma_n (C = 2) for n <= 200: " + std::string(r.holds ? "yes" : "no") +
                " (" + std::to_string(r.failing.size()) + " failing, smallest bound/Cor = " + fmt("%.3g", margin) +
                "), split reconstruction error " + fmt("%.3g", r.max_reconstruction_error) +
                ", split terms within their bounds: " + (r.terms_hold ? "yes" : "no")};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome structural(Desk& desk)
{
    std::string detail;
    bool ok = true;

    // probe traces
    std::int64_t traces = 0, bad = 0;
    for (const ProductModel* pm : {&desk.dg(), &desk.tf()}) {
        McOptions o;
        o.samples = 20000;
        o.seed = 11;
        o.horizon = 40;
        o.keep_traces = 2000;
        const auto mc = product_tail_mc(*pm, o);
        bad += mc.trace_violations;
        for (const auto& t : mc.traces) {
            ++traces;
            std::int64_t prev = 0;
            bool good = t.both_in_base && t.increments_ok && t.active_in_base && t.taus.back() == t.T;
            for (auto tau : t.taus) {
                good = good && tau - prev >= pm->n0;
                prev = tau;
            }
            bad += good ? 0 : 1;
        }
    }
    ok = ok && bad == 0;
    detail += "traces: " + std::to_string(bad) + " violations (" + std::to_string(traces) + " inspected, 40000 run)";

    // cylinders against base occupation
    double cyl = 0.0;
    for (const auto& m : {oracle::three_five(), geometric_half(64), TowerModel::from_columns({{2, 0.3}, {7, 0.7}})}) {
        const auto u = oracle::base_occupation(m, 15);
        for (std::int64_t n = 1; n <= 15; ++n) {
            double mass = 0.0;
            for (const auto& c : enumerate_cylinders(m, n))
                if (c.returns_to_base) mass += c.measure;
            cyl = std::max(cyl, std::fabs(mass - u[static_cast<std::size_t>(n)]));
        }
    }
    ok = ok && cyl <= 1e-12;
    detail += "; cylinder returning mass vs u_n (n <= 15): " + fmt("%.3g", cyl);

    // stationarity
    double res = 0.0;
    for (const auto& m : {oracle::three_five(), geometric_half(512), desk.st().components[0]}) {
        const auto nu = invariant_measure(m);
        res = std::max(res, stationarity_residual(m, nu));
        const auto moved = transition_matrix(m).left(nu);
        for (std::size_t s = 0; s < nu.size(); ++s) res = std::max(res, std::fabs(moved[s] - nu[s]));
    }
    ok = ok && res <= 1e-12;
    detail += "; max |nuP - nu| = " + fmt("%.3g", res);

    // byte-identical artifacts
    const auto cfg = parse_config(R"({
      "components": [
        {"family": "exponential", "tau": 0.6931471805599453, "R_max": 64},
        {"family": "exponential", "tau": 0.6931471805599453, "R_max": 64}],
      "dp": {"horizon": 64},
      "mc": {"samples": 100000, "seed": 7, "horizon": 32},
      "fits": [{"family": "exponential", "window": [16, 64]}]})");
    const auto base = std::filesystem::temp_directory_path() / "towerprod_acceptance";
    std::filesystem::remove_all(base);
    write_artifacts(run(cfg), base / "a");
    write_artifacts(run(cfg), base / "b");
    int compared = 0, differing = 0;
    for (const auto& e : std::filesystem::directory_iterator(base / "a")) {
        const auto ext = e.path().extension();
        if (ext != ".csv" && ext != ".json") continue;
        ++compared;
        if (slurp(e.path()) != slurp(base / "b" / e.path().filename())) ++differing;
    }
    std::filesystem::remove_all(base);
    ok = ok && compared >= 4 && differing == 0;
    detail += "; repeat run: " + std::to_string(differing) + "/" + std::to_string(compared) + " CSV/JSON files differ";
    return {ok, detail};
}

}  // namespace

int main()
{
    const std::pair<const char*, std::function<Outcome(Desk&)>> criteria[] = {
        {"closed-form product tail", closed_form},
        {"dual implementation agreement", dual_implementation},
        {"exponential case", exponential_case},
        {"polynomial case", polynomial_case},
        {"stretched case", stretched_case},
        {"key proposition constants", key_proposition},
        {"bound domination", bound_domination},
        {"stretched-tail lemma sweep", lemma_sweep},
        {"product correlation bound", correlation_bound},
        {"structural invariants", structural},
    };
    Desk desk;
    int failed = 0;
    int k = 0;
    for (const auto& [name, check] : criteria) {
        ++k;
        Outcome o;
        try {
            o = check(desk);
        } catch (const std::exception& e) {
            o = {false, std::string("threw ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/10 criteria pass\n", 10 - failed);
    return failed == 0 ? 0 : 1;
}
