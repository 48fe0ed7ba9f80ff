#include "towerprod/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "towerprod/correlation.hpp"
#include "towerprod/error.hpp"
#include "towerprod/product.hpp"
#include "towerprod/tower.hpp"

namespace towerprod {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what)
{
    throw Error(ErrorKind::ConfigError, path + ": " + what);
}

std::string message_of(const Error& e)
{
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    const std::string what = e.what();
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

[[noreturn]] void rethrow_with(const Error& e, const std::string& context)
{
    throw Error(e.kind(), context + ": " + message_of(e), e.value());
}

// Object reader that remembers which keys were consumed.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* get(const std::string& key)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void done() const
    {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) config_error(at(item.key()), "unknown field");
    }

    void read(const std::string& key, std::int64_t& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_number_integer()) config_error(at(key), "expected an integer");
            out = v->get<std::int64_t>();
        }
    }
    void read(const std::string& key, double& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_number()) config_error(at(key), "expected a number");
            out = v->get<double>();
        }
    }
    void read(const std::string& key, bool& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) config_error(at(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void read(const std::string& key, std::string& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_string()) config_error(at(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void read(const std::string& key, std::optional<double>& out)
    {
        if (get(key)) {
            double x = 0.0;
            read(key, x);
            out = x;
        }
    }
    void read(const std::string& key, std::optional<std::uint64_t>& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_number_unsigned()) config_error(at(key), "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void read(const std::string& key, std::optional<FitWindow>& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() ||
                !(*v)[1].is_number_integer())
                config_error(at(key), "expected [lo, hi] integers");
            const FitWindow w{(*v)[0].get<std::int64_t>(), (*v)[1].get<std::int64_t>()};
            if (w.lo < 1 || w.hi < w.lo) config_error(at(key), "window needs 1 <= lo <= hi");
            out = w;
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json window_json(const std::optional<FitWindow>& w)
{
    if (!w) return nullptr;
    return json::array({w->lo, w->hi});
}

TailFamily read_family(const json* v, const std::string& path)
{
    if (!v || !v->is_string()) config_error(path, "expected a family name");
    try {
        return tail_family_from_string(v->get<std::string>());
    } catch (const Error& e) {
        config_error(path, message_of(e));
    }
}

ComponentConfig read_component(const json& j, const std::string& path)
{
    Fields f(j, path);
    const TailFamily family = read_family(f.get("family"), f.at("family"));
    double tau = 1.0, theta = 0.5, alpha = 2.0, scale = 1.0;
    ComponentConfig c;
    f.read("R_max", c.R_max);
    try {
        switch (family) {
        case TailFamily::Exponential:
            f.read("tau", tau);
            c.tail = TailSpec::exponential(tau);
            break;
        case TailFamily::Stretched:
            f.read("tau", tau);
            f.read("theta", theta);
            c.tail = TailSpec::stretched(tau, theta);
            break;
        case TailFamily::Polynomial:
            f.read("alpha", alpha);
            f.read("scale", scale);
            c.tail = TailSpec::polynomial(alpha, scale);
            break;
        case TailFamily::Explicit: {
            const json* v = f.get("values");
            if (!v || !v->is_array()) config_error(f.at("values"), "expected a list of numbers");
            std::vector<double> values;
            for (const auto& x : *v) {
                if (!x.is_number()) config_error(f.at("values"), "expected a list of numbers");
                values.push_back(x.get<double>());
            }
            c.tail = TailSpec::explicit_values(std::move(values));
            break;
        }
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        config_error(path, message_of(e));
    }
    if (c.R_max < 2) config_error(f.at("R_max"), "must be at least 2");
    f.done();
    return c;
}

json component_json(const ComponentConfig& c)
{
    json j;
    j["family"] = to_string(c.tail.family());
    switch (c.tail.family()) {
    case TailFamily::Exponential: j["tau"] = c.tail.tau(); break;
    case TailFamily::Stretched:
        j["tau"] = c.tail.tau();
        j["theta"] = c.tail.theta();
        break;
    case TailFamily::Polynomial:
        j["alpha"] = c.tail.alpha();
        j["scale"] = c.tail.scale();
        break;
    case TailFamily::Explicit: j["values"] = c.tail.values(); break;
    }
    j["R_max"] = c.R_max;
    return j;
}

}  // namespace

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig c;
    Fields root(j, "");

    const json* comps = root.get("components");
    if (!comps || !comps->is_array() || comps->empty())
        config_error("components", "expected a non-empty list");
    for (std::size_t i = 0; i < comps->size(); ++i)
        c.components.push_back(read_component((*comps)[i], "components[" + std::to_string(i) + "]"));

    if (const json* v = root.get("n0_policy")) {
        Fields f(*v, "n0_policy");
        f.read("fraction", c.n0_policy.fraction);
        f.read("horizon", c.n0_policy.horizon);
        f.done();
    }
    if (const json* v = root.get("dp")) {
        Fields f(*v, "dp");
        f.read("horizon", c.dp.horizon);
        f.read("leak_budget", c.dp.leak_budget);
        f.read("memory_budget", c.dp.memory_budget);
        f.read("fold_horizon", c.dp.fold_horizon);
        f.done();
    }
    if (const json* v = root.get("mc")) {
        Fields f(*v, "mc");
        f.read("samples", c.mc.samples);
        f.read("seed", c.mc.seed);
        f.read("cap", c.mc.cap);
        f.read("horizon", c.mc.horizon);
        f.read("z", c.mc.z);
        f.done();
    }
    if (const json* v = root.get("oracle")) {
        Fields f(*v, "oracle");
        f.read("horizon", c.oracle.horizon);
        f.read("max_nodes", c.oracle.max_nodes);
        f.done();
    }
    if (const json* v = root.get("fits")) {
        if (!v->is_array()) config_error("fits", "expected a list");
        for (std::size_t i = 0; i < v->size(); ++i) {
            const std::string path = "fits[" + std::to_string(i) + "]";
            Fields f((*v)[i], path);
            FitConfig fit;
            fit.family = read_family(f.get("family"), f.at("family"));
            if (fit.family == TailFamily::Explicit) config_error(f.at("family"), "explicit is not a decay family");
            f.read("window", fit.window);
            f.done();
            c.fits.push_back(fit);
        }
    }
    if (const json* v = root.get("verify")) {
        Fields f(*v, "verify");
        f.read("enabled", c.verify.enabled);
        f.read("window", c.verify.window);
        f.done();
    }
    if (const json* v = root.get("bounds")) {
        Fields f(*v, "bounds");
        f.read("enabled", c.bounds.enabled);
        f.read("i_max", c.bounds.i_max);
        f.read("delta", c.bounds.delta);
        f.read("theta_prime", c.bounds.theta_prime);
        f.read("window", c.bounds.window);
        f.done();
    }
    if (const json* v = root.get("correlation")) {
        Fields f(*v, "correlation");
        f.read("enabled", c.correlation.enabled);
        f.read("N", c.correlation.N);
        f.read("observables", c.correlation.observables);
        f.done();
    }
    if (const json* v = root.get("outputs")) {
        Fields f(*v, "outputs");
        f.read("directory", c.outputs.directory);
        f.done();
    }
    root.done();
    validate(c);
    return c;
}

void validate(const ExperimentConfig& c)
{
    if (c.components.empty()) config_error("components", "at least one component is required");
    if (!(c.n0_policy.fraction > 0.0 && c.n0_policy.fraction < 1.0))
        config_error("n0_policy.fraction", "must lie in (0, 1)");
    if (c.n0_policy.horizon < 0) config_error("n0_policy.horizon", "must be >= 0");
    if (c.dp.horizon < 1) config_error("dp.horizon", "must be >= 1");
    if (!(c.dp.leak_budget > 0.0 && c.dp.leak_budget <= 1e-3))
        config_error("dp.leak_budget", "must lie in (0, 1e-3]");
    if (!(c.dp.memory_budget > 0.0)) config_error("dp.memory_budget", "must be positive");
    if (c.dp.fold_horizon < 1) config_error("dp.fold_horizon", "must be >= 1");
    if (c.mc.samples < 0) config_error("mc.samples", "must be >= 0");
    if (c.mc.samples > 0 && !c.mc.seed) config_error("mc.seed", "required when mc.samples > 0");
    if (c.mc.cap < 1) config_error("mc.cap", "must be >= 1");
    if (c.mc.horizon < 0) config_error("mc.horizon", "must be >= 0");
    if (!(c.mc.z > 0.0)) config_error("mc.z", "must be positive");
    if (c.oracle.horizon < 0) config_error("oracle.horizon", "must be >= 0");
    if (c.oracle.max_nodes < 1) config_error("oracle.max_nodes", "must be >= 1");
    if (c.bounds.i_max < 2) config_error("bounds.i_max", "must be >= 2");
    if (!(c.bounds.delta > 0.0)) config_error("bounds.delta", "must be positive");
    if (c.bounds.theta_prime && !(*c.bounds.theta_prime > 0.0 && *c.bounds.theta_prime <= 1.0))
        config_error("bounds.theta_prime", "must lie in (0, 1]");
    if (c.correlation.N < 0) config_error("correlation.N", "must be >= 0");
    if (c.correlation.observables != "base_indicator")
        config_error("correlation.observables", "only \"base_indicator\" is supported");
    if (c.outputs.directory.empty()) config_error("outputs.directory", "must not be empty");
}

ExperimentConfig parse_config(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        config_error("<root>", e.what());
    }
    return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

json to_json(const ExperimentConfig& c)
{
    json j;
    j["components"] = json::array();
    for (const auto& comp : c.components) j["components"].push_back(component_json(comp));
    j["n0_policy"] = {{"fraction", c.n0_policy.fraction}, {"horizon", c.n0_policy.horizon}};
    j["dp"] = {{"horizon", c.dp.horizon},
               {"leak_budget", c.dp.leak_budget},
               {"memory_budget", c.dp.memory_budget},
               {"fold_horizon", c.dp.fold_horizon}};
    j["mc"] = {{"samples", c.mc.samples},
               {"seed", c.mc.seed ? json(*c.mc.seed) : json(nullptr)},
               {"cap", c.mc.cap},
               {"horizon", c.mc.horizon},
               {"z", c.mc.z}};
    j["oracle"] = {{"horizon", c.oracle.horizon}, {"max_nodes", c.oracle.max_nodes}};
    j["fits"] = json::array();
    for (const auto& f : c.fits)
        j["fits"].push_back({{"family", to_string(f.family)}, {"window", window_json(f.window)}});
    j["verify"] = {{"enabled", c.verify.enabled}, {"window", window_json(c.verify.window)}};
    j["bounds"] = {{"enabled", c.bounds.enabled},
                   {"i_max", c.bounds.i_max},
                   {"delta", c.bounds.delta},
                   {"theta_prime", c.bounds.theta_prime ? json(*c.bounds.theta_prime) : json(nullptr)},
                   {"window", window_json(c.bounds.window)}};
    j["correlation"] = {{"enabled", c.correlation.enabled},
                        {"N", c.correlation.N},
                        {"observables", c.correlation.observables}};
    j["outputs"] = {{"directory", c.outputs.directory}};
    return j;
}

std::string serialize_config(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

bool ExperimentReport::pass() const
{
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

const Artifact* ExperimentReport::find(const std::string& name) const
{
    for (const auto& a : artifacts)
        if (a.name == name) return &a;
    return nullptr;
}

namespace {

constexpr std::int64_t kNuStateLimit = 100000;
constexpr std::int64_t kCorrelationStateLimit = 4000000;

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Slowest-decaying spec when every component shares a family.
std::optional<TailSpec> shared_family_spec(const ExperimentConfig& c)
{
    const TailFamily fam = c.components.front().tail.family();
    const TailSpec* best = &c.components.front().tail;
    for (const auto& comp : c.components) {
        const TailSpec& t = comp.tail;
        if (t.family() != fam || fam == TailFamily::Explicit) return std::nullopt;
        switch (fam) {
        case TailFamily::Exponential:
            if (t.tau() < best->tau()) best = &t;
            break;
        case TailFamily::Stretched:
            if (t.theta() < best->theta() || (t.theta() == best->theta() && t.tau() < best->tau()))
                best = &t;
            break;
        case TailFamily::Polynomial:
            if (t.alpha() < best->alpha()) best = &t;
            break;
        case TailFamily::Explicit: break;
        }
    }
    return *best;
}

SurvivalCurve return_time_curve(const TowerModel& m, std::int64_t N)
{
    SurvivalCurve c;
    c.source = CurveSource::ClosedForm;
    for (std::int64_t n = 0; n <= N; ++n) {
        c.tail.push_back(m.survival(std::min(n, m.max_return())));
        c.leak.push_back(n >= m.leak_onset() ? m.leak() : 0.0);
    }
    return c;
}

FitWindow clamp_window(const std::optional<FitWindow>& w, const SurvivalCurve& curve)
{
    FitWindow out = w ? *w : default_fit_window(curve);
    out.hi = std::min(out.hi, curve.horizon());
    return out;
}

json band_check(const SurvivalCurve& exact, const SurvivalCurve& mc, std::int64_t hi, bool& pass)
{
    json fails = json::array();
    pass = true;
    const std::int64_t top = std::min({hi, exact.horizon(), mc.horizon()});
    for (std::int64_t n = 0; n <= top; ++n) {
        const auto k = static_cast<std::size_t>(n);
        const double leak = exact.leak_at(n);
        if (exact.tail[k] < mc.ci_low[k] - leak || exact.tail[k] > mc.ci_high[k] + leak) {
            pass = false;
            fails.push_back({{"n", n}, {"exact", exact.tail[k]}, {"ci_low", mc.ci_low[k]}, {"ci_high", mc.ci_high[k]}});
        }
    }
    return {{"checked", top + 1}, {"outside", fails}};
}

void add(ExperimentReport& r, std::string name, bool pass, std::string detail)
{
    r.verdicts.push_back({std::move(name), pass, std::move(detail)});
}

std::string fmt(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace

ExperimentReport run(const ExperimentConfig& cfg, unsigned stages)
{
    validate(cfg);
    ExperimentReport rep;
    json bounds;
    const std::size_t ell = cfg.components.size();
    const std::int64_t N = cfg.dp.horizon;
    json notes = json::array();

    std::vector<TowerModel> towers;
    for (std::size_t i = 0; i < ell; ++i) {
        try {
            towers.push_back(build_tower(cfg.components[i].tail, cfg.components[i].R_max, cfg.dp.leak_budget));
        } catch (const Error& e) {
            rethrow_with(e, "components[" + std::to_string(i) + "]");
        }
    }

    // towers: renewal diagnostics and mixing windows
    json tower_section = json::array();
    for (std::size_t i = 0; i < ell; ++i) {
        const auto& m = towers[i];
        const std::int64_t horizon =
            cfg.n0_policy.horizon > 0 ? cfg.n0_policy.horizon : default_mixing_horizon(m);
        MixingWindow w;
        try {
            w = select_n0(m, cfg.n0_policy.fraction, horizon);
        } catch (const Error& e) {
            rethrow_with(e, "components[" + std::to_string(i) + "]");
        }
        json t = model_summary(m, w);
        t["renewal"] = renewal_probabilities(m, N);
        if (m.state_count() <= kNuStateLimit) {
            const auto nu = invariant_measure(m);
            const double residual = stationarity_residual(m, nu);
            t["invariant_measure"] = nu;
            t["stationarity_residual"] = residual;
            if (ell == 1) add(rep, "stationarity", residual <= 1e-12, "max |nuP - nu| = " + fmt(residual));
        } else {
            t["invariant_measure"] = nullptr;
            notes.push_back("components[" + std::to_string(i) + "]: invariant measure omitted, " +
                            std::to_string(m.state_count()) + " states");
        }
        tower_section.push_back(std::move(t));
    }
    rep.artifacts.push_back({"tower.json", dump(tower_section)});

    const auto family_spec = shared_family_spec(cfg);
    std::optional<double> poly_alpha;
    for (const auto& comp : cfg.components)
        if (comp.tail.family() == TailFamily::Polynomial)
            poly_alpha = poly_alpha ? std::min(*poly_alpha, comp.tail.alpha()) : comp.tail.alpha();

    // the survival curve every later stage reads
    SurvivalCurve curve;
    std::optional<ProductModel> pm;
    std::optional<FoldResult> folded;
    std::vector<PlotSeries> plot;
    const bool product_stage = (stages & (StageProduct | StageFit | StageVerify | StageBounds |
                                          StageMonteCarlo | StageOracle)) != 0;
    if (ell == 1) {
        curve = return_time_curve(towers[0], N);
        notes.push_back("one component: tower-only run, no product section");
    } else if (product_stage) {
        if (poly_alpha) require_integrable(*poly_alpha, ell);
        if (ell == 2) {
            pm = make_product(towers[0], towers[1], cfg.n0_policy.fraction, cfg.n0_policy.horizon);
            curve = product_tail_dp(*pm, N, cfg.dp.memory_budget).curve;
            bounds["product"] = {{"n0", pm->n0}, {"c", pm->c}};
        } else {
            folded = fold(towers, FoldPolicy{cfg.n0_policy.fraction, cfg.dp.fold_horizon,
                                             cfg.dp.leak_budget, poly_alpha});
            if (N > cfg.dp.fold_horizon)
                config_error("dp.horizon", "must not exceed dp.fold_horizon with three or more components");
            curve = return_time_curve(folded->model, N);
            curve.source = CurveSource::Dp;
            json stages_n0 = json::array();
            for (const auto& s : folded->stages) stages_n0.push_back({{"n0", s.n0}, {"c", s.c}});
            bounds["product"] = {{"fold_stages", stages_n0}, {"fold_leak", folded->leak}};
        }
    }
    if (!curve.tail.empty()) {
        rep.artifacts.push_back({"survival.csv", to_csv(curve)});
        plot.push_back({ell == 1 ? "P(R > n)" : "P(T > n)", curve.tail, "#1f4e9c"});
    }

    // closed form for memoryless pairs with n0 = 1
    if (pm && pm->n0 == 1 && family_spec && family_spec->family() == TailFamily::Exponential) {
        const double q = (1.0 - std::exp(-cfg.components[0].tail.tau())) *
                         (1.0 - std::exp(-cfg.components[1].tail.tau()));
        double worst = 0.0;
        bool ok = true;
        for (std::int64_t n = 1; n <= N; ++n) {
            const double d = std::fabs(curve.tail[static_cast<std::size_t>(n)] - std::pow(1.0 - q, static_cast<double>(n)));
            worst = std::max(worst, d);
            ok = ok && d <= 1e-12 + curve.leak_at(n);
        }
        bounds["closed_form"] = {{"formula", "(1 - q1 q2)^n"}, {"q1q2", q}, {"max_abs_diff", worst}, {"pass", ok}};
        add(rep, "closed_form", ok, "max |DP - (1-q1q2)^n| = " + fmt(worst));
    }

    if ((stages & StageMonteCarlo) && cfg.mc.samples > 0 && ell >= 2) {
        SurvivalCurve mc;
        json section;
        if (pm) {
            McOptions o;
            o.samples = cfg.mc.samples;
            o.horizon = N;
            o.seed = *cfg.mc.seed;
            o.cap = cfg.mc.cap;
            o.z = cfg.mc.z;
            auto res = product_tail_mc(*pm, o);
            mc = std::move(res.curve);
            section["trace_violations"] = res.trace_violations;
            section["min_increment"] = res.min_increment;
            add(rep, "mc_traces", res.trace_violations == 0,
                std::to_string(res.trace_violations) + " traces break the probe invariants");
        } else {
            mc = nested_return_mc(*folded, towers, cfg.mc.samples, N, *cfg.mc.seed);
        }
        bool ok = false;
        section["bands"] = band_check(curve, mc, cfg.mc.horizon, ok);
        section["samples"] = cfg.mc.samples;
        section["seed"] = *cfg.mc.seed;
        section["z"] = cfg.mc.z;
        bounds["monte_carlo"] = section;
        add(rep, "mc_bands", ok, "exact tail inside the Monte Carlo bands up to n = " + std::to_string(std::min(cfg.mc.horizon, N)));
        rep.artifacts.push_back({"survival_mc.csv", to_csv(mc)});
        plot.push_back({"MC low", mc.ci_low, "#999999"});
        plot.push_back({"MC high", mc.ci_high, "#999999"});
    }

    if ((stages & StageOracle) && cfg.oracle.horizon > 0 && pm) {
        const std::int64_t H = cfg.oracle.horizon;
        const auto bf = brute_force_tail(*pm, H, cfg.oracle.max_nodes);
        const auto dp = H <= N ? curve : product_tail_dp(*pm, H, cfg.dp.memory_budget).curve;
        double worst = 0.0;
        bool ok = true;
        for (std::int64_t n = 0; n <= H; ++n) {
            const auto k = static_cast<std::size_t>(n);
            const double d = std::fabs(dp.tail[k] - bf.tail[k]);
            worst = std::max(worst, d);
            ok = ok && d <= 1e-12 + dp.leak_at(n);
        }
        rep.artifacts.push_back({"oracle.json", dump({{"horizon", H}, {"max_abs_diff", worst}, {"pass", ok}})});
        bounds["oracle"] = {{"horizon", H}, {"max_abs_diff", worst}, {"pass", ok}};
        add(rep, "oracle", ok, "max |DP - brute force| = " + fmt(worst));
    }

    if ((stages & StageFit) && !curve.tail.empty() && !cfg.fits.empty()) {
        json fits = json::array();
        for (std::size_t i = 0; i < cfg.fits.size(); ++i) {
            try {
                fits.push_back(to_json(fit_rate(curve, cfg.fits[i].family, clamp_window(cfg.fits[i].window, curve))));
            } catch (const Error& e) {
                rethrow_with(e, "fits[" + std::to_string(i) + "]");
            }
        }
        rep.artifacts.push_back({"fits.json", dump(fits)});
    }

    if ((stages & StageVerify) && cfg.verify.enabled && ell >= 2 && !curve.tail.empty()) {
        if (!family_spec) {
            notes.push_back("verify skipped: components do not share a decay family");
        } else {
            TheoremReport tr;
            try {
                tr = verify_theorem_bound(curve, *family_spec, static_cast<std::int64_t>(ell),
                                          clamp_window(cfg.verify.window, curve));
            } catch (const Error& e) {
                rethrow_with(e, "verify");
            }
            bounds["theorem"] = to_json(tr);
            add(rep, "theorem", tr.theorem_holds, "rate claimed for l = " + std::to_string(ell));
            if (tr.family == TailFamily::Polynomial)
                add(rep, "sharper", tr.sharper_holds, "tail n^(alpha-1) bounded and non-increasing");
        }
    }

    if ((stages & StageBounds) && cfg.bounds.enabled && pm) {
        const auto kp = key_prop_check(*pm, cfg.bounds.i_max, N);
        bounds["key_prop"] = {{"eps0", kp.eps0},
                              {"K0", kp.K0},
                              {"c", kp.c},
                              {"eps_floor_ok", kp.eps_floor_ok},
                              {"K0_finite", kp.K0_finite},
                              {"domination_ok", kp.domination_ok},
                              {"states", kp.states},
                              {"checks", kp.checks}};
        const bool kp_ok = kp.eps_floor_ok && kp.K0_finite && kp.domination_ok;
        add(rep, "key_prop", kp_ok, "eps0 = " + fmt(kp.eps0) + ", K0 = " + fmt(kp.K0));
        const auto mb = model_mbar(pm->components);
        FitWindow w = cfg.bounds.window.value_or(FitWindow{2 * pm->n0 + 1, N});
        w.hi = std::min(w.hi, N);
        std::vector<double> rhs(static_cast<std::size_t>(N + 1), 1.0);
        if (w.lo <= w.hi && kp.K0_finite) {
            if (poly_alpha || !family_spec) {
                const double K = bound_constant(kp.K0);
                for (std::int64_t n = w.lo; n <= w.hi; ++n)
                    rhs[static_cast<std::size_t>(n)] = estm_rhs(n, K, kp.eps0, pm->n0, mb).value;
                const auto dom = dominance_check(curve, rhs, w);
                bounds["estm"] = {{"K", K}, {"dominance", to_json(dom)}};
                add(rep, "estm_dominance", dom.pass, std::to_string(dom.violations.size()) + " violations");
                plot.push_back({"polynomial bound", rhs, "#c0392b"});
            } else {
                double theta_prime = 1.0;
                if (family_spec->family() == TailFamily::Stretched) theta_prime = family_spec->theta() / 2;
                theta_prime = cfg.bounds.theta_prime.value_or(theta_prime);
                const auto L_max = static_cast<std::int64_t>(
                    std::floor(cfg.bounds.delta * std::pow(static_cast<double>(w.hi), theta_prime)));
                const MbarMaxTable table(mb, pm->n0, std::max<std::int64_t>(L_max, 1), w.hi);
                for (std::int64_t n = w.lo; n <= w.hi; ++n)
                    rhs[static_cast<std::size_t>(n)] =
                        stnexp_rhs(n, theta_prime, cfg.bounds.delta, kp.K0, kp.eps0, pm->n0, table).value;
                const auto dom = dominance_check(curve, rhs, w);
                bounds["stnexp"] = {{"delta", cfg.bounds.delta}, {"theta_prime", theta_prime}, {"dominance", to_json(dom)}};
                add(rep, "stnexp_dominance", dom.pass, std::to_string(dom.violations.size()) + " violations");
                plot.push_back({"super-polynomial bound", rhs, "#c0392b"});
            }
        }
    }

    if ((stages & StageCorrelate) && cfg.correlation.enabled) {
        if (ell != 2) {
            notes.push_back("correlation skipped: the product check needs exactly two components");
        } else if (towers[0].state_count() * towers[1].state_count() > kCorrelationStateLimit) {
            throw Error(ErrorKind::StateSpaceBound, "correlation: product chain has too many states",
                        static_cast<double>(towers[0].state_count() * towers[1].state_count()));
        } else {
            const auto obs = tensor(base_indicator(towers[0]), base_indicator(towers[1]));
            const auto cr = product_correlation_check(towers[0], towers[1], obs, obs, cfg.correlation.N);
            rep.artifacts.push_back({"correlation.csv", to_csv(cr)});
            json failing = cr.failing;
            bounds["correlation"] = {{"C", cr.C},
                                     {"N", cfg.correlation.N},
                                     {"holds", cr.holds},
                                     {"terms_hold", cr.terms_hold},
                                     {"max_reconstruction_error", cr.max_reconstruction_error},
                                     {"failing", failing}};
            add(rep, "correlation_bound", cr.holds, "Cor(n) <= 2 C gamma_n for n <= " + std::to_string(cfg.correlation.N));
            add(rep, "correlation_split", cr.terms_hold && cr.max_reconstruction_error <= 1e-12,
                "split reconstruction error " + fmt(cr.max_reconstruction_error));
        }
    }

    json verdicts = json::array();
    for (const auto& v : rep.verdicts) verdicts.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    bounds["verdicts"] = verdicts;
    bounds["notes"] = notes;
    bounds["components"] = ell;
    bounds["rng"] = "mt19937_64 per replica, seeded by seed_seq over four splitmix64 outputs";
    rep.artifacts.push_back({"bounds.json", dump(bounds)});
    if (!plot.empty()) rep.artifacts.push_back({"survival.svg", survival_svg(plot, 0, curve.horizon())});

    rep.summary = {{"verdicts", verdicts}, {"notes", notes}, {"pass", rep.pass()}};
    json names = json::array();
    for (const auto& a : rep.artifacts) names.push_back(a.name);
    rep.summary["artifacts"] = names;
    return rep;
}

void write_artifacts(const ExperimentReport& report, const std::filesystem::path& directory)
{
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    try {
        fs::create_directories(directory);
        for (const auto& a : report.artifacts) {
            const fs::path final_path = directory / a.name;
            const fs::path tmp = directory / (a.name + ".tmp");
            written.push_back(tmp);
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                out.write(a.content.data(), static_cast<std::streamsize>(a.content.size()));
                out.close();
                if (!out) throw Error(ErrorKind::ConfigError, "cannot write " + tmp.string());
            }
            fs::rename(tmp, final_path);
            written.back() = final_path;
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
        throw;
    }
}

std::string survival_svg(const std::vector<PlotSeries>& series, std::int64_t lo, std::int64_t hi)
{
    constexpr double W = 720, H = 440, left = 70, right = 180, top = 20, bottom = 50;
    double ymin = 1.0;
    for (const auto& s : series)
        for (std::int64_t n = lo; n <= hi && n < static_cast<std::int64_t>(s.y.size()); ++n)
            if (s.y[static_cast<std::size_t>(n)] > 0.0) ymin = std::min(ymin, s.y[static_cast<std::size_t>(n)]);
    const double dmin = std::floor(std::log10(std::max(ymin, 1e-300)));
    const double dmax = 0.0;
    const double span = std::max(dmax - dmin, 1.0);
    const double xspan = static_cast<double>(std::max<std::int64_t>(hi - lo, 1));
    const auto X = [&](std::int64_t n) { return left + (W - left - right) * static_cast<double>(n - lo) / xspan; };
    const auto Y = [&](double y) {
        const double d = std::clamp(std::log10(y), dmin, dmax);
        return top + (H - top - bottom) * (dmax - d) / span;
    };
    char buf[160];
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"black\"/>\n",
                  left, top, W - left - right, H - top - bottom);
    o << buf;
    const int step = std::max(1, static_cast<int>(span / 10));
    for (int d = static_cast<int>(dmin); d <= 0; d += step) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"end\">1e%d</text>\n",
                      left - 6, Y(std::pow(10.0, d)) + 4, d);
        o << buf;
    }
    for (int k = 0; k <= 4; ++k) {
        const std::int64_t n = lo + (hi - lo) * k / 4;
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">%lld</text>\n",
                      X(n), H - bottom + 16, static_cast<long long>(n));
        o << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\">n</text>\n",
                  left + (W - left - right) / 2, H - 12);
    o << buf;
    int row = 0;
    for (const auto& s : series) {
        bool any = false;
        std::string pts;
        const auto flush = [&] {
            if (!pts.empty())
                o << "<polyline fill=\"none\" stroke=\"" << s.colour << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
            pts.clear();
        };
        for (std::int64_t n = lo; n <= hi && n < static_cast<std::int64_t>(s.y.size()); ++n) {
            const double y = s.y[static_cast<std::size_t>(n)];
            if (!(y > 0.0)) {
                flush();
                continue;
            }
            any = true;
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", pts.empty() ? "" : " ", X(n), Y(std::min(y, 1.0)));
            pts += buf;
        }
        flush();
        if (!any) continue;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"2\"/>"
                      "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\">",
                      W - right + 10, top + 10 + 16.0 * row, W - right + 30, top + 10 + 16.0 * row,
                      s.colour.c_str(), W - right + 35, top + 14 + 16.0 * row);
        o << buf << s.label << "</text>\n";
        ++row;
    }
    o << "</svg>\n";
    return o.str();
}

LemmaCheck check_lemmas(std::int64_t points)
{
    LemmaCheck out;
    out.pass = true;
    for (double tau : {0.5, 1.0, 2.0})
        for (double theta : {0.3, 0.5, 0.8}) {
            const auto rows = stretched_lemma_sweep(tau, theta, points);
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const auto& r = rows[k];
                out.sweep.push_back({tau, theta, r.threshold + static_cast<std::int64_t>(k), r.lhs, r.rhs, r.holds});
                out.pass = out.pass && r.holds;
            }
        }
    out.reference_rhs = stretched_tail_lemma(1.0, 0.5, 16).rhs;
    out.pass = out.pass && std::fabs(out.reference_rhs - 16.0 * std::exp(-4.0)) < 5e-7;

    out.counts = json::array();
    for (std::int64_t n0 : {1, 2})
        for (std::int64_t n : {8, 12, 16, 20})
            for (std::int64_t i = 1; i <= 5; ++i) {
                const auto cc = compositions_count(n, i, n0);
                out.counts.push_back({{"n", n},
                                      {"i", i},
                                      {"n0", n0},
                                      {"count", cc.count.str()},
                                      {"binomial_bound", cc.binomial_bound.str()},
                                      {"within_bound", cc.within_bound}});
                out.pass = out.pass && cc.within_bound;
            }
    return out;
}

}  // namespace towerprod
