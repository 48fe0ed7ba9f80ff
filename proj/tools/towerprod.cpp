// towerprod: command-line front end over run().

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "towerprod/error.hpp"
#include "towerprod/experiment.hpp"
#include "towerprod/survival.hpp"

using namespace towerprod;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> horizon;
    std::optional<std::int64_t> samples;
};

void add_common(CLI::App* sub, Common& c, bool config_required)
{
    auto* opt = sub->add_option("--config", c.config, "experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", c.out, "output directory (overrides outputs.directory)");
    sub->add_option("--seed", c.seed, "Monte Carlo seed");
    sub->add_option("--horizon", c.horizon, "horizon N")->check(CLI::PositiveNumber);
    sub->add_option("--samples", c.samples, "Monte Carlo samples")->check(CLI::NonNegativeNumber);
}

ExperimentConfig configure(const Common& c)
{
    auto cfg = load_config(c.config);
    if (!c.out.empty()) cfg.outputs.directory = c.out;
    if (c.seed) cfg.mc.seed = *c.seed;
    if (c.horizon) cfg.dp.horizon = *c.horizon;
    if (c.samples) cfg.mc.samples = *c.samples;
    validate(cfg);
    return cfg;
}

int finish(const ExperimentReport& report, const ExperimentConfig& cfg)
{
    write_artifacts(report, cfg.outputs.directory);
    for (const auto& a : report.artifacts)
        std::cout << "wrote " << cfg.outputs.directory << "/" << a.name << "\n";
    for (const auto& note : report.summary["notes"]) std::cout << "note: " << note.get<std::string>() << "\n";
    for (const auto& v : report.verdicts)
        std::cout << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << "\n";
    return report.pass() ? 0 : 2;
}

int tower_cmd(const ExperimentConfig& cfg)
{
    const auto report = run(cfg, StageTower);
    const auto towers = nlohmann::json::parse(report.find("tower.json")->content);
    for (std::size_t i = 0; i < towers.size(); ++i) {
        const auto& t = towers[i];
        std::cout << "component " << i << ": E[R] = " << format_double(t["mean_return"].get<double>())
                  << ", n0 = " << t["n0"] << ", c = " << format_double(t["c"].get<double>())
                  << ", |u_N - 1/E[R]| = " << format_double(t["limit_gap"].get<double>()) << "\n";
    }
    return finish(report, cfg);
}

int oracle_cmd(ExperimentConfig cfg, const Common& c)
{
    cfg.oracle.horizon = c.horizon ? *c.horizon : (cfg.oracle.horizon > 0 ? cfg.oracle.horizon : 40);
    if (!c.horizon) cfg.dp.horizon = std::max(cfg.dp.horizon, cfg.oracle.horizon);
    const auto report = run(cfg, StageTower | StageProduct | StageOracle);
    const auto* a = report.find("oracle.json");
    if (!a) throw Error(ErrorKind::ConfigError, "the oracle needs exactly two components");
    const auto j = nlohmann::json::parse(a->content);
    std::cout << "max |DP - brute force| over n <= " << j["horizon"] << ": "
              << format_double(j["max_abs_diff"].get<double>()) << "\n";
    return finish(report, cfg);
}

int fit_curve(const std::string& path, const std::string& family, const std::vector<std::int64_t>& window,
              const std::string& out)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto curve = curve_from_csv(ss.str());
    const FitWindow w = window.size() == 2 ? FitWindow{window[0], window[1]} : default_fit_window(curve);
    const auto fit = fit_rate(curve, tail_family_from_string(family), w);
    const auto j = to_json(fit);
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
        ExperimentReport r;
        r.artifacts.push_back({"fits.json", nlohmann::json::array({j}).dump(2) + "\n"});
        write_artifacts(r, out);
    }
    return 0;
}

int check_lemmas_cmd(const std::string& out)
{
    const auto lc = check_lemmas();
    std::printf("%6s %6s %8s %22s %22s %s\n", "tau", "theta", "n", "lhs", "rhs", "holds");
    for (const auto& r : lc.sweep)
        std::printf("%6.2f %6.2f %8lld %22.15g %22.15g %s\n", r.tau, r.theta, static_cast<long long>(r.n),
                    r.lhs, r.rhs, r.holds ? "true" : "false");
    std::printf("reference tau=1 theta=0.5 n=16: rhs = %.6f\n", lc.reference_rhs);
    std::printf("%4s %4s %4s %12s %16s %s\n", "n0", "n", "i", "count", "binomial bound", "within");
    for (const auto& c : lc.counts)
        std::printf("%4lld %4lld %4lld %12s %16s %s\n", c["n0"].get<long long>(), c["n"].get<long long>(),
                    c["i"].get<long long>(), c["count"].get<std::string>().c_str(),
                    c["binomial_bound"].get<std::string>().c_str(), c["within_bound"].get<bool>() ? "true" : "false");
    if (!out.empty()) {
        nlohmann::json sweep = nlohmann::json::array();
        for (const auto& r : lc.sweep)
            sweep.push_back({{"tau", r.tau}, {"theta", r.theta}, {"n", r.n}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"holds", r.holds}});
        ExperimentReport r;
        r.artifacts.push_back({"lemmas.json",
                               nlohmann::json{{"sweep", sweep}, {"reference_rhs", lc.reference_rhs},
                                              {"counts", lc.counts}, {"pass", lc.pass}}
                                       .dump(2) + "\n"});
        write_artifacts(r, out);
    }
    std::printf("%s\n", lc.pass ? "all checks hold" : "some checks FAIL");
    return lc.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Simultaneous return times of products of towers"};
    app.require_subcommand(1);

    Common common;
    auto* tower = app.add_subcommand("tower", "build the towers and report renewal diagnostics");
    auto* product = app.add_subcommand("product", "product tail by DP, and Monte Carlo if configured");
    auto* oracle = app.add_subcommand("oracle", "compare the DP with brute-force enumeration");
    auto* fit = app.add_subcommand("fit", "fit a decay family to the product tail or a curve file");
    auto* verify = app.add_subcommand("verify", "check the claimed rates and the explicit bounds");
    auto* correlate = app.add_subcommand("correlate", "product correlation check");
    auto* lemmas = app.add_subcommand("check-lemmas", "built-in lemma sweep and composition counts");
    auto* runall = app.add_subcommand("run", "the whole pipeline");
    for (auto* s : {tower, product, oracle, verify, correlate, runall}) add_common(s, common, true);
    add_common(fit, common, false);
    std::string family, curve_path;
    std::vector<std::int64_t> window;
    fit->add_option("--family", family, "exponential, stretched or polynomial");
    fit->add_option("--curve", curve_path, "survival CSV (n,tail,ci_low,ci_high,leak_bound)");
    fit->add_option("--window", window, "fit window lo hi")->expected(2);
    std::string lemma_out;
    lemmas->add_option("--out", lemma_out, "directory for lemmas.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (lemmas->parsed()) return check_lemmas_cmd(lemma_out);
        if (fit->parsed() && !curve_path.empty()) {
            if (family.empty()) throw Error(ErrorKind::ConfigError, "--family is required with --curve");
            return fit_curve(curve_path, family, window, common.out);
        }
        if (fit->parsed() && common.config.empty())
            throw Error(ErrorKind::ConfigError, "fit needs --config or --curve");
        auto cfg = configure(common);
        if (tower->parsed()) return tower_cmd(cfg);
        if (oracle->parsed()) return oracle_cmd(cfg, common);
        if (product->parsed()) return finish(run(cfg, StageTower | StageProduct | StageMonteCarlo), cfg);
        if (fit->parsed()) {
            if (!family.empty()) {
                FitConfig fc{tail_family_from_string(family), std::nullopt};
                if (window.size() == 2) fc.window = FitWindow{window[0], window[1]};
                cfg.fits = {fc};
            }
            return finish(run(cfg, StageTower | StageProduct | StageFit), cfg);
        }
        if (verify->parsed()) return finish(run(cfg, StageTower | StageProduct | StageVerify | StageBounds), cfg);
        if (correlate->parsed()) {
            cfg.correlation.enabled = true;
            if (common.horizon) cfg.correlation.N = *common.horizon;
            return finish(run(cfg, StageTower | StageCorrelate), cfg);
        }
        return finish(run(cfg), cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
