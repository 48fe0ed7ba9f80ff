#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "towerprod/error.hpp"
#include "towerprod/experiment.hpp"
#include "towerprod/survival.hpp"

using namespace towerprod;
namespace fs = std::filesystem;

namespace {

const char* kDoubleGeometric = R"({
  "components": [
    {"family": "exponential", "tau": 0.6931471805599453, "R_max": 64},
    {"family": "exponential", "tau": 0.6931471805599453, "R_max": 64}
  ],
  "dp": {"horizon": 64},
  "mc": {"samples": 20000, "seed": 7, "horizon": 32},
  "fits": [{"family": "exponential", "window": [16, 64]}]
})";

std::string config_error_message(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) return e.what();
        return std::string("wrong kind: ") + e.what();
    }
    return "no error";
}

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("towerprod_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config round trip")
{
    auto c = parse_config(kDoubleGeometric);
    CHECK(c.components.size() == 2);
    CHECK(c.mc.seed == 7u);
    CHECK(c.fits[0].window == FitWindow{16, 64});
    CHECK(parse_config(serialize_config(c)) == c);

    c.components.push_back({TailSpec::stretched(0.3, 0.45), 4096});
    c.components.push_back({TailSpec::polynomial(3.0, 0.7), 1000});
    c.components.push_back({TailSpec::explicit_values({1, 1, 0.4, 1.0 / 3.0, 0}), 6});
    c.n0_policy = {0.1 + 0.2, 77};
    c.dp.leak_budget = 1.0 / 3e4;
    c.bounds.theta_prime = 0.123456789012345678;
    c.bounds.window = FitWindow{5, 9};
    c.verify.window.reset();
    c.correlation = {true, 17, "base_indicator"};
    c.outputs.directory = "some dir/ü";
    c.mc.seed = 18446744073709551615ull;
    const auto text = serialize_config(c);
    CHECK(parse_config(text) == c);
    CHECK(serialize_config(parse_config(text)) == text);
}

TEST_CASE("config errors name the field")
{
    CHECK(config_error_message("{").find("<root>") != std::string::npos);
    CHECK(config_error_message(R"({"components": []})").find("components") != std::string::npos);
    const std::string one = R"({"family": "exponential", "tau": 1, "R_max": 8})";
    CHECK(config_error_message(R"({"components": [)" + one + R"(, {"family": "exponential", "tau": -1}]})")
              .find("components[1]") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "dp": {"horizon": 1.5}})")
              .find("dp.horizon") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "dp": {"leak_budget": 0.01}})")
              .find("dp.leak_budget") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "dp": {"leak_budget": 0}})")
              .find("dp.leak_budget") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "mc": {"samples": 10}})")
              .find("mc.seed") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "mc": {"sample": 10}})")
              .find("mc.sample: unknown field") != std::string::npos);
    CHECK(config_error_message(R"({"components": [{"family": "weibull", "R_max": 8}]})")
              .find("components[0].family") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "fits": [{"family": "polynomial", "window": [9, 3]}]})")
              .find("fits[0].window") != std::string::npos);
    CHECK(config_error_message(R"({"components": [)" + one + R"(], "correlation": {"observables": "levels"}})")
              .find("correlation.observables") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("double geometric pipeline")
{
    const auto report = run(parse_config(kDoubleGeometric));
    CHECK(report.pass());
    const auto curve = curve_from_csv(report.find("survival.csv")->content);
    for (std::int64_t n = 1; n <= 64; ++n)
        CHECK(std::fabs(curve.tail[static_cast<std::size_t>(n)] - std::pow(0.75, static_cast<double>(n))) <=
              1e-12 + curve.leak_at(n));
    std::vector<std::string> names;
    for (const auto& v : report.verdicts) names.push_back(v.name);
    for (const char* want : {"closed_form", "mc_traces", "mc_bands", "theorem", "key_prop", "stnexp_dominance"})
        CHECK(std::find(names.begin(), names.end(), want) != names.end());
    const auto fits = nlohmann::json::parse(report.find("fits.json")->content);
    CHECK(fits[0]["params"]["tau"].get<double>() == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-9));
    const auto bounds = nlohmann::json::parse(report.find("bounds.json")->content);
    CHECK(bounds["product"]["n0"] == 1);
    CHECK(report.find("survival.svg")->content.find("<polyline") != std::string::npos);
    CHECK(report.find("correlation.csv") == nullptr);
}

TEST_CASE("identical config gives identical artifacts")
{
    const auto a = run(parse_config(kDoubleGeometric));
    const auto b = run(parse_config(kDoubleGeometric));
    REQUIRE(a.artifacts.size() == b.artifacts.size());
    for (std::size_t k = 0; k < a.artifacts.size(); ++k) {
        CHECK(a.artifacts[k].name == b.artifacts[k].name);
        CHECK(a.artifacts[k].content == b.artifacts[k].content);
    }
    auto other = parse_config(kDoubleGeometric);
    other.mc.seed = 8;
    CHECK(run(other).find("survival_mc.csv")->content != a.find("survival_mc.csv")->content);
}

TEST_CASE("tower-only and degenerate runs")
{
    const auto c = parse_config(R"({"components": [{"family": "exponential", "tau": 0.6931471805599453, "R_max": 64}],
                                    "dp": {"horizon": 40}})");
    const auto r = run(c);
    CHECK(r.pass());
    CHECK(r.find("survival_mc.csv") == nullptr);
    const auto bounds = nlohmann::json::parse(r.find("bounds.json")->content);
    CHECK_FALSE(bounds.contains("product"));
    const auto towers = nlohmann::json::parse(r.find("tower.json")->content);
    CHECK(towers[0]["n0"] == 1);
    CHECK(towers[0]["renewal"].size() == 41);
    CHECK(towers[0]["invariant_measure"].size() == 64 * 65 / 2);

    const auto low = parse_config(R"({"components": [
        {"family": "polynomial", "alpha": 1.5, "R_max": 4096},
        {"family": "polynomial", "alpha": 1.5, "R_max": 4096}], "dp": {"leak_budget": 0.001}})");
    try {
        run(low);
        FAIL("expected FoldNotIntegrable");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::FoldNotIntegrable);
        CHECK(std::string(e.what()).find("alpha > l") != std::string::npos);
    }
}

TEST_CASE("three five pipeline")
{
    const auto c = parse_config(R"({"components": [
        {"family": "explicit", "values": [1, 1, 1, 0.5, 0.5, 0], "R_max": 6},
        {"family": "explicit", "values": [1, 1, 1, 0.5, 0.5, 0], "R_max": 6}],
      "dp": {"horizon": 40}, "oracle": {"horizon": 40}, "correlation": {"enabled": true, "N": 60}})");
    const auto r = run(c);
    CHECK(r.pass());
    const auto oracle = nlohmann::json::parse(r.find("oracle.json")->content);
    CHECK(oracle["max_abs_diff"].get<double>() < 1e-12);
    const auto csv = r.find("correlation.csv")->content;
    CHECK(csv.rfind("n,cor_product,gamma1,gamma2,bound,holds\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 62);
}

TEST_CASE("artifacts are written together or not at all")
{
    const auto dir = scratch("write");
    ExperimentReport r;
    r.artifacts = {{"a.csv", "1\n"}, {"b.json", "{}\n"}};
    write_artifacts(r, dir);
    CHECK(fs::exists(dir / "a.csv"));
    CHECK(fs::exists(dir / "b.json"));

    const auto bad = scratch("partial");
    fs::create_directories(bad / "blocked.json.tmp" / "x");  // a directory where a file must go
    ExperimentReport q;
    q.artifacts = {{"first.csv", "1\n"}, {"blocked.json", "{}\n"}};
    CHECK_THROWS(write_artifacts(q, bad));
    CHECK_FALSE(fs::exists(bad / "first.csv"));
    CHECK_FALSE(fs::exists(bad / "blocked.json"));
    fs::remove_all(dir);
    fs::remove_all(bad);
}

TEST_CASE("svg plot")
{
    const std::vector<double> y{1, 0.5, 0.25, 0.0, 0.0625};
    const auto svg = survival_svg({{"tail", y, "#000000"}, {"empty", {0, 0, 0}, "#ff0000"}}, 0, 4);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
    // the zero at n = 3 splits the line
    std::size_t lines = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
    CHECK(lines == 2);
    CHECK(svg.find("empty") == std::string::npos);
    CHECK(svg == survival_svg({{"tail", y, "#000000"}, {"empty", {0, 0, 0}, "#ff0000"}}, 0, 4));
}

TEST_CASE("lemma sweep")
{
    const auto lc = check_lemmas(100);
    CHECK(lc.pass);
    CHECK(lc.sweep.size() == 900);
    CHECK(lc.reference_rhs == doctest::Approx(16 * std::exp(-4.0)).epsilon(1e-12));
    CHECK(std::fabs(lc.reference_rhs - 0.293050) < 5e-7);
    bool found = false;
    for (const auto& r : lc.sweep)
        if (r.tau == 1.0 && r.theta == 0.5 && r.n == 16) found = r.holds && r.rhs == lc.reference_rhs;
    CHECK(found);
}
