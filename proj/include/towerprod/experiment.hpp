#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "towerprod/rates.hpp"
#include "towerprod/tails.hpp"

namespace towerprod {

struct ComponentConfig {
    TailSpec tail = TailSpec::exponential(1.0);
    std::int64_t R_max = 64;
    bool operator==(const ComponentConfig&) const = default;
};

struct N0Policy {
    double fraction = 0.5;
    std::int64_t horizon = 0;  ///< 0: the model's default mixing horizon
    bool operator==(const N0Policy&) const = default;
};

struct DpConfig {
    std::int64_t horizon = 64;
    double leak_budget = 1e-6;
    double memory_budget = 4e9;
    std::int64_t fold_horizon = 512;  ///< three or more components
    bool operator==(const DpConfig&) const = default;
};

struct McConfig {
    std::int64_t samples = 0;
    std::optional<std::uint64_t> seed;
    std::int64_t cap = 1000000;
    std::int64_t horizon = 32;  ///< band check range
    double z = 3.0;
    bool operator==(const McConfig&) const = default;
};

struct OracleConfig {
    std::int64_t horizon = 0;  ///< 0 disables the brute-force comparison
    std::int64_t max_nodes = 50000000;
    bool operator==(const OracleConfig&) const = default;
};

struct FitConfig {
    TailFamily family = TailFamily::Exponential;
    std::optional<FitWindow> window;  ///< unset: default_fit_window
    bool operator==(const FitConfig&) const = default;
};

struct VerifyConfig {
    bool enabled = true;
    std::optional<FitWindow> window;
    bool operator==(const VerifyConfig&) const = default;
};

struct BoundsConfig {
    bool enabled = true;
    std::int64_t i_max = 8;        ///< probes conditioned on by the key-proposition check
    double delta = 0.05;
    std::optional<double> theta_prime;  ///< unset: 1 (exponential), theta / 2 (stretched)
    std::optional<FitWindow> window;    ///< unset: [2 n0 + 1, dp.horizon]
    bool operator==(const BoundsConfig&) const = default;
};

struct CorrelationConfig {
    bool enabled = false;
    std::int64_t N = 200;
    std::string observables = "base_indicator";
    bool operator==(const CorrelationConfig&) const = default;
};

struct OutputConfig {
    std::string directory = "out";
    bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
    std::vector<ComponentConfig> components;
    N0Policy n0_policy;
    DpConfig dp;
    McConfig mc;
    OracleConfig oracle;
    std::vector<FitConfig> fits;
    VerifyConfig verify;
    BoundsConfig bounds;
    CorrelationConfig correlation;
    OutputConfig outputs;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError naming the offending field, e.g. `components[1].tau`.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);
std::string serialize_config(const ExperimentConfig& config);
/// Invariants that span fields; parsing already calls it.
void validate(const ExperimentConfig& config);

/// Pipeline stages; run() with a subset is what the subcommands use.
enum Stage : unsigned {
    StageTower = 1u << 0,
    StageProduct = 1u << 1,
    StageMonteCarlo = 1u << 2,
    StageOracle = 1u << 3,
    StageFit = 1u << 4,
    StageVerify = 1u << 5,
    StageBounds = 1u << 6,
    StageCorrelate = 1u << 7,
    StageAll = 0xffu,
};

struct Artifact {
    std::string name;
    std::string content;
};

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ExperimentReport {
    nlohmann::json summary;
    std::vector<Artifact> artifacts;
    std::vector<Verdict> verdicts;
    bool pass() const;
    const Artifact* find(const std::string& name) const;
};

/// Runs the selected stages. Nothing touches the disk here.
ExperimentReport run(const ExperimentConfig& config, unsigned stages = StageAll);

/// Writes every artifact into `directory` through temporary files. If any
/// write fails, the files already written are removed and the error
/// rethrown.
void write_artifacts(const ExperimentReport& report, const std::filesystem::path& directory);

/// Log-axis polyline plot; series with no positive value are skipped.
struct PlotSeries {
    std::string label;
    std::vector<double> y;  ///< y[n] for n = 0..
    std::string colour;
};
std::string survival_svg(const std::vector<PlotSeries>& series, std::int64_t lo, std::int64_t hi);

/// Stretched-tail lemma sweep and composition counts, no configuration.
struct LemmaSweepRow {
    double tau = 0.0;
    double theta = 0.0;
    std::int64_t n = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};
struct LemmaCheck {
    std::vector<LemmaSweepRow> sweep;
    double reference_rhs = 0.0;  ///< tau = 1, theta = 1/2, n = 16
    nlohmann::json counts;       ///< composition counts against the binomial bound
    bool pass = false;
};
LemmaCheck check_lemmas(std::int64_t points = 100);

}  // namespace towerprod
