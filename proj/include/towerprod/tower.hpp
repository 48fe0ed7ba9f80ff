#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "towerprod/random.hpp"
#include "towerprod/tails.hpp"

namespace towerprod {

struct Column {
    std::int64_t R = 1;
    double p = 1.0;

    bool operator==(const Column&) const = default;
};

/// Tower in affine normal form: one column per return value, base measure
/// normalized to one. Immutable once built.
class TowerModel {
public:
    /// Validates the columns and sorts them by return time. `leak` is the
    /// probability mass that was moved by truncation, and `leak_onset` the
    /// height from which truncated columns differ from the originals (0
    /// means the largest return time).
    static TowerModel from_columns(std::vector<Column> columns, double leak = 0.0,
                                   std::int64_t leak_onset = 0);

    const std::vector<Column>& columns() const noexcept { return columns_; }
    std::size_t size() const noexcept { return columns_.size(); }
    double mean_return() const noexcept { return mean_; }
    std::int64_t gcd() const noexcept { return gcd_; }
    std::int64_t max_return() const noexcept { return columns_.back().R; }
    double leak() const noexcept { return leak_; }
    std::int64_t leak_onset() const noexcept { return leak_onset_; }
    /// Expansion bound of the canonical affine realization.
    double beta() const noexcept { return beta_; }
    double distortion() const noexcept { return 0.0; }

    /// P(R = k) for k = 0..max_return().
    const std::vector<double>& pmf_by_value() const noexcept { return pmf_; }
    /// P(R > k) for k = 0..max_return().
    double survival(std::int64_t k) const;

    /// Column index for a uniform draw in [0,1).
    std::size_t sample_column(double u) const;

    /// Number of (column, level) states and the index of a state.
    std::int64_t state_count() const noexcept { return offsets_.back(); }
    std::int64_t state_index(std::size_t column, std::int64_t level) const
    {
        return offsets_[column] + level;
    }
    std::int64_t column_offset(std::size_t column) const { return offsets_[column]; }

    bool operator==(const TowerModel& other) const { return columns_ == other.columns_; }

private:
    TowerModel() = default;

    std::vector<Column> columns_;
    std::vector<double> cumulative_;
    std::vector<double> pmf_;
    std::vector<std::int64_t> offsets_;
    double mean_ = 0.0;
    double leak_ = 0.0;
    std::int64_t leak_onset_ = 0;
    double beta_ = 0.0;
    std::int64_t gcd_ = 1;
};

/// One column per return value k < R_max with p_k = pmf(spec, k); all mass
/// at or beyond R_max goes to column R_max.
TowerModel build_tower(const TailSpec& spec, std::int64_t R_max, double leak_budget = 1e-3);

struct TowerState {
    std::size_t column = 0;
    std::int64_t level = 0;

    bool operator==(const TowerState&) const = default;
};

TowerState step(const TowerModel& model, const TowerState& state, Rng& rng);

/// Steps to the base: R - level, or 0 on the base.
std::int64_t first_hitting(const TowerModel& model, const TowerState& state);

/// u_0..u_N, the probability of being on the base at time n when started
/// from the base.
std::vector<double> renewal_probabilities(const TowerModel& model, std::int64_t N);

/// Smallest horizon accepted by select_n0.
std::int64_t default_mixing_horizon(const TowerModel& model);

struct MixingWindow {
    std::int64_t n0 = 1;
    double c = 0.0;                  ///< floor for u_n, base-normalized
    double c_tower_normalized = 0.0;  ///< the same floor with m(tower) = 1
    std::int64_t horizon = 0;
    double limit_gap = 0.0;          ///< |u_N - 1/E[R]|
};

/// n0 = least n >= 1 with u_m >= floor for every n <= m <= N. The floor is
/// fraction / E[R] unless given explicitly.
MixingWindow select_n0(const TowerModel& model, double fraction, std::int64_t N,
                       std::optional<double> floor = std::nullopt);

/// nu(i, level) = p_i / E[R], indexed by state_index.
std::vector<double> invariant_measure(const TowerModel& model);

/// max over states of |(nu P)(s) - nu(s)|.
double stationarity_residual(const TowerModel& model, const std::vector<double>& nu);

struct Cylinder {
    std::vector<std::size_t> word;  ///< column indices in order of visit
    std::int64_t phase = 0;         ///< time since the last return before n
    double measure = 0.0;
    bool returns_to_base = false;
};

struct CylinderLimits {
    std::int64_t max_returns = 20;
    std::int64_t max_cylinders = 1 << 20;
};

/// Elements of the n-th refinement restricted to the base: column words
/// whose return times first pass n - 1. A word returns when its return
/// times add up to exactly n.
std::vector<Cylinder> enumerate_cylinders(const TowerModel& model, std::int64_t n,
                                          CylinderLimits limits = {});

struct DensityBound {
    double max_density = 0.0;
    double bound = 0.0;
    bool holds = false;
};

/// Density of the n-step image of the base measure against the invariant
/// measure, compared with E[R].
DensityBound pushforward_density_bound(const TowerModel& model, std::int64_t n);

nlohmann::json model_summary(const TowerModel& model,
                             const std::optional<MixingWindow>& window = std::nullopt);

}  // namespace towerprod
