#pragma once

#include "crowdsense/money.hpp"
#include "crowdsense/sim.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crowdsense::metrics {

class MetricsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// ECDF
// ---------------------------------------------------------------------------

struct EcdfPoint {
    Money value;
    double fraction = 0.0;  // share of samples <= value
    friend bool operator==(const EcdfPoint&, const EcdfPoint&) = default;
};

using EcdfSeries = std::vector<EcdfPoint>;

// Right-continuous ECDF evaluated at each distinct value. Throws on empty input.
EcdfSeries ecdf(std::span<const Money> values);

// Nearest-rank quantile (q in (0, 1]): smallest value with at least q of the
// samples at or below it.
Money quantile(std::span<const Money> values, double q);

Money mean(std::span<const Money> values);

// ---------------------------------------------------------------------------
// Satisfied ratio
// ---------------------------------------------------------------------------

struct RoundCounts {
    std::uint64_t satisfied = 0;
    std::uint64_t decisions = 0;
    friend bool operator==(const RoundCounts&, const RoundCounts&) = default;
};

// satisfied / decisions. Throws when decisions == 0.
double satisfied_ratio(const RoundCounts& counts);
double satisfied_ratio(const sim::ZoneState& zone);
// Pooled over all zones.
double satisfied_ratio(std::span<const sim::ZoneState> zones);

// Per-zone counts recomputed from an OfferRound trace, indexed like zone ids
// in the trace.
std::map<sim::ZoneId, RoundCounts> recount_rounds(std::span<const sim::OfferRound> trace);

// ---------------------------------------------------------------------------
// Heatmap
// ---------------------------------------------------------------------------

struct HeatmapCell {
    sim::GridPos pos;
    sim::ZoneId zone = 0;
    Money total_paid;
    std::uint64_t payments = 0;
    // total_paid / payments rounded to the nearest milli-unit; empty when the
    // zone never paid anyone.
    std::optional<Money> mean_reward;
};

struct HeatmapGrid {
    int rows = 0;
    int cols = 0;
    std::vector<HeatmapCell> cells;  // row-major, one per zone
};

// Throws MetricsError if any zone lacks a grid position.
HeatmapGrid heatmap(std::span<const sim::ZoneState> zones);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepParam { MinPersons, NumAgents, FreshnessWindow };

std::string_view to_string(SweepParam p);
// Throws MetricsError listing the valid names.
SweepParam sweep_param_from_string(std::string_view s);

// Copy of cfg with the parameter set (on every zone for zone parameters).
sim::SimConfig apply_param(sim::SimConfig cfg, SweepParam param, std::int64_t value);

// Per-run summary kept for each (value, seed) cell.
struct RunSummary {
    std::int64_t value = 0;
    std::uint64_t seed = 0;
    double satisfied_ratio = 0.0;
    double mean_reward = 0.0;  // units per agent
    double p90_reward = 0.0;   // units
};

RunSummary summarize(const sim::SimResult& result, std::int64_t value);

struct Band {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct SweepRow {
    std::int64_t value = 0;
    Band satisfied_ratio;
    Band mean_reward;
    Band p90_reward;
    std::size_t seeds = 0;  // 1 means single-seed: min == max == mean
};

struct SweepTable {
    SweepParam param = SweepParam::MinPersons;
    std::vector<SweepRow> rows;
};

// Called once per finished cell, possibly from worker threads, never
// concurrently for the same cell.
using CellCallback = std::function<void(const sim::SimResult&, const RunSummary&)>;

// Runs every (value, seed) pair and aggregates rows in `values` order. The
// table does not depend on `workers`.
SweepTable sweep(const sim::SimConfig& tmpl, SweepParam param, std::span<const std::int64_t> values,
                 std::span<const std::uint64_t> seeds, unsigned workers = 1,
                 const CellCallback& on_cell = {});

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// value,fraction
std::string ecdf_csv(const EcdfSeries& series);
// param,value,mean_ratio,min,max,seeds
std::string satisfied_csv(const SweepTable& table);
// Single run: one row per zone (param "zone") plus a pooled "all" row.
std::string satisfied_csv(std::span<const sim::ZoneState> zones);
// row,col,mean_reward_milli,payments (empty mean for zones that never paid)
std::string heatmap_csv(const HeatmapGrid& grid);
// param,value,mean_reward,mean_reward_min,mean_reward_max,p90_reward,p90_min,p90_max,seeds
std::string reward_csv(const SweepTable& table);

}  // namespace crowdsense::metrics
