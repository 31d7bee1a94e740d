#pragma once

// Time-stepped crowd-sensing market.
//
// Agents random-walk inside a bounded rectangle. Zone contracts sit on parts
// of the area; every tick each zone collects one offer per agent that is
// inside it and holds sufficiently fresh data, and either buys exactly
// min_persons offers (cheapest asks first) or buys nothing. Selected agents
// raise their ask for the next round, passed-over offerers lower it.

#include "crowdsense/money.hpp"
#include "crowdsense/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace crowdsense::sim {

using AgentId = std::uint32_t;
using ZoneId = std::uint32_t;
using Seconds = std::int64_t;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Disc {
    Vec2 center;
    double radius = 0.0;
};

struct Rect {
    Vec2 min;
    Vec2 max;
};

using Region = std::variant<Disc, Rect>;

// Closed regions: boundary points are inside.
bool contains(const Region& region, Vec2 p);

struct GridPos {
    int row = 0;
    int col = 0;
    friend auto operator<=>(const GridPos&, const GridPos&) = default;
};

struct ZoneSpec {
    ZoneId id = 0;
    Region region;
    std::uint32_t min_persons = 7;
    Seconds freshness_window = 3600;
    std::optional<GridPos> grid;  // needed for heatmaps only
};

enum class PlacementKind { Uniform, Gaussian };

// Where agents start. Gaussian placement is centred on the middle of the
// area with `spread` as the per-axis standard deviation, clamped to the area.
struct Placement {
    PlacementKind kind = PlacementKind::Gaussian;
    double spread = 200.0;
};

// Raised by validation; key names the offending field, e.g.
// "zones[3].min_persons".
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct SimConfig {
    double area_width = 1000.0;
    double area_height = 1000.0;
    std::uint32_t num_agents = 100;
    std::vector<ZoneSpec> zones;
    Seconds step_length_seconds = 60;
    std::uint32_t total_steps = 1440;  // one simulated day at 60 s per tick
    double walk_step = 10.0;           // max per-axis displacement per tick
    double sensing_probability = 0.05;  // chance per tick that an agent takes a new reading
    Placement placement;
    Money initial_ask = Money::from_milli(1000);
    Money ask_delta = Money::from_milli(100);
    Money ask_floor = Money::from_milli(100);
    std::uint64_t rng_seed = 42;

    Seconds horizon() const { return step_length_seconds * static_cast<Seconds>(total_steps); }

    // Throws ConfigError.
    void validate() const;
};

// rows x cols grid of equal discs with centres spaced evenly between the
// edges (1/4, 1/2, 3/4 of each side for a 3x3 grid). Ids are row-major.
std::vector<ZoneSpec> grid_zones(double area_width, double area_height, int rows, int cols,
                                 double radius, std::uint32_t min_persons, Seconds freshness);

// The bundled scenario: 100 agents starting around the middle of a 1000 x 1000
// area, and a 3x3 grid of radius-250 zones (min_persons 7, freshness 1 h).
// Neighbouring discs overlap, so the centre zone (id 4) shares ground with
// all eight others and sees the most traffic.
SimConfig default_config();

struct Agent {
    AgentId id = 0;
    Vec2 position;
    Money ask;
    Money accumulated_reward;
    std::uint64_t times_selected = 0;
    std::optional<Seconds> data_timestamp;  // empty until the first reading
};

struct ZoneState {
    ZoneSpec spec;
    std::uint64_t satisfied_rounds = 0;
    std::uint64_t decision_rounds = 0;
    Money total_paid;
    std::uint64_t payments_count = 0;
};

struct Offer {
    AgentId agent = 0;
    Money ask;
    Seconds data_timestamp = 0;
    friend bool operator==(const Offer&, const Offer&) = default;
};

// satisfied implies |selected| == min_persons; otherwise selected is empty.
struct OfferRound {
    ZoneId zone = 0;
    std::uint32_t step = 0;
    std::vector<Offer> offers;
    std::vector<AgentId> selected;  // in selection (price) order
    bool satisfied = false;
};

struct SimState {
    SimConfig config;
    std::vector<Agent> agents;
    std::vector<ZoneState> zones;
    std::uint32_t step = 0;

    Seconds now() const { return static_cast<Seconds>(step) * config.step_length_seconds; }
};

// Fresh state with agents placed according to config.placement.
SimState initial_state(const SimConfig& config, Rng& mobility);

// One uniform draw in [-walk_step, walk_step] per axis.
Vec2 walk_displacement(double walk_step, Rng& rng);

// Moves every agent (clamped to the area) and lets each take a new reading
// with config.sensing_probability, stamped with state.now().
void step_agents(SimState& state, Rng& mobility);

// One offer per agent inside the zone whose reading is at most
// freshness_window old, in agent-id order.
std::vector<Offer> collect_offers(const SimState& state, const ZoneState& zone);

// All-or-nothing purchase of min_persons offers, cheapest ask first with
// random tie-breaks. Pays selected agents their own ask.
OfferRound select_and_pay(ZoneState& zone, std::vector<Offer> offers, std::uint32_t step,
                          std::vector<Agent>& agents, Rng& market);

// Selected agents raise their ask by ask_delta; offerers that were passed
// over lower it, never below ask_floor. Non-offerers keep theirs.
void update_asks(std::vector<Agent>& agents, const OfferRound& round, const SimConfig& config);

struct SimResult {
    SimConfig config;
    std::vector<Agent> agents;
    std::vector<ZoneState> zones;
    std::vector<OfferRound> rounds;  // full trace, tick-major then zone id
    // Present in integration runs: SourceReward ledger totals per agent.
    std::optional<std::map<AgentId, Money>> protocol_rewards;
    std::uint64_t campaigns_closed = 0;

    std::vector<Money> agent_rewards() const;
};

// Called after each satisfied round with the agents already paid.
using RoundObserver = std::function<void(const OfferRound&, const std::vector<Agent>&)>;

struct RunOptions {
    bool keep_trace = true;
    // Route every satisfied round through a protocol campaign.
    bool integration = false;
    RoundObserver observer;
};

// Runs config.total_steps ticks. Deterministic in config (including rng_seed).
SimResult run_simulation(const SimConfig& config, const RunOptions& options = {});

// One JSON object per OfferRound per line.
std::string trace_jsonl(const SimResult& result);

}  // namespace crowdsense::sim
