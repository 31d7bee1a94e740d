#include "crowdsense/sim.hpp"

#include "crowdsense/integration.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace crowdsense::sim {

namespace {

// Salts for the two independent streams of a run. Mobility and sensing never
// depend on market outcomes, so sweeps over market parameters see identical
// movement for the same seed.
constexpr std::uint64_t kMobilityStream = 1;
constexpr std::uint64_t kMarketStream = 2;

double clamp_to(double v, double hi) { return std::clamp(v, 0.0, hi); }

std::string zone_key(std::size_t i, const char* field) {
    return "zones[" + std::to_string(i) + "]." + field;
}

}  // namespace

bool contains(const Region& region, Vec2 p) {
    return std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Disc>) {
                const double dx = p.x - r.center.x;
                const double dy = p.y - r.center.y;
                return dx * dx + dy * dy <= r.radius * r.radius;
            } else {
                return p.x >= r.min.x && p.x <= r.max.x && p.y >= r.min.y && p.y <= r.max.y;
            }
        },
        region);
}

void SimConfig::validate() const {
    if (!(area_width > 0.0)) throw ConfigError("area_width", "must be > 0");
    if (!(area_height > 0.0)) throw ConfigError("area_height", "must be > 0");
    if (step_length_seconds <= 0) throw ConfigError("step_length_seconds", "must be > 0");
    if (!(walk_step >= 0.0)) throw ConfigError("walk_step", "must be >= 0");
    if (!(sensing_probability >= 0.0 && sensing_probability <= 1.0)) {
        throw ConfigError("sensing_probability", "must be in [0, 1]");
    }
    if (!(placement.spread >= 0.0)) throw ConfigError("placement.spread", "must be >= 0");
    if (initial_ask <= Money()) throw ConfigError("initial_ask", "must be > 0");
    if (ask_delta <= Money()) throw ConfigError("ask_delta", "must be > 0");
    if (ask_floor < Money()) throw ConfigError("ask_floor", "must be >= 0");
    if (initial_ask < ask_floor) throw ConfigError("initial_ask", "must be >= ask_floor");

    std::set<ZoneId> ids;
    std::set<GridPos> cells;
    for (std::size_t i = 0; i < zones.size(); ++i) {
        const ZoneSpec& z = zones[i];
        if (!ids.insert(z.id).second) throw ConfigError(zone_key(i, "id"), "duplicate zone id");
        if (z.min_persons < 1) throw ConfigError(zone_key(i, "min_persons"), "must be >= 1");
        if (z.freshness_window < 0) {
            throw ConfigError(zone_key(i, "freshness_window"), "must be >= 0");
        }
        if (z.grid && !cells.insert(*z.grid).second) {
            throw ConfigError(zone_key(i, "row"), "duplicate grid cell");
        }
        if (const auto* d = std::get_if<Disc>(&z.region); d && !(d->radius >= 0.0)) {
            throw ConfigError(zone_key(i, "radius"), "must be >= 0");
        }
        if (const auto* r = std::get_if<Rect>(&z.region);
            r && !(r->min.x <= r->max.x && r->min.y <= r->max.y)) {
            throw ConfigError(zone_key(i, "rect"), "min corner must not exceed max corner");
        }
    }
    if (!std::is_sorted(zones.begin(), zones.end(),
                        [](const ZoneSpec& a, const ZoneSpec& b) { return a.id < b.id; })) {
        throw ConfigError("zones", "must be listed in ascending id order");
    }
}

std::vector<ZoneSpec> grid_zones(double area_width, double area_height, int rows, int cols,
                                 double radius, std::uint32_t min_persons, Seconds freshness) {
    std::vector<ZoneSpec> zones;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            ZoneSpec z;
            z.id = static_cast<ZoneId>(r * cols + c);
            z.region = Disc{{area_width * (c + 1) / (cols + 1), area_height * (r + 1) / (rows + 1)},
                            radius};
            z.min_persons = min_persons;
            z.freshness_window = freshness;
            z.grid = GridPos{r, c};
            zones.push_back(z);
        }
    }
    return zones;
}

SimConfig default_config() {
    SimConfig cfg;
    cfg.zones = grid_zones(cfg.area_width, cfg.area_height, 3, 3, 250.0, 7, 3600);
    return cfg;
}

std::vector<Money> SimResult::agent_rewards() const {
    std::vector<Money> out;
    out.reserve(agents.size());
    for (const auto& a : agents) out.push_back(a.accumulated_reward);
    return out;
}

SimState initial_state(const SimConfig& config, Rng& mobility) {
    SimState state;
    state.config = config;
    state.agents.reserve(config.num_agents);
    for (AgentId id = 0; id < config.num_agents; ++id) {
        Agent a;
        a.id = id;
        if (config.placement.kind == PlacementKind::Uniform) {
            a.position = {mobility.uniform(0.0, config.area_width),
                          mobility.uniform(0.0, config.area_height)};
        } else {
            a.position = {
                clamp_to(mobility.normal(config.area_width / 2, config.placement.spread),
                         config.area_width),
                clamp_to(mobility.normal(config.area_height / 2, config.placement.spread),
                         config.area_height)};
        }
        a.ask = config.initial_ask;
        state.agents.push_back(a);
    }
    for (const auto& spec : config.zones) {
        ZoneState z;
        z.spec = spec;
        state.zones.push_back(z);
    }
    return state;
}

Vec2 walk_displacement(double walk_step, Rng& rng) {
    const double dx = rng.uniform(-walk_step, walk_step);
    const double dy = rng.uniform(-walk_step, walk_step);
    return {dx, dy};
}

void step_agents(SimState& state, Rng& mobility) {
    const SimConfig& cfg = state.config;
    const Seconds now = state.now();
    for (Agent& a : state.agents) {
        const Vec2 d = walk_displacement(cfg.walk_step, mobility);
        a.position.x = clamp_to(a.position.x + d.x, cfg.area_width);
        a.position.y = clamp_to(a.position.y + d.y, cfg.area_height);
        if (mobility.bernoulli(cfg.sensing_probability)) a.data_timestamp = now;
    }
}

std::vector<Offer> collect_offers(const SimState& state, const ZoneState& zone) {
    const Seconds now = state.now();
    std::vector<Offer> offers;
    for (const Agent& a : state.agents) {
        if (!a.data_timestamp || now - *a.data_timestamp > zone.spec.freshness_window) continue;
        if (!contains(zone.spec.region, a.position)) continue;
        offers.push_back(Offer{a.id, a.ask, *a.data_timestamp});
    }
    return offers;
}

OfferRound select_and_pay(ZoneState& zone, std::vector<Offer> offers, std::uint32_t step,
                          std::vector<Agent>& agents, Rng& market) {
    OfferRound round;
    round.zone = zone.spec.id;
    round.step = step;
    ++zone.decision_rounds;

    const std::size_t need = zone.spec.min_persons;
    if (offers.size() >= need) {
        struct Ranked {
            Money ask;
            std::uint64_t tie;
            AgentId agent;
        };
        std::vector<Ranked> ranked;
        ranked.reserve(offers.size());
        for (const Offer& o : offers) ranked.push_back({o.ask, market.next_u64(), o.agent});
        std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
            if (a.ask != b.ask) return a.ask < b.ask;
            if (a.tie != b.tie) return a.tie < b.tie;
            return a.agent < b.agent;
        });
        for (std::size_t i = 0; i < need; ++i) {
            const Ranked& r = ranked[i];
            Agent& agent = agents.at(r.agent);
            agent.accumulated_reward += r.ask;
            ++agent.times_selected;
            zone.total_paid += r.ask;
            ++zone.payments_count;
            round.selected.push_back(r.agent);
        }
        round.satisfied = true;
        ++zone.satisfied_rounds;
    }
    round.offers = std::move(offers);
    return round;
}

void update_asks(std::vector<Agent>& agents, const OfferRound& round, const SimConfig& config) {
    const std::set<AgentId> selected(round.selected.begin(), round.selected.end());
    for (const Offer& o : round.offers) {
        Agent& a = agents.at(o.agent);
        if (selected.contains(o.agent)) {
            a.ask += config.ask_delta;
        } else {
            a.ask = std::max(config.ask_floor, a.ask - config.ask_delta);
        }
    }
}

SimResult run_simulation(const SimConfig& config, const RunOptions& options) {
    config.validate();
    Rng mobility = Rng::for_purpose(config.rng_seed, kMobilityStream);
    Rng market = Rng::for_purpose(config.rng_seed, kMarketStream);
    SimState state = initial_state(config, mobility);

    std::optional<integration::ProtocolBridge> bridge;
    if (options.integration) bridge.emplace(config.rng_seed, protocol::CampaignParams{});

    SimResult result;
    if (options.keep_trace) result.rounds.reserve(config.total_steps * config.zones.size());

    for (std::uint32_t step = 0; step < config.total_steps; ++step) {
        state.step = step;
        step_agents(state, mobility);
        for (ZoneState& zone : state.zones) {
            auto offers = collect_offers(state, zone);
            OfferRound round = select_and_pay(zone, std::move(offers), step, state.agents, market);
            update_asks(state.agents, round, config);
            if (round.satisfied) {
                if (bridge) bridge->on_round(round);
                if (options.observer) options.observer(round, state.agents);
            }
            if (options.keep_trace) result.rounds.push_back(std::move(round));
        }
    }

    result.config = config;
    result.agents = std::move(state.agents);
    result.zones = std::move(state.zones);
    if (bridge) {
        result.protocol_rewards = bridge->reward_totals();
        result.campaigns_closed = bridge->campaigns_closed();
    }
    return result;
}

std::string trace_jsonl(const SimResult& result) {
    using json = nlohmann::ordered_json;
    std::string out;
    for (const auto& r : result.rounds) {
        json offers = json::array();
        for (const auto& o : r.offers) {
            offers.push_back(json::array({o.agent, o.ask.milli(), o.data_timestamp}));
        }
        json line;
        line["step"] = r.step;
        line["zone"] = r.zone;
        line["satisfied"] = r.satisfied;
        line["offers"] = std::move(offers);
        line["selected"] = r.selected;
        out += line.dump();
        out += '\n';
    }
    return out;
}

}  // namespace crowdsense::sim
