#include "crowdsense/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace crowdsense::config {

using json = nlohmann::ordered_json;
using sim::ConfigError;

namespace {

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == key;
        if (!ok) throw ConfigError(prefix + key, "unknown key");
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
}

template <typename Int>
Int get_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    const auto i = v.get<std::int64_t>();
    if constexpr (std::is_unsigned_v<Int>) {
        if (i < 0) throw ConfigError(key, "must be >= 0");
    }
    return static_cast<Int>(i);
}

template <typename Fn>
void opt(const json& obj, const char* key, const std::string& prefix, Fn&& fn) {
    if (const json* v = find(obj, key)) fn(*v, prefix + key);
}

sim::ZoneSpec parse_zone(const json& z, std::size_t index, const sim::ZoneSpec& defaults) {
    const std::string prefix = "zones[" + std::to_string(index) + "].";
    if (!z.is_object()) throw ConfigError("zones[" + std::to_string(index) + "]", "expected an object");
    reject_unknown(z, prefix,
                   {"id", "row", "col", "disc", "rect", "min_persons", "freshness_window"});
    sim::ZoneSpec out = defaults;
    out.id = static_cast<sim::ZoneId>(index);
    out.grid.reset();
    opt(z, "id", prefix, [&](const json& v, const std::string& k) { out.id = get_int<sim::ZoneId>(v, k); });
    opt(z, "min_persons", prefix,
        [&](const json& v, const std::string& k) { out.min_persons = get_int<std::uint32_t>(v, k); });
    opt(z, "freshness_window", prefix,
        [&](const json& v, const std::string& k) { out.freshness_window = get_int<sim::Seconds>(v, k); });

    const json* row = find(z, "row");
    const json* col = find(z, "col");
    if ((row == nullptr) != (col == nullptr)) {
        throw ConfigError(prefix + (row ? "col" : "row"), "row and col must be given together");
    }
    if (row) out.grid = sim::GridPos{get_int<int>(*row, prefix + "row"), get_int<int>(*col, prefix + "col")};

    const json* disc = find(z, "disc");
    const json* rect = find(z, "rect");
    if ((disc == nullptr) == (rect == nullptr)) {
        throw ConfigError(prefix + "disc", "exactly one of disc or rect is required");
    }
    if (disc) {
        const std::string p = prefix + "disc.";
        reject_unknown(*disc, p, {"x", "y", "radius"});
        for (const char* k : {"x", "y", "radius"}) {
            if (!find(*disc, k)) throw ConfigError(p + k, "missing");
        }
        out.region = sim::Disc{{get_number((*disc)["x"], p + "x"), get_number((*disc)["y"], p + "y")},
                               get_number((*disc)["radius"], p + "radius")};
    } else {
        const std::string p = prefix + "rect.";
        reject_unknown(*rect, p, {"x0", "y0", "x1", "y1"});
        for (const char* k : {"x0", "y0", "x1", "y1"}) {
            if (!find(*rect, k)) throw ConfigError(p + k, "missing");
        }
        out.region = sim::Rect{{get_number((*rect)["x0"], p + "x0"), get_number((*rect)["y0"], p + "y0")},
                               {get_number((*rect)["x1"], p + "x1"), get_number((*rect)["y1"], p + "y1")}};
    }
    return out;
}

json region_json(const sim::Region& region) {
    json out;
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, sim::Disc>) {
                out["disc"] = {{"x", r.center.x}, {"y", r.center.y}, {"radius", r.radius}};
            } else {
                out["rect"] = {{"x0", r.min.x}, {"y0", r.min.y}, {"x1", r.max.x}, {"y1", r.max.y}};
            }
        },
        region);
    return out;
}

}  // namespace

sim::SimConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", e.what());
    }
    if (!root.is_object()) throw ConfigError("<document>", "expected a JSON object");
    reject_unknown(root, "",
                   {"rng_seed", "area_width", "area_height", "num_agents", "step_length_seconds",
                    "total_steps", "walk_step", "sensing_probability", "placement", "initial_ask",
                    "ask_delta", "ask_floor", "zone_defaults", "zones"});

    sim::SimConfig cfg = sim::default_config();
    const std::string none;
    opt(root, "rng_seed", none, [&](const json& v, const std::string& k) { cfg.rng_seed = get_int<std::uint64_t>(v, k); });
    opt(root, "area_width", none, [&](const json& v, const std::string& k) { cfg.area_width = get_number(v, k); });
    opt(root, "area_height", none, [&](const json& v, const std::string& k) { cfg.area_height = get_number(v, k); });
    opt(root, "num_agents", none, [&](const json& v, const std::string& k) { cfg.num_agents = get_int<std::uint32_t>(v, k); });
    opt(root, "step_length_seconds", none,
        [&](const json& v, const std::string& k) { cfg.step_length_seconds = get_int<sim::Seconds>(v, k); });
    opt(root, "total_steps", none, [&](const json& v, const std::string& k) { cfg.total_steps = get_int<std::uint32_t>(v, k); });
    opt(root, "walk_step", none, [&](const json& v, const std::string& k) { cfg.walk_step = get_number(v, k); });
    opt(root, "sensing_probability", none,
        [&](const json& v, const std::string& k) { cfg.sensing_probability = get_number(v, k); });
    opt(root, "initial_ask", none, [&](const json& v, const std::string& k) { cfg.initial_ask = Money::from_units(get_number(v, k)); });
    opt(root, "ask_delta", none, [&](const json& v, const std::string& k) { cfg.ask_delta = Money::from_units(get_number(v, k)); });
    opt(root, "ask_floor", none, [&](const json& v, const std::string& k) { cfg.ask_floor = Money::from_units(get_number(v, k)); });

    if (const json* p = find(root, "placement")) {
        if (!p->is_object()) throw ConfigError("placement", "expected an object");
        reject_unknown(*p, "placement.", {"kind", "spread"});
        if (const json* kind = find(*p, "kind")) {
            const std::string k = kind->is_string() ? kind->get<std::string>() : "";
            if (k == "uniform") {
                cfg.placement.kind = sim::PlacementKind::Uniform;
            } else if (k == "gaussian") {
                cfg.placement.kind = sim::PlacementKind::Gaussian;
            } else {
                throw ConfigError("placement.kind", "expected \"uniform\" or \"gaussian\"");
            }
        }
        opt(*p, "spread", "placement.",
            [&](const json& v, const std::string& k) { cfg.placement.spread = get_number(v, k); });
    }

    sim::ZoneSpec defaults;
    defaults.min_persons = cfg.zones.empty() ? 7 : cfg.zones.front().min_persons;
    defaults.freshness_window = cfg.zones.empty() ? 3600 : cfg.zones.front().freshness_window;
    if (const json* d = find(root, "zone_defaults")) {
        if (!d->is_object()) throw ConfigError("zone_defaults", "expected an object");
        reject_unknown(*d, "zone_defaults.", {"min_persons", "freshness_window"});
        opt(*d, "min_persons", "zone_defaults.",
            [&](const json& v, const std::string& k) { defaults.min_persons = get_int<std::uint32_t>(v, k); });
        opt(*d, "freshness_window", "zone_defaults.",
            [&](const json& v, const std::string& k) { defaults.freshness_window = get_int<sim::Seconds>(v, k); });
    }

    if (const json* zones = find(root, "zones")) {
        if (!zones->is_array()) throw ConfigError("zones", "expected an array");
        cfg.zones.clear();
        for (std::size_t i = 0; i < zones->size(); ++i) {
            cfg.zones.push_back(parse_zone((*zones)[i], i, defaults));
        }
    } else {
        for (auto& z : cfg.zones) {
            z.min_persons = defaults.min_persons;
            z.freshness_window = defaults.freshness_window;
        }
    }

    cfg.validate();
    return cfg;
}

sim::SimConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const sim::SimConfig& cfg) {
    json root;
    root["rng_seed"] = cfg.rng_seed;
    root["area_width"] = cfg.area_width;
    root["area_height"] = cfg.area_height;
    root["num_agents"] = cfg.num_agents;
    root["step_length_seconds"] = cfg.step_length_seconds;
    root["total_steps"] = cfg.total_steps;
    root["walk_step"] = cfg.walk_step;
    root["sensing_probability"] = cfg.sensing_probability;
    root["placement"] = {
        {"kind", cfg.placement.kind == sim::PlacementKind::Uniform ? "uniform" : "gaussian"},
        {"spread", cfg.placement.spread}};
    root["initial_ask"] = cfg.initial_ask.units();
    root["ask_delta"] = cfg.ask_delta.units();
    root["ask_floor"] = cfg.ask_floor.units();
    json zones = json::array();
    for (const auto& z : cfg.zones) {
        json j;
        j["id"] = z.id;
        if (z.grid) {
            j["row"] = z.grid->row;
            j["col"] = z.grid->col;
        }
        j.update(region_json(z.region));
        j["min_persons"] = z.min_persons;
        j["freshness_window"] = z.freshness_window;
        zones.push_back(std::move(j));
    }
    root["zones"] = std::move(zones);
    return root.dump(2) + "\n";
}

}  // namespace crowdsense::config
