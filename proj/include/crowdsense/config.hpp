#pragma once

// JSON scenario files.
//
//   {
//     "rng_seed": 42,
//     "area_width": 1000, "area_height": 1000,
//     "num_agents": 100,
//     "step_length_seconds": 60, "total_steps": 1440,
//     "walk_step": 10, "sensing_probability": 0.05,
//     "placement": {"kind": "gaussian", "spread": 200},
//     "initial_ask": 1.0, "ask_delta": 0.1, "ask_floor": 0.1,
//     "zone_defaults": {"min_persons": 7, "freshness_window": 3600},
//     "zones": [
//       {"id": 0, "row": 0, "col": 0,
//        "disc": {"x": 250, "y": 250, "radius": 250}},
//       {"id": 1, "rect": {"x0": 0, "y0": 0, "x1": 100, "y1": 100},
//        "min_persons": 3}
//     ]
//   }
//
// Every key is optional; missing keys take default_config() values, and a
// missing "zones" list means the default 3x3 grid (built with zone_defaults).
// Currency values are decimal units, stored as milli-units.

#include "crowdsense/sim.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace crowdsense::config {

// Throws sim::ConfigError naming the offending key.
sim::SimConfig parse_config(std::string_view text);
sim::SimConfig load_config(const std::filesystem::path& path);

// Canonical, fully explicit rendering; parse_config(dump_config(c)) == c.
std::string dump_config(const sim::SimConfig& config);

}  // namespace crowdsense::config
