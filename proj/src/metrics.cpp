#include "crowdsense/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

namespace crowdsense::metrics {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

Band band(const std::vector<double>& xs) {
    Band b;
    if (xs.empty()) return b;
    double sum = 0.0;
    b.min = xs.front();
    b.max = xs.front();
    for (double x : xs) {
        sum += x;
        b.min = std::min(b.min, x);
        b.max = std::max(b.max, x);
    }
    b.mean = sum / static_cast<double>(xs.size());
    return b;
}

}  // namespace

EcdfSeries ecdf(std::span<const Money> values) {
    if (values.empty()) throw MetricsError("ecdf: empty input");
    std::vector<Money> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    EcdfSeries out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
        out.push_back({sorted[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

Money quantile(std::span<const Money> values, double q) {
    if (values.empty()) throw MetricsError("quantile: empty input");
    if (!(q > 0.0 && q <= 1.0)) throw MetricsError("quantile: q must be in (0, 1]");
    std::vector<Money> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    return sorted[std::max<std::size_t>(rank, 1) - 1];
}

Money mean(std::span<const Money> values) {
    if (values.empty()) throw MetricsError("mean: empty input");
    Money total;
    for (Money v : values) total += v;
    return Money::from_milli(total.milli() / static_cast<std::int64_t>(values.size()));
}

double satisfied_ratio(const RoundCounts& counts) {
    if (counts.decisions == 0) throw MetricsError("satisfied_ratio: no decision rounds");
    return static_cast<double>(counts.satisfied) / static_cast<double>(counts.decisions);
}

double satisfied_ratio(const sim::ZoneState& zone) {
    return satisfied_ratio(RoundCounts{zone.satisfied_rounds, zone.decision_rounds});
}

double satisfied_ratio(std::span<const sim::ZoneState> zones) {
    RoundCounts total;
    for (const auto& z : zones) {
        total.satisfied += z.satisfied_rounds;
        total.decisions += z.decision_rounds;
    }
    return satisfied_ratio(total);
}

std::map<sim::ZoneId, RoundCounts> recount_rounds(std::span<const sim::OfferRound> trace) {
    std::map<sim::ZoneId, RoundCounts> out;
    for (const auto& r : trace) {
        auto& c = out[r.zone];
        ++c.decisions;
        if (r.satisfied) ++c.satisfied;
    }
    return out;
}

HeatmapGrid heatmap(std::span<const sim::ZoneState> zones) {
    HeatmapGrid grid;
    for (const auto& z : zones) {
        if (!z.spec.grid) {
            throw MetricsError("heatmap: zone " + std::to_string(z.spec.id) + " has no grid position");
        }
        if (z.spec.grid->row < 0 || z.spec.grid->col < 0) {
            throw MetricsError("heatmap: negative grid position");
        }
        HeatmapCell cell;
        cell.pos = *z.spec.grid;
        cell.zone = z.spec.id;
        cell.total_paid = z.total_paid;
        cell.payments = z.payments_count;
        if (z.payments_count > 0) {
            const auto n = static_cast<std::int64_t>(z.payments_count);
            const std::int64_t t = z.total_paid.milli();
            cell.mean_reward = Money::from_milli((2 * t + n) / (2 * n));  // round half up
        }
        grid.rows = std::max(grid.rows, cell.pos.row + 1);
        grid.cols = std::max(grid.cols, cell.pos.col + 1);
        grid.cells.push_back(cell);
    }
    std::sort(grid.cells.begin(), grid.cells.end(),
              [](const HeatmapCell& a, const HeatmapCell& b) { return a.pos < b.pos; });
    for (std::size_t i = 1; i < grid.cells.size(); ++i) {
        if (grid.cells[i].pos == grid.cells[i - 1].pos) {
            throw MetricsError("heatmap: two zones share a grid cell");
        }
    }
    return grid;
}

std::string_view to_string(SweepParam p) {
    switch (p) {
        case SweepParam::MinPersons: return "min_persons";
        case SweepParam::NumAgents: return "num_agents";
        case SweepParam::FreshnessWindow: return "freshness_window";
    }
    return "?";
}

SweepParam sweep_param_from_string(std::string_view s) {
    for (auto p : {SweepParam::MinPersons, SweepParam::NumAgents, SweepParam::FreshnessWindow}) {
        if (to_string(p) == s) return p;
    }
    throw MetricsError("unknown sweep parameter '" + std::string(s) +
                       "' (valid: min_persons, num_agents, freshness_window)");
}

sim::SimConfig apply_param(sim::SimConfig cfg, SweepParam param, std::int64_t value) {
    if (value < 0) throw MetricsError(std::string(to_string(param)) + " must be >= 0");
    switch (param) {
        case SweepParam::MinPersons:
            for (auto& z : cfg.zones) z.min_persons = static_cast<std::uint32_t>(value);
            break;
        case SweepParam::NumAgents:
            cfg.num_agents = static_cast<std::uint32_t>(value);
            break;
        case SweepParam::FreshnessWindow:
            for (auto& z : cfg.zones) z.freshness_window = value;
            break;
    }
    return cfg;
}

RunSummary summarize(const sim::SimResult& result, std::int64_t value) {
    RunSummary s;
    s.value = value;
    s.seed = result.config.rng_seed;
    s.satisfied_ratio = result.zones.empty() ? 0.0 : satisfied_ratio(result.zones);
    const auto rewards = result.agent_rewards();
    if (!rewards.empty()) {
        Money total;
        for (Money r : rewards) total += r;
        s.mean_reward = total.units() / static_cast<double>(rewards.size());
        s.p90_reward = quantile(rewards, 0.9).units();
    }
    return s;
}

SweepTable sweep(const sim::SimConfig& tmpl, SweepParam param, std::span<const std::int64_t> values,
                 std::span<const std::uint64_t> seeds, unsigned workers, const CellCallback& on_cell) {
    if (values.empty()) throw MetricsError("sweep: no values");
    if (seeds.empty()) throw MetricsError("sweep: no seeds");

    struct Cell {
        std::int64_t value;
        sim::SimConfig cfg;
        RunSummary summary;
    };
    std::vector<Cell> cells;
    for (auto v : values) {
        for (auto seed : seeds) {
            sim::SimConfig cfg = apply_param(tmpl, param, v);
            cfg.rng_seed = seed;
            cfg.validate();
            cells.push_back({v, std::move(cfg), {}});
        }
    }

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            sim::RunOptions opts;
            opts.keep_trace = static_cast<bool>(on_cell);
            const auto result = sim::run_simulation(cells[i].cfg, opts);
            cells[i].summary = summarize(result, cells[i].value);
            if (on_cell) on_cell(result, cells[i].summary);
        }
    };
    workers = std::max(1u, workers);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    SweepTable table;
    table.param = param;
    for (auto v : values) {
        std::vector<double> ratio, reward, p90;
        for (const auto& c : cells) {
            if (c.value != v) continue;
            ratio.push_back(c.summary.satisfied_ratio);
            reward.push_back(c.summary.mean_reward);
            p90.push_back(c.summary.p90_reward);
        }
        table.rows.push_back({v, band(ratio), band(reward), band(p90), ratio.size()});
    }
    return table;
}

std::string ecdf_csv(const EcdfSeries& series) {
    std::string out = "value,fraction\n";
    for (const auto& p : series) out += p.value.to_string() + ',' + fmt_double(p.fraction) + '\n';
    return out;
}

std::string satisfied_csv(const SweepTable& table) {
    std::string out = "param,value,mean_ratio,min,max,seeds\n";
    const std::string name(to_string(table.param));
    for (const auto& r : table.rows) {
        out += name + ',' + std::to_string(r.value) + ',' + fmt_double(r.satisfied_ratio.mean) + ',' +
               fmt_double(r.satisfied_ratio.min) + ',' + fmt_double(r.satisfied_ratio.max) + ',' +
               std::to_string(r.seeds) + '\n';
    }
    return out;
}

std::string satisfied_csv(std::span<const sim::ZoneState> zones) {
    std::string out = "param,value,mean_ratio,min,max,seeds\n";
    RoundCounts total;
    for (const auto& z : zones) {
        total.satisfied += z.satisfied_rounds;
        total.decisions += z.decision_rounds;
        const std::string r = z.decision_rounds ? fmt_double(satisfied_ratio(z)) : "";
        out += "zone," + std::to_string(z.spec.id) + ',' + r + ',' + r + ',' + r + ",1\n";
    }
    const std::string r = total.decisions ? fmt_double(satisfied_ratio(total)) : "";
    out += "all,all," + r + ',' + r + ',' + r + ",1\n";
    return out;
}

std::string heatmap_csv(const HeatmapGrid& grid) {
    std::string out = "row,col,mean_reward_milli,payments\n";
    for (const auto& c : grid.cells) {
        out += std::to_string(c.pos.row) + ',' + std::to_string(c.pos.col) + ',' +
               (c.mean_reward ? std::to_string(c.mean_reward->milli()) : std::string()) + ',' +
               std::to_string(c.payments) + '\n';
    }
    return out;
}

std::string reward_csv(const SweepTable& table) {
    std::string out =
        "param,value,mean_reward,mean_reward_min,mean_reward_max,p90_reward,p90_min,p90_max,seeds\n";
    const std::string name(to_string(table.param));
    for (const auto& r : table.rows) {
        out += name + ',' + std::to_string(r.value) + ',' + fmt_double(r.mean_reward.mean) + ',' +
               fmt_double(r.mean_reward.min) + ',' + fmt_double(r.mean_reward.max) + ',' +
               fmt_double(r.p90_reward.mean) + ',' + fmt_double(r.p90_reward.min) + ',' +
               fmt_double(r.p90_reward.max) + ',' + std::to_string(r.seeds) + '\n';
    }
    return out;
}

}  // namespace crowdsense::metrics
