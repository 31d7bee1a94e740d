#include "cli.hpp"

#include "crowdsense/config.hpp"
#include "crowdsense/metrics.hpp"
#include "crowdsense/protocol.hpp"
#include "crowdsense/sim.hpp"
#include "crowdsense/storage.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace crowdsense::cli {

namespace {

using json = nlohmann::ordered_json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvariantViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& invariant) {
    if (!ok) throw InvariantViolation(invariant);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Write to a sibling temp file and rename, so readers never see partial files.
void write_file(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sim::ConfigError("--config", "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Git's SHA-256 object id for a blob holding the canonical config text.
std::string config_hash(const std::string& canonical) {
    std::string blob = "blob " + std::to_string(canonical.size());
    blob.push_back('\0');
    blob += canonical;
    return storage::content_address(storage::to_bytes(blob)).hex();
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    try {
        if (auto dots = text.find(".."); dots != std::string::npos) {
            const auto lo = std::stoull(text.substr(0, dots));
            const auto hi = std::stoull(text.substr(dots + 2));
            if (hi < lo) throw sim::ConfigError("--seeds", "empty range " + text);
            for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        } else {
            std::istringstream in(text);
            std::string item;
            while (std::getline(in, item, ',')) seeds.push_back(std::stoull(item));
        }
    } catch (const std::logic_error&) {
        throw sim::ConfigError("--seeds", "expected A..B or a comma list, got '" + text + "'");
    }
    if (seeds.empty()) throw sim::ConfigError("--seeds", "no seeds");
    return seeds;
}

std::vector<std::int64_t> parse_values(const std::string& text) {
    std::vector<std::int64_t> values;
    std::istringstream in(text);
    std::string item;
    try {
        while (std::getline(in, item, ',')) values.push_back(std::stoll(item));
    } catch (const std::logic_error&) {
        throw sim::ConfigError("--values", "expected a comma list of integers, got '" + text + "'");
    }
    if (values.empty()) throw sim::ConfigError("--values", "no values");
    return values;
}

// A config file or a manifest written by an earlier run.
struct LoadedConfig {
    sim::SimConfig config;
    std::optional<json> manifest;
};

LoadedConfig load(const std::string& path) {
    if (path.empty()) return {sim::default_config(), std::nullopt};
    const std::string text = read_file(path);
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw sim::ConfigError("<document>", e.what());
    }
    if (root.is_object() && root.contains("manifest_version")) {
        return {config::parse_config(root.at("config").dump()), root};
    }
    return {config::parse_config(text), std::nullopt};
}

fs::path resolve_out(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("CROWDSENSE_OUT"); env && *env) return env;
    throw sim::ConfigError("--out", "no output directory (pass --out or set CROWDSENSE_OUT)");
}

json manifest_base(const std::string& command, const sim::SimConfig& cfg, const fs::path& out_dir) {
    const std::string canonical = config::dump_config(cfg);
    json m;
    m["manifest_version"] = 1;
    m["command"] = command;
    m["config_hash"] = config_hash(canonical);
    m["config"] = json::parse(canonical);
    m["out_dir"] = out_dir.string();
    return m;
}

void add_timings(json& manifest, std::chrono::system_clock::time_point started,
                 std::chrono::steady_clock::time_point t0) {
    using namespace std::chrono;
    manifest["timings"] = {
        {"started_unix_ms", duration_cast<milliseconds>(started.time_since_epoch()).count()},
        {"elapsed_ms", duration_cast<milliseconds>(steady_clock::now() - t0).count()}};
}

void write_run_metrics(const fs::path& dir, const sim::SimResult& result, bool with_trace) {
    const auto rewards = result.agent_rewards();
    write_file(dir / "ecdf.csv", rewards.empty() ? std::string("value,fraction\n")
                                                 : metrics::ecdf_csv(metrics::ecdf(rewards)));
    write_file(dir / "satisfied.csv", metrics::satisfied_csv(result.zones));
    // free-form zones have no grid cell
    const bool gridded = !result.zones.empty() &&
                         std::all_of(result.zones.begin(), result.zones.end(),
                                     [](const sim::ZoneState& z) { return z.spec.grid.has_value(); });
    if (gridded) write_file(dir / "heatmap.csv", metrics::heatmap_csv(metrics::heatmap(result.zones)));
    if (with_trace) write_file(dir / "trace.jsonl", sim::trace_jsonl(result));
}

// --- run -------------------------------------------------------------------

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool integration = false;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();
    LoadedConfig loaded = load(args.config);
    sim::SimConfig cfg = loaded.config;
    if (args.seed) {
        cfg.rng_seed = *args.seed;
    } else if (loaded.manifest && loaded.manifest->contains("seeds")) {
        cfg.rng_seed = loaded.manifest->at("seeds").at(0).get<std::uint64_t>();
    }
    bool integration = args.integration;
    if (loaded.manifest && loaded.manifest->value("integration", false)) integration = true;

    const fs::path dir = resolve_out(args.out);
    ensure_dir(dir);
    json manifest = manifest_base("run", cfg, dir);
    manifest["seeds"] = json::array({cfg.rng_seed});
    manifest["integration"] = integration;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    sim::RunOptions opts;
    opts.integration = integration;
    const sim::SimResult result = sim::run_simulation(cfg, opts);
    write_run_metrics(dir, result, true);

    int status = kOk;
    if (integration) {
        const auto& ledger = *result.protocol_rewards;
        std::string csv = "agent,sim_reward_milli,ledger_reward_milli\n";
        std::size_t mismatches = 0;
        for (const auto& a : result.agents) {
            auto it = ledger.find(a.id);
            const Money on_ledger = it == ledger.end() ? Money() : it->second;
            if (on_ledger != a.accumulated_reward) ++mismatches;
            csv += std::to_string(a.id) + ',' + std::to_string(a.accumulated_reward.milli()) + ',' +
                   std::to_string(on_ledger.milli()) + '\n';
        }
        write_file(dir / "integration.csv", csv);
        if (mismatches != 0) {
            err << "invariant violated: protocol-integration consistency (" << mismatches
                << " agents differ)\n";
            status = kInvariantViolation;
        } else {
            out << "integration: " << result.campaigns_closed
                << " campaigns closed, ledger rewards match simulation\n";
        }
    }

    add_timings(manifest, started, t0);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    out << "run: seed " << cfg.rng_seed << ", " << result.rounds.size() << " zone rounds, output in "
        << dir.string() << "\n";
    return status;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
    std::string config;
    std::string param;
    std::string values;
    std::string seeds;
    std::string out;
    unsigned workers = 0;
    bool trace = false;
};

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();
    LoadedConfig loaded = load(args.config);
    const json* m = loaded.manifest ? &*loaded.manifest : nullptr;

    std::string param_name = args.param;
    if (param_name.empty() && m && m->contains("param")) param_name = m->at("param").get<std::string>();
    if (param_name.empty()) throw sim::ConfigError("--param", "required");
    metrics::SweepParam param;
    try {
        param = metrics::sweep_param_from_string(param_name);
    } catch (const metrics::MetricsError& e) {
        throw sim::ConfigError("--param", e.what());
    }

    std::vector<std::int64_t> values;
    if (!args.values.empty()) {
        values = parse_values(args.values);
    } else if (m && m->contains("values")) {
        values = m->at("values").get<std::vector<std::int64_t>>();
    } else {
        throw sim::ConfigError("--values", "required");
    }
    std::vector<std::uint64_t> seeds;
    if (!args.seeds.empty()) {
        seeds = parse_seeds(args.seeds);
    } else if (m && m->contains("seeds")) {
        seeds = m->at("seeds").get<std::vector<std::uint64_t>>();
    } else {
        seeds = {loaded.config.rng_seed};
    }
    for (auto v : values) {
        metrics::apply_param(loaded.config, param, v).validate();
    }

    const fs::path dir = resolve_out(args.out);
    ensure_dir(dir);
    json manifest = manifest_base("sweep", loaded.config, dir);
    manifest["param"] = param_name;
    manifest["values"] = values;
    manifest["seeds"] = seeds;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::mutex io_mu;
    std::optional<std::string> cell_error;
    auto on_cell = [&](const sim::SimResult& result, const metrics::RunSummary& summary) {
        try {
            const fs::path cell = dir / "cells" / (param_name + "-" + std::to_string(summary.value)) /
                                  ("seed-" + std::to_string(summary.seed));
            ensure_dir(cell);
            write_run_metrics(cell, result, args.trace);
        } catch (const std::exception& e) {
            std::lock_guard lock(io_mu);
            if (!cell_error) cell_error = e.what();
        }
    };
    const unsigned workers =
        args.workers ? args.workers : std::max(1u, std::thread::hardware_concurrency());
    const auto table = metrics::sweep(loaded.config, param, values, seeds, workers, on_cell);
    if (cell_error) throw IoError(*cell_error);

    write_file(dir / "satisfied.csv", metrics::satisfied_csv(table));
    write_file(dir / "reward.csv", metrics::reward_csv(table));
    add_timings(manifest, started, t0);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    (void)err;
    out << "sweep: " << param_name << " over " << values.size() << " values x " << seeds.size()
        << " seeds, output in " << dir.string() << "\n";
    return kOk;
}

// --- print-config ----------------------------------------------------------

int cmd_print_config(const std::string& path, std::ostream& out) {
    out << config::dump_config(load(path).config);
    return kOk;
}

}  // namespace

// --- protocol demo ---------------------------------------------------------

int protocol_demo(const DemoOptions& options, std::ostream& out, std::ostream& err) {
    using namespace protocol;
    try {
        ensure_dir(options.out_dir);
        storage::DirectoryStore store(options.out_dir / "dfs");

        CampaignParams params;
        params.min_participants = options.min_participants;
        params.chunk_size = 64;
        auto campaign = Campaign::create(params, 0x5eed);

        auto source_name = [](unsigned i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "source-%02u", i + 1);
            return std::string(buf);
        };
        auto is_rejected = [&](unsigned i) { return i + options.rejected >= options.sources; };

        // Readings of different lengths; equal-size chunks hide the difference.
        std::set<std::string> rejected_sources;
        for (unsigned i = 0; i < options.sources; ++i) {
            const std::string source = source_name(i);
            const auto grant = campaign.subscribe_source(source, params.subscription_fee);
            std::string reading = "{\"source\":\"" + source + "\",\"pm25\":[";
            for (unsigned k = 0; k <= i * 3; ++k) reading += (k ? "," : "") + std::to_string(10 + k % 7);
            reading += "]}";
            if (is_rejected(i)) {
                reading = "garbage:" + std::to_string(i);
                rejected_sources.insert(source);
            }
            campaign.register_data(source, storage::upload_dataset(store, grant.key,
                                                                   storage::to_bytes(reading),
                                                                   grant.chunk_size,
                                                                   campaign.campaign_id(), source));
        }

        // One verifier claims every submission; a second one always loses.
        const PartyId verifier = "verifier-1";
        auto format_ok = [](storage::ByteView b) {
            return b.size() >= 2 && b.front() == '{' && b.back() == '}';
        };
        for (unsigned i = 0; i < options.sources; ++i) {
            const std::string source = source_name(i);
            const auto release = campaign.claim_verification(verifier, source);
            bool second_lost = false;
            try {
                campaign.claim_verification("verifier-2", source);
            } catch (const ProtocolError& e) {
                second_lost = e.code() == ProtocolErrc::AlreadyClaimed;
            }
            require(second_lost, "single-verifier election");
            const bool ok = storage::verify_dataset(store, release.chunk_locations, release.key, format_ok);
            campaign.report_verdict(verifier, source, ok);
            require(ok == !rejected_sources.contains(source), "verifier verdict matches data validity");
            require(ledger_balance(campaign.ledger()) == campaign.treasury(), "funds conservation");
        }

        const bool closed = campaign.try_finalize();
        const bool should_close = campaign.verified_count() >= options.min_participants;
        require(closed == should_close, "threshold release");

        json reader;
        reader["reader"] = "reader-1";
        try {
            const auto release = campaign.serve_reader("reader-1", params.reader_fee);
            require(closed, "threshold gating");
            std::set<ContentAddress> served(release.chunk_locations.begin(), release.chunk_locations.end());
            std::set<ContentAddress> expected;
            for (const auto& [source, sub] : campaign.submissions()) {
                if (sub.status == SubmissionStatus::Verified) {
                    expected.insert(sub.chunk_locations.begin(), sub.chunk_locations.end());
                }
            }
            require(served == expected, "reader receives exactly the verified chunks");
            reader["status"] = "served";
            reader["chunks"] = release.chunk_locations.size();
        } catch (const ProtocolError& e) {
            require(e.code() == ProtocolErrc::NotYetClosed && !closed, "threshold gating");
            reader["status"] = std::string(to_string(e.code()));
        }

        require(ledger_balance(campaign.ledger()) == campaign.treasury(), "funds conservation");
        require(replay_submissions(campaign.events()) == campaign.submissions(),
                "event-log replay reconstructs submissions");
        const auto rewards = source_reward_totals(campaign.ledger());
        for (const auto& [source, sub] : campaign.submissions()) {
            const std::size_t reward_entries = static_cast<std::size_t>(std::count_if(
                campaign.ledger().begin(), campaign.ledger().end(), [&](const LedgerEntry& e) {
                    return e.kind == LedgerKind::SourceReward && e.party == source;
                }));
            require(reward_entries == (sub.status == SubmissionStatus::Verified ? 1u : 0u),
                    "one reward per verified source, none for rejected");
        }
        std::set<std::size_t> sizes;
        for (const auto& [source, sub] : campaign.submissions()) {
            for (const auto& addr : sub.chunk_locations) sizes.insert(store.stored_size(addr));
        }
        require(sizes.size() <= 1, "uniform stored object size");

        write_file(options.out_dir / "events.jsonl", export_events_jsonl(campaign.events()));
        write_file(options.out_dir / "ledger.csv", export_ledger_csv(campaign.ledger()));

        json report;
        report["sources"] = options.sources;
        report["min_participants"] = options.min_participants;
        report["verified"] = campaign.verified_count();
        report["rejected"] = rejected_sources.size();
        report["phase"] = campaign.phase() == Phase::Closed ? "Closed" : "Open";
        report["treasury_milli"] = campaign.treasury().milli();
        json totals = json::object();
        for (const auto& [party, amount] : rewards) totals[party] = amount.milli();
        report["source_rewards_milli"] = std::move(totals);
        report["reader"] = std::move(reader);
        report["stored_objects"] = store.object_count();
        write_file(options.out_dir / "demo.json", report.dump(2) + "\n");

        out << "protocol-demo: " << campaign.verified_count() << "/" << options.sources
            << " verified, campaign " << (closed ? "closed" : "still open") << ", output in "
            << options.out_dir.string() << "\n";
        return kOk;
    } catch (const InvariantViolation& e) {
        err << "invariant violated: " << e.what() << "\n";
        return kInvariantViolation;
    } catch (const ProtocolError& e) {
        err << "invariant violated: unexpected protocol error: " << e.what() << "\n";
        return kInvariantViolation;
    }
}

// --- entry -----------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"crowdsense: privacy-threshold crowd-sensing campaigns and market simulation"};
    app.require_subcommand(0, 1);

    bool print_config = false;
    std::string top_config;
    app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");
    app.add_option("--config", top_config, "Scenario file (for --print-config)");

    RunArgs run_args;
    std::optional<std::uint64_t> seed;
    auto* run_cmd = app.add_subcommand("run", "Run one simulation and write trace and metrics");
    run_cmd->add_option("--config", run_args.config, "Scenario file or a manifest.json to rerun");
    run_cmd->add_option("--seed", seed, "RNG seed (overrides the config)");
    run_cmd->add_option("--out", run_args.out, "Output directory (default: $CROWDSENSE_OUT)");
    run_cmd->add_flag("--integration", run_args.integration,
                      "Route satisfied rounds through protocol campaigns");
    run_cmd->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one parameter over values and seeds");
    sweep_cmd->add_option("--config", sweep_args.config, "Scenario file or a manifest.json to rerun");
    sweep_cmd->add_option("--param", sweep_args.param, "min_persons | num_agents | freshness_window");
    sweep_cmd->add_option("--values", sweep_args.values, "Comma list, e.g. 3,5,7,9");
    sweep_cmd->add_option("--seeds", sweep_args.seeds, "A..B or comma list");
    sweep_cmd->add_option("--out", sweep_args.out, "Output directory (default: $CROWDSENSE_OUT)");
    sweep_cmd->add_option("--workers", sweep_args.workers, "Parallel runs (default: all cores)");
    sweep_cmd->add_flag("--trace", sweep_args.trace, "Also write per-cell trace.jsonl");
    sweep_cmd->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

    DemoOptions demo;
    std::string demo_out;
    auto* demo_cmd = app.add_subcommand("protocol-demo", "Scripted end-to-end campaign");
    demo_cmd->add_option("--out", demo_out, "Output directory (default: $CROWDSENSE_OUT)");
    demo_cmd->add_option("--sources", demo.sources, "Number of data sources")->check(CLI::Range(1u, 999u));
    demo_cmd->add_option("--min-participants", demo.min_participants, "Anonymity-set threshold")
        ->check(CLI::Range(1u, 999u));
    demo_cmd->add_option("--reject", demo.rejected, "How many sources upload malformed data");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kBadConfig;
    }

    try {
        if (print_config) {
            std::string path = top_config;
            if (run_cmd->parsed()) path = run_args.config;
            if (sweep_cmd->parsed()) path = sweep_args.config;
            return cmd_print_config(path, out);
        }
        if (run_cmd->parsed()) {
            run_args.seed = seed;
            return cmd_run(run_args, out, err);
        }
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, out, err);
        if (demo_cmd->parsed()) {
            if (demo.rejected > demo.sources) {
                throw sim::ConfigError("--reject", "cannot exceed --sources");
            }
            demo.out_dir = resolve_out(demo_out);
            return protocol_demo(demo, out, err);
        }
        out << app.help();
        return kBadConfig;
    } catch (const sim::ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kBadConfig;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const storage::StorageError& e) {
        err << "io error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const fs::filesystem_error& e) {
        err << "io error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const std::logic_error& e) {
        err << "invariant violated: " << e.what() << "\n";
        return kInvariantViolation;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace crowdsense::cli
