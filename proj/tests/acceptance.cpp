// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "cli.hpp"

#include "crowdsense/metrics.hpp"
#include "crowdsense/protocol.hpp"
#include "crowdsense/sim.hpp"
#include "crowdsense/storage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace crowdsense;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

Verdict fail(std::string why) { return {false, std::move(why)}; }

std::string fmt(const std::vector<double>& xs) {
    std::string s;
    char buf[32];
    for (double x : xs) {
        std::snprintf(buf, sizeof buf, "%s%.4g", s.empty() ? "" : " ", x);
        s += buf;
    }
    return s;
}

// Monotone in the given direction, allowing at most one adjacent pair to go
// the wrong way by no more than tol (relative to the earlier value when
// relative is set, absolute otherwise).
bool monotone_with_allowance(const std::vector<double>& v, bool increasing, double tol, bool relative) {
    int violations = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double a = v[i - 1], b = v[i];
        if (increasing ? b >= a : b <= a) continue;
        const double limit = relative ? tol * std::abs(a) : tol;
        if (std::abs(b - a) > limit) return false;
        ++violations;
    }
    return violations <= 1;
}

std::vector<std::uint64_t> ten_seeds() {
    std::vector<std::uint64_t> s;
    for (std::uint64_t i = 1; i <= 10; ++i) s.push_back(i);
    return s;
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- 1 ----------------------------------------------------------------------

Verdict protocol_invariants() {
    using namespace protocol;
    const int sequences = 10000;
    int serves = 0;
    for (int seq = 0; seq < sequences; ++seq) {
        std::mt19937_64 rng(1000 + seq);
        CampaignParams p;
        p.min_participants = 1 + static_cast<std::uint32_t>(rng() % 4);
        p.chunk_size = 16;
        p.subscription_fee = Money::from_milli(1 + static_cast<std::int64_t>(rng() % 2000));
        p.source_reward = Money::from_milli(static_cast<std::int64_t>(rng() % 2000));
        p.verifier_payment = Money::from_milli(static_cast<std::int64_t>(rng() % 2000));
        p.reader_fee = Money::from_milli(1 + static_cast<std::int64_t>(rng() % 2000));
        auto c = Campaign::create(p, static_cast<std::uint64_t>(seq));

        // expected treasury from params only
        Money expected;
        std::map<std::string, int> claims;
        std::map<std::string, std::string> elected;
        std::set<std::string> rejected;
        std::map<std::string, std::vector<ContentAddress>> registered;

        for (int op = 0; op < 100; ++op) {
            const std::string s = "s" + std::to_string(rng() % 6);
            const std::string v = "v" + std::to_string(rng() % 3);
            const Money before = c.treasury();
            try {
                switch (rng() % 6) {
                    case 0:
                        c.subscribe_source(s, p.subscription_fee);
                        expected += p.subscription_fee;
                        break;
                    case 1: {
                        std::vector<ContentAddress> locs{
                            storage::content_address(storage::to_bytes(s + std::to_string(op)))};
                        c.register_data(s, locs);
                        registered[s] = locs;
                        break;
                    }
                    case 2:
                        c.claim_verification(v, s);
                        ++claims[s];
                        elected[s] = v;
                        break;
                    case 3: {
                        const bool valid = rng() % 3 != 0;
                        const std::string who = elected.contains(s) && rng() % 4 ? elected[s] : v;
                        c.report_verdict(who, s, valid);
                        expected -= p.verifier_payment;
                        if (valid) expected -= p.source_reward;
                        if (!valid) rejected.insert(s);
                        break;
                    }
                    case 4:
                        c.try_finalize();
                        break;
                    case 5: {
                        const std::size_t verified_before = c.verified_count();
                        const bool open = c.phase() == Phase::Open;
                        const auto rel = c.serve_reader("r", p.reader_fee);
                        if (open || verified_before < p.min_participants) {
                            return fail("reader served before threshold, sequence " + std::to_string(seq));
                        }
                        expected += p.reader_fee;
                        for (const auto& src : rejected) {
                            for (const auto& a : registered[src]) {
                                if (std::find(rel.chunk_locations.begin(), rel.chunk_locations.end(), a) !=
                                    rel.chunk_locations.end()) {
                                    return fail("rejected chunk served, sequence " + std::to_string(seq));
                                }
                            }
                        }
                        ++serves;
                        break;
                    }
                }
            } catch (const ProtocolError&) {
                if (c.treasury() != before) return fail("failed op moved funds, sequence " + std::to_string(seq));
            }
            if (ledger_balance(c.ledger()) != c.treasury() || c.treasury() != expected) {
                return fail("funds conservation broken, sequence " + std::to_string(seq));
            }
        }
        for (const auto& [s, n] : claims) {
            if (n != 1) return fail("two verifiers elected for " + s + ", sequence " + std::to_string(seq));
        }
        if (replay_submissions(c.events()) != c.submissions()) {
            return fail("event replay mismatch, sequence " + std::to_string(seq));
        }
        for (const auto& [s, sub] : c.submissions()) {
            const auto n = std::count_if(c.ledger().begin(), c.ledger().end(), [&](const LedgerEntry& e) {
                return e.kind == LedgerKind::SourceReward && e.party == s;
            });
            if (n != (sub.status == SubmissionStatus::Verified ? 1 : 0)) {
                return fail("reward count wrong for " + s + ", sequence " + std::to_string(seq));
            }
        }
    }
    return {true, std::to_string(sequences) + " sequences, " + std::to_string(serves) + " reader serves"};
}

// --- 2 ----------------------------------------------------------------------

Verdict storage_round_trips() {
    using namespace storage;
    std::mt19937_64 rng(7);
    MemoryStore mem;
    const fs::path dir = fs::temp_directory_path() / "crowdsense-acceptance-store";
    fs::remove_all(dir);
    DirectoryStore disk(dir);
    const AeadCipher aead;
    const TestCipher test;
    const int n = 1000;
    int tamper_checks = 0;
    for (int i = 0; i < n; ++i) {
        Bytes data(rng() % 2000);
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        const std::size_t cs = 2 + rng() % 256;
        const auto chunks = chunk_data(data, cs);
        if (chunks.size() != (data.size() + cs) / cs) return fail("chunk count");
        for (const auto& c : chunks) {
            if (c.payload.size() != cs) return fail("non-uniform chunk");
        }
        if (unchunk_data(chunks) != data) return fail("unchunk(chunk(x)) != x");

        SymmetricKey key;
        for (auto& b : key) b = static_cast<std::uint8_t>(rng());
        const Cipher& cipher = i % 2 ? static_cast<const Cipher&>(aead) : static_cast<const Cipher&>(test);
        std::set<std::size_t> sizes;
        for (std::size_t k = 0; k < chunks.size(); ++k) {
            const auto env = encrypt_chunk(key, chunks[k], {1, "src", k}, cipher);
            if (decrypt_chunk(key, env, cipher) != chunks[k]) return fail("decrypt(encrypt(x)) != x");
            const auto wire = env.serialize();
            sizes.insert(wire.size());
            ContentStore& store = k % 2 ? static_cast<ContentStore&>(disk) : static_cast<ContentStore&>(mem);
            if (store.get(store.put(wire)) != wire) return fail("get(put(x)) != x");

            auto bad = env;
            const std::size_t bit = rng() % ((bad.ciphertext.size() + bad.tag.size()) * 8);
            auto& target = bit / 8 < bad.ciphertext.size() ? bad.ciphertext : bad.tag;
            const std::size_t at = bit / 8 < bad.ciphertext.size() ? bit / 8 : bit / 8 - bad.ciphertext.size();
            target[at] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            try {
                decrypt_chunk(key, bad, cipher);
                return fail("tampered envelope accepted");
            } catch (const StorageError&) {
                ++tamper_checks;
            }
        }
        if (sizes.size() != 1) return fail("stored envelope sizes differ within a dataset");
    }
    fs::remove_all(dir);
    return {true, std::to_string(n) + " datasets, " + std::to_string(tamper_checks) + " tamper probes rejected"};
}

// --- 3 to 7 -------------------------------------------------------------------

// min_persons x num_agents grid of 10-seed sweeps on the default scenario;
// criteria 3, 4 and 6 all read from it.
struct DensityGrid {
    std::vector<std::int64_t> min_persons{3, 5, 7, 9};
    std::vector<std::int64_t> agents{25, 50, 100, 200};
    std::map<std::int64_t, metrics::SweepTable> by_min;  // each sweeps num_agents
};

const DensityGrid& density_grid() {
    static const DensityGrid grid = [] {
        DensityGrid g;
        const auto seeds = ten_seeds();
        for (auto m : g.min_persons) {
            const auto cfg = metrics::apply_param(sim::default_config(), metrics::SweepParam::MinPersons, m);
            g.by_min[m] = metrics::sweep(cfg, metrics::SweepParam::NumAgents, g.agents, seeds, workers());
        }
        return g;
    }();
    return grid;
}

const metrics::SweepRow& cell(std::int64_t min_persons, std::int64_t agents) {
    const auto& g = density_grid();
    const auto& rows = g.by_min.at(min_persons).rows;
    return *std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.value == agents; });
}

Verdict reward_vs_min_persons() {
    std::vector<double> means;
    for (auto m : density_grid().min_persons) means.push_back(cell(m, 100).mean_reward.mean);
    const bool ok = monotone_with_allowance(means, true, 0.05, true);
    return {ok, "mean reward at N=100 for min_persons 3,5,7,9: " + fmt(means)};
}

Verdict p90_vs_density() {
    std::vector<double> p90;
    for (auto n : density_grid().agents) p90.push_back(cell(7, n).p90_reward.mean);
    const bool ok = monotone_with_allowance(p90, false, 0.05, true);
    return {ok, "p90 reward at min_persons 7 for N 25,50,100,200: " + fmt(p90)};
}

Verdict satisfied_vs_freshness() {
    const std::vector<std::int64_t> windows{600, 3600, 7200, 14400};
    const auto seeds = ten_seeds();
    auto ratios = [&](std::uint32_t agents) {
        auto cfg = sim::default_config();
        cfg.num_agents = agents;
        const auto t = metrics::sweep(cfg, metrics::SweepParam::FreshnessWindow, windows, seeds, workers());
        std::vector<double> out;
        for (const auto& r : t.rows) out.push_back(r.satisfied_ratio.mean);
        return out;
    };
    const auto low = ratios(25);
    const auto high = ratios(200);
    const double gain = low.back() - low.front();
    const auto [mn, mx] = std::minmax_element(high.begin(), high.end());
    const double spread = *mx - *mn;
    const bool ok = gain >= 0.05 && spread <= 0.05;
    char buf[96];
    std::snprintf(buf, sizeof buf, " (gain %.3f, spread %.3f)", gain, spread);
    return {ok, "N=25: " + fmt(low) + " | N=200: " + fmt(high) + buf};
}

Verdict satisfied_vs_density() {
    const auto& g = density_grid();
    std::string detail;
    bool ok = true;
    for (auto m : g.min_persons) {
        std::vector<double> row;
        for (auto n : g.agents) row.push_back(cell(m, n).satisfied_ratio.mean);
        if (!monotone_with_allowance(row, true, 0.02, false)) {
            ok = false;
            detail += "min_persons " + std::to_string(m) + " not rising in N: " + fmt(row) + "; ";
        }
    }
    for (auto n : g.agents) {
        std::vector<double> col;
        for (auto m : g.min_persons) col.push_back(cell(m, n).satisfied_ratio.mean);
        if (!monotone_with_allowance(col, false, 0.02, false)) {
            ok = false;
            detail += "N " + std::to_string(n) + " not falling in min_persons: " + fmt(col) + "; ";
        }
    }
    if (ok) {
        std::vector<double> diag;
        for (auto m : g.min_persons) diag.push_back(cell(m, 25).satisfied_ratio.mean);
        detail = "4x4 grid monotone; N=25 over min_persons 3..9: " + fmt(diag);
    }
    return {ok, detail};
}

Verdict centre_zone_structure() {
    int wins = 0;
    for (auto seed : ten_seeds()) {
        auto cfg = sim::default_config();
        cfg.rng_seed = seed;
        sim::RunOptions opts;
        opts.keep_trace = false;
        const auto r = sim::run_simulation(cfg, opts);
        // centre of the 3x3 grid
        const sim::ZoneState* centre = nullptr;
        double pay = 0, ratio = 0;
        int peripheral = 0;
        for (const auto& z : r.zones) {
            if (z.spec.grid == sim::GridPos{1, 1}) {
                centre = &z;
                continue;
            }
            pay += static_cast<double>(z.payments_count);
            ratio += metrics::satisfied_ratio(z);
            ++peripheral;
        }
        if (!centre || peripheral == 0) return fail("default layout has no centre cell");
        if (static_cast<double>(centre->payments_count) > pay / peripheral &&
            metrics::satisfied_ratio(*centre) > ratio / peripheral) {
            ++wins;
        }
    }
    return {wins >= 8, std::to_string(wins) + "/10 seeds"};
}

// --- 8 ----------------------------------------------------------------------

Verdict ask_dynamics() {
    const sim::SimConfig cfg;
    std::vector<sim::Agent> agents(3);
    for (sim::AgentId i = 0; i < 3; ++i) agents[i].id = i;
    agents[0].ask = Money::from_milli(1000);
    agents[1].ask = Money::from_milli(1000);
    agents[2].ask = cfg.ask_floor;
    sim::OfferRound round;
    round.offers = {{0, agents[0].ask, 0}, {1, agents[1].ask, 0}, {2, agents[2].ask, 0}};
    round.selected = {0};
    round.satisfied = true;
    sim::update_asks(agents, round, cfg);
    const bool ok = agents[0].ask.milli() == 1100 && agents[1].ask.milli() == 900 &&
                    agents[2].ask == cfg.ask_floor;
    return {ok, "selected " + agents[0].ask.to_string() + ", passed over " + agents[1].ask.to_string() +
                    ", at floor " + agents[2].ask.to_string()};
}

// --- 9 ----------------------------------------------------------------------

int quiet_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "crowdsense");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
    return code;
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "crowdsense-acceptance-det";
    fs::remove_all(root);
    for (const char* run : {"a", "b"}) {
        if (quiet_cli({"run", "--seed", "42", "--out", (root / run).string()}) != 0) return fail("run failed");
    }
    for (const char* f : {"trace.jsonl", "ecdf.csv", "satisfied.csv", "heatmap.csv"}) {
        if (slurp(root / "a" / f) != slurp(root / "b" / f)) return fail(std::string(f) + " differs");
    }
    if (slurp(root / "a" / "trace.jsonl").empty()) return fail("empty trace");
    fs::remove_all(root);
    return {true, "trace and metric CSVs byte-identical across two seed-42 runs"};
}

// --- 10 ---------------------------------------------------------------------

Verdict end_to_end() {
    const fs::path root = fs::temp_directory_path() / "crowdsense-acceptance-e2e";
    fs::remove_all(root);
    std::ostringstream out, err;
    cli::DemoOptions demo;
    demo.out_dir = root / "demo";
    if (const int code = cli::protocol_demo(demo, out, err); code != 0) {
        return fail("protocol-demo exited " + std::to_string(code) + ": " + err.str());
    }

    if (quiet_cli({"run", "--seed", "42", "--integration", "--out", (root / "int").string()}) != 0) {
        return fail("integration run failed");
    }
    // independent sum of what the simulator paid, from the trace
    std::map<sim::AgentId, Money> from_trace;
    const auto cfg = sim::default_config();
    auto c = cfg;
    c.rng_seed = 42;
    const auto result = sim::run_simulation(c);
    for (const auto& r : result.rounds) {
        for (auto id : r.selected) {
            for (const auto& o : r.offers) {
                if (o.agent == id) from_trace[id] += o.ask;
            }
        }
    }
    std::istringstream csv(slurp(root / "int" / "integration.csv"));
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0;
    Money total;
    while (std::getline(csv, line)) {
        unsigned long id = 0;
        long long sim_milli = 0, ledger_milli = 0;
        if (std::sscanf(line.c_str(), "%lu,%lld,%lld", &id, &sim_milli, &ledger_milli) != 3) {
            return fail("bad integration.csv row: " + line);
        }
        const Money expected = from_trace[static_cast<sim::AgentId>(id)];
        if (ledger_milli != sim_milli || ledger_milli != expected.milli()) {
            return fail("agent " + std::to_string(id) + ": ledger " + std::to_string(ledger_milli) + " sim " +
                        std::to_string(sim_milli) + " trace " + std::to_string(expected.milli()));
        }
        total += Money::from_milli(ledger_milli);
        ++rows;
    }
    if (rows != cfg.num_agents) return fail("integration.csv has " + std::to_string(rows) + " rows");
    fs::remove_all(root);
    return {true, "demo exit 0; " + std::to_string(rows) + " agents, ledger total " + total.to_string() +
                      " equals simulator total"};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"protocol invariants over random operation sequences", protocol_invariants},
        {"storage round trips, uniform chunks, tamper rejection", storage_round_trips},
        {"mean reward non-decreasing in min_persons", reward_vs_min_persons},
        {"p90 reward non-increasing in density", p90_vs_density},
        {"freshness helps at low density, irrelevant at high", satisfied_vs_freshness},
        {"satisfied ratio rises with density, falls with min_persons", satisfied_vs_density},
        {"centre zone busier and more satisfied than periphery", centre_zone_structure},
        {"ask dynamics 1.0 -> 1.1 / 0.9 / floor", ask_dynamics},
        {"byte-identical reruns", determinism},
        {"protocol demo and integration ledger totals", end_to_end},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = fail(std::string("exception: ") + e.what());
        }
        failed += !v.pass;
        std::printf("%s criterion %zu: %s -- %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
