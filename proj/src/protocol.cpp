#include "crowdsense/protocol.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>

namespace crowdsense::protocol {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kErrcNames[] = {
    "invalid-params",   "fee-mismatch",       "duplicate-subscription", "campaign-closed",
    "no-subscription",  "empty-submission",   "invalid-transition",     "already-claimed",
    "no-such-submission", "unauthorized-verifier", "not-yet-closed",
};

constexpr std::string_view kStatusNames[] = {"Announced", "Registered", "UnderVerification",
                                             "Verified", "Rejected"};

constexpr std::string_view kLedgerNames[] = {"FeeIn", "SourceReward", "VerifierPayment",
                                             "ReaderFeeIn"};

constexpr std::string_view kEventNames[] = {
    "CampaignCreated", "SourceSubscribed", "KeyIssued",      "DataRegistered",
    "VerificationRequested", "VerifierElected", "VerdictRecorded", "SourceRewarded",
    "CampaignClosed",  "ReaderServed",
};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::string_view (&names)[N], const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<Enum>(i);
    }
    throw std::invalid_argument(std::string("unknown ") + what + ": " + std::string(s));
}

[[noreturn]] void bad_replay(const std::string& what) {
    throw ProtocolError(ProtocolErrc::InvalidTransition, "replay: " + what);
}

}  // namespace

std::string_view to_string(ProtocolErrc code) { return kErrcNames[static_cast<int>(code)]; }
std::string_view to_string(SubmissionStatus s) { return kStatusNames[static_cast<int>(s)]; }
std::string_view to_string(LedgerKind k) { return kLedgerNames[static_cast<int>(k)]; }
std::string_view to_string(EventKind k) { return kEventNames[static_cast<int>(k)]; }

LedgerKind ledger_kind_from_string(std::string_view s) {
    return parse_enum<LedgerKind>(s, kLedgerNames, "ledger kind");
}

EventKind event_kind_from_string(std::string_view s) {
    return parse_enum<EventKind>(s, kEventNames, "event kind");
}

void CampaignParams::validate() const {
    if (min_participants < 1) {
        throw ProtocolError(ProtocolErrc::InvalidParams, "min_participants must be >= 1");
    }
    // The chunker needs one payload byte plus room for the padding marker.
    if (chunk_size < 2) {
        throw ProtocolError(ProtocolErrc::InvalidParams, "chunk_size must be >= 2");
    }
    const Money zero;
    if (subscription_fee < zero || source_reward < zero || verifier_payment < zero ||
        reader_fee < zero) {
        throw ProtocolError(ProtocolErrc::InvalidParams, "fees and rewards must be non-negative");
    }
}

// ---------------------------------------------------------------------------
// Campaign
// ---------------------------------------------------------------------------

Campaign::Campaign(const CampaignParams& params, std::uint64_t key_seed)
    : params_(params), key_seed_(key_seed), key_(storage::derive_key(key_seed)) {}

Campaign Campaign::create(const CampaignParams& params, std::uint64_t key_seed) {
    params.validate();
    Campaign c(params, key_seed);
    EventPayload p;
    p.count = params.min_participants;
    c.append_event(c.next_step(), EventKind::CampaignCreated, std::move(p));
    return c;
}

void Campaign::append_event(std::uint64_t step, EventKind kind, EventPayload payload) {
    events_.push_back(ProtocolEvent{step, kind, std::move(payload)});
}

void Campaign::post(std::uint64_t step, const PartyId& party, LedgerKind kind, Money amount) {
    LedgerEntry e{step, party, kind, amount};
    treasury_ += e.is_inflow() ? amount : -amount;
    ledger_.push_back(std::move(e));
}

DataSubmission& Campaign::submission_for(const PartyId& source, ProtocolErrc missing) {
    auto it = submissions_.find(source);
    if (it == submissions_.end()) {
        throw ProtocolError(missing, "unknown source '" + source + "'");
    }
    return it->second;
}

std::size_t Campaign::verified_count() const {
    return static_cast<std::size_t>(
        std::count_if(submissions_.begin(), submissions_.end(), [](const auto& kv) {
            return kv.second.status == SubmissionStatus::Verified;
        }));
}

SubscriptionGrant Campaign::subscribe_source(const PartyId& source, Money fee_paid,
                                             std::optional<Money> agreed_reward) {
    if (phase_ == Phase::Closed) {
        throw ProtocolError(ProtocolErrc::CampaignClosed, "campaign is closed");
    }
    if (submissions_.contains(source)) {
        throw ProtocolError(ProtocolErrc::DuplicateSubscription, "source '" + source + "'");
    }
    if (fee_paid != params_.subscription_fee) {
        throw ProtocolError(ProtocolErrc::FeeMismatch, "paid " + fee_paid.to_string() +
                                                           ", required " +
                                                           params_.subscription_fee.to_string());
    }
    const Money reward = agreed_reward.value_or(params_.source_reward);
    if (reward < Money()) {
        throw ProtocolError(ProtocolErrc::InvalidParams, "agreed reward must be non-negative");
    }

    const auto step = next_step();
    DataSubmission sub;
    sub.source = source;
    sub.agreed_reward = reward;
    submissions_.emplace(source, std::move(sub));
    post(step, source, LedgerKind::FeeIn, fee_paid);

    EventPayload subscribed;
    subscribed.source = source;
    subscribed.amount = fee_paid;
    subscribed.agreed_reward = reward;
    append_event(step, EventKind::SourceSubscribed, std::move(subscribed));
    EventPayload issued;
    issued.source = source;
    append_event(step, EventKind::KeyIssued, std::move(issued));

    return SubscriptionGrant{key_, params_.chunk_size};
}

void Campaign::register_data(const PartyId& source, std::vector<ContentAddress> chunk_locations) {
    if (phase_ == Phase::Closed) {
        throw ProtocolError(ProtocolErrc::CampaignClosed, "campaign is closed");
    }
    DataSubmission& sub = submission_for(source, ProtocolErrc::NoSubscription);
    if (sub.status != SubmissionStatus::Announced) {
        throw ProtocolError(ProtocolErrc::InvalidTransition,
                            "register_data on " + std::string(to_string(sub.status)));
    }
    if (chunk_locations.empty()) {
        throw ProtocolError(ProtocolErrc::EmptySubmission, "no chunk locations");
    }

    const auto step = next_step();
    sub.chunk_locations = std::move(chunk_locations);
    sub.status = SubmissionStatus::Registered;

    EventPayload registered;
    registered.source = source;
    registered.locations = sub.chunk_locations;
    append_event(step, EventKind::DataRegistered, std::move(registered));
    EventPayload request;
    request.source = source;
    append_event(step, EventKind::VerificationRequested, std::move(request));
}

DataRelease Campaign::claim_verification(const PartyId& verifier, const PartyId& source) {
    if (phase_ == Phase::Closed) {
        throw ProtocolError(ProtocolErrc::CampaignClosed, "campaign is closed");
    }
    DataSubmission& sub = submission_for(source, ProtocolErrc::NoSuchSubmission);
    switch (sub.status) {
        case SubmissionStatus::Registered:
            break;
        case SubmissionStatus::Announced:
            throw ProtocolError(ProtocolErrc::InvalidTransition, "no data registered yet");
        default:
            throw ProtocolError(ProtocolErrc::AlreadyClaimed,
                                "verifier already elected for '" + source + "'");
    }

    const auto step = next_step();
    sub.assigned_verifier = verifier;
    sub.status = SubmissionStatus::UnderVerification;

    EventPayload elected;
    elected.source = source;
    elected.verifier = verifier;
    append_event(step, EventKind::VerifierElected, std::move(elected));

    return DataRelease{sub.chunk_locations, key_};
}

void Campaign::report_verdict(const PartyId& verifier, const PartyId& source, bool valid) {
    if (phase_ == Phase::Closed) {
        throw ProtocolError(ProtocolErrc::CampaignClosed, "campaign is closed");
    }
    DataSubmission& sub = submission_for(source, ProtocolErrc::NoSuchSubmission);
    if (sub.status != SubmissionStatus::UnderVerification) {
        throw ProtocolError(ProtocolErrc::InvalidTransition,
                            "report_verdict on " + std::string(to_string(sub.status)));
    }
    if (sub.assigned_verifier != verifier) {
        throw ProtocolError(ProtocolErrc::UnauthorizedVerifier,
                            "'" + verifier + "' is not the elected verifier");
    }

    const auto step = next_step();
    sub.status = valid ? SubmissionStatus::Verified : SubmissionStatus::Rejected;

    EventPayload verdict;
    verdict.source = source;
    verdict.verifier = verifier;
    verdict.valid = valid;
    verdict.amount = params_.verifier_payment;
    append_event(step, EventKind::VerdictRecorded, std::move(verdict));
    post(step, verifier, LedgerKind::VerifierPayment, params_.verifier_payment);

    if (valid) {
        post(step, source, LedgerKind::SourceReward, sub.agreed_reward);
        EventPayload rewarded;
        rewarded.source = source;
        rewarded.amount = sub.agreed_reward;
        append_event(step, EventKind::SourceRewarded, std::move(rewarded));
    }
}

bool Campaign::try_finalize() {
    if (phase_ != Phase::Open) return false;
    const std::size_t verified = verified_count();
    if (verified < params_.min_participants) return false;

    const auto step = next_step();
    phase_ = Phase::Closed;
    EventPayload closed;
    closed.count = verified;
    append_event(step, EventKind::CampaignClosed, std::move(closed));
    return true;
}

DataRelease Campaign::serve_reader(const PartyId& reader, Money fee_paid) {
    if (phase_ != Phase::Closed) {
        throw ProtocolError(ProtocolErrc::NotYetClosed, "anonymity threshold not reached");
    }
    if (fee_paid != params_.reader_fee) {
        throw ProtocolError(ProtocolErrc::FeeMismatch, "paid " + fee_paid.to_string() +
                                                           ", required " +
                                                           params_.reader_fee.to_string());
    }

    DataRelease out{{}, key_};
    // std::map iterates in source order.
    for (const auto& [source, sub] : submissions_) {
        if (sub.status != SubmissionStatus::Verified) continue;
        out.chunk_locations.insert(out.chunk_locations.end(), sub.chunk_locations.begin(),
                                   sub.chunk_locations.end());
    }

    const auto step = next_step();
    post(step, reader, LedgerKind::ReaderFeeIn, fee_paid);
    EventPayload served;
    served.reader = reader;
    served.amount = fee_paid;
    served.count = out.chunk_locations.size();
    served.locations = out.chunk_locations;
    append_event(step, EventKind::ReaderServed, std::move(served));
    return out;
}

// ---------------------------------------------------------------------------
// Audit surface
// ---------------------------------------------------------------------------

Money ledger_balance(const std::vector<LedgerEntry>& ledger) {
    Money total;
    for (const auto& e : ledger) total += e.is_inflow() ? e.amount : -e.amount;
    return total;
}

std::map<PartyId, Money> source_reward_totals(const std::vector<LedgerEntry>& ledger) {
    std::map<PartyId, Money> totals;
    for (const auto& e : ledger) {
        if (e.kind == LedgerKind::SourceReward) totals[e.party] += e.amount;
    }
    return totals;
}

std::map<PartyId, DataSubmission> replay_submissions(const std::vector<ProtocolEvent>& events) {
    std::map<PartyId, DataSubmission> subs;
    auto find = [&](const ProtocolEvent& ev) -> DataSubmission& {
        if (!ev.payload.source) bad_replay(std::string(to_string(ev.kind)) + " without source");
        auto it = subs.find(*ev.payload.source);
        if (it == subs.end()) bad_replay("event for unknown source " + *ev.payload.source);
        return it->second;
    };
    auto expect = [](const DataSubmission& s, SubmissionStatus want, EventKind kind) {
        if (s.status != want) {
            bad_replay(std::string(to_string(kind)) + " while " + std::string(to_string(s.status)));
        }
    };

    for (const auto& ev : events) {
        switch (ev.kind) {
            case EventKind::SourceSubscribed: {
                if (!ev.payload.source) bad_replay("SourceSubscribed without source");
                DataSubmission s;
                s.source = *ev.payload.source;
                s.agreed_reward = ev.payload.agreed_reward.value_or(Money());
                if (!subs.emplace(s.source, s).second) bad_replay("duplicate subscription");
                break;
            }
            case EventKind::KeyIssued:
                expect(find(ev), SubmissionStatus::Announced, ev.kind);
                break;
            case EventKind::DataRegistered: {
                auto& s = find(ev);
                expect(s, SubmissionStatus::Announced, ev.kind);
                s.chunk_locations = ev.payload.locations;
                s.status = SubmissionStatus::Registered;
                break;
            }
            case EventKind::VerificationRequested:
                expect(find(ev), SubmissionStatus::Registered, ev.kind);
                break;
            case EventKind::VerifierElected: {
                auto& s = find(ev);
                expect(s, SubmissionStatus::Registered, ev.kind);
                if (!ev.payload.verifier) bad_replay("VerifierElected without verifier");
                s.assigned_verifier = ev.payload.verifier;
                s.status = SubmissionStatus::UnderVerification;
                break;
            }
            case EventKind::VerdictRecorded: {
                auto& s = find(ev);
                expect(s, SubmissionStatus::UnderVerification, ev.kind);
                if (!ev.payload.valid || ev.payload.verifier != s.assigned_verifier) {
                    bad_replay("verdict from non-elected verifier");
                }
                s.status = *ev.payload.valid ? SubmissionStatus::Verified : SubmissionStatus::Rejected;
                break;
            }
            case EventKind::SourceRewarded:
                expect(find(ev), SubmissionStatus::Verified, ev.kind);
                break;
            case EventKind::CampaignCreated:
            case EventKind::CampaignClosed:
            case EventKind::ReaderServed:
                break;
        }
    }
    return subs;
}

std::string export_events_jsonl(const std::vector<ProtocolEvent>& events) {
    std::string out;
    for (const auto& ev : events) {
        json payload = json::object();
        const auto& p = ev.payload;
        if (p.source) payload["source"] = *p.source;
        if (p.verifier) payload["verifier"] = *p.verifier;
        if (p.reader) payload["reader"] = *p.reader;
        if (p.amount) payload["amount_milli"] = p.amount->milli();
        if (p.agreed_reward) payload["agreed_reward_milli"] = p.agreed_reward->milli();
        if (p.valid) payload["valid"] = *p.valid;
        if (p.count) payload["count"] = *p.count;
        if (!p.locations.empty()) {
            json locs = json::array();
            for (const auto& a : p.locations) locs.push_back(a.hex());
            payload["locations"] = std::move(locs);
        }
        json line;
        line["step"] = ev.step;
        line["kind"] = to_string(ev.kind);
        line["payload"] = std::move(payload);
        out += line.dump();
        out += '\n';
    }
    return out;
}

std::vector<ProtocolEvent> parse_events_jsonl(std::string_view text) {
    std::vector<ProtocolEvent> events;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ProtocolEvent ev;
        ev.step = j.at("step").get<std::uint64_t>();
        ev.kind = event_kind_from_string(j.at("kind").get<std::string>());
        const json& p = j.at("payload");
        if (p.contains("source")) ev.payload.source = p["source"].get<std::string>();
        if (p.contains("verifier")) ev.payload.verifier = p["verifier"].get<std::string>();
        if (p.contains("reader")) ev.payload.reader = p["reader"].get<std::string>();
        if (p.contains("amount_milli")) {
            ev.payload.amount = Money::from_milli(p["amount_milli"].get<std::int64_t>());
        }
        if (p.contains("agreed_reward_milli")) {
            ev.payload.agreed_reward = Money::from_milli(p["agreed_reward_milli"].get<std::int64_t>());
        }
        if (p.contains("valid")) ev.payload.valid = p["valid"].get<bool>();
        if (p.contains("count")) ev.payload.count = p["count"].get<std::uint64_t>();
        if (p.contains("locations")) {
            for (const auto& h : p["locations"]) {
                ev.payload.locations.push_back(ContentAddress::from_hex(h.get<std::string>()));
            }
        }
        events.push_back(std::move(ev));
    }
    return events;
}

std::string export_ledger_csv(const std::vector<LedgerEntry>& ledger) {
    std::string out = "step,party,kind,amount_milli\n";
    for (const auto& e : ledger) {
        out += std::to_string(e.step) + ',' + e.party + ',' + std::string(to_string(e.kind)) + ',' +
               std::to_string(e.amount.milli()) + '\n';
    }
    return out;
}

std::vector<LedgerEntry> parse_ledger_csv(std::string_view text) {
    std::vector<LedgerEntry> ledger;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "step,party,kind,amount_milli") {
        throw std::invalid_argument("ledger csv: bad header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 4) throw std::invalid_argument("ledger csv: bad row: " + line);
        ledger.push_back(LedgerEntry{std::stoull(fields[0]), fields[1],
                                     ledger_kind_from_string(fields[2]),
                                     Money::from_milli(std::stoll(fields[3]))});
    }
    return ledger;
}

}  // namespace crowdsense::protocol
