#pragma once

// Campaign state machine: the coordinator that collects subscription fees,
// hands out the campaign key, records where each source put its data, elects
// one verifier per submission, pays for verdicts, and releases the data only
// once enough sources have been verified.
//
// A Campaign must be driven by one writer at a time. Distinct campaigns are
// independent.

#include "crowdsense/money.hpp"
#include "crowdsense/storage.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crowdsense::protocol {

using PartyId = std::string;
using storage::ContentAddress;
using storage::SymmetricKey;

enum class ProtocolErrc {
    InvalidParams,
    FeeMismatch,
    DuplicateSubscription,
    CampaignClosed,
    NoSubscription,
    EmptySubmission,
    InvalidTransition,
    AlreadyClaimed,
    NoSuchSubmission,
    UnauthorizedVerifier,
    NotYetClosed,
};

std::string_view to_string(ProtocolErrc code);

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ProtocolErrc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ProtocolErrc code() const noexcept { return code_; }

private:
    ProtocolErrc code_;
};

struct CampaignParams {
    std::uint32_t min_participants = 7;  // anonymity-set threshold
    std::size_t chunk_size = 1024;
    Money subscription_fee = Money::from_milli(1000);
    Money source_reward = Money::from_milli(1000);
    Money verifier_payment = Money::from_milli(1000);
    Money reader_fee = Money::from_milli(1000);

    // Throws ProtocolError(InvalidParams).
    void validate() const;
};

enum class Phase { Open, Closed };

enum class SubmissionStatus { Announced, Registered, UnderVerification, Verified, Rejected };

std::string_view to_string(SubmissionStatus s);

struct DataSubmission {
    PartyId source;
    std::vector<ContentAddress> chunk_locations;
    SubmissionStatus status = SubmissionStatus::Announced;
    std::optional<PartyId> assigned_verifier;
    // Reward owed on a positive verdict; params.source_reward unless the
    // source negotiated its own price at subscription.
    Money agreed_reward;

    friend bool operator==(const DataSubmission&, const DataSubmission&) = default;
};

enum class LedgerKind { FeeIn, SourceReward, VerifierPayment, ReaderFeeIn };

std::string_view to_string(LedgerKind k);
LedgerKind ledger_kind_from_string(std::string_view s);

struct LedgerEntry {
    std::uint64_t step = 0;
    PartyId party;
    LedgerKind kind = LedgerKind::FeeIn;
    Money amount;  // always >= 0; the kind carries the sign

    bool is_inflow() const { return kind == LedgerKind::FeeIn || kind == LedgerKind::ReaderFeeIn; }
    friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

enum class EventKind {
    CampaignCreated,
    SourceSubscribed,
    KeyIssued,
    DataRegistered,
    VerificationRequested,
    VerifierElected,
    VerdictRecorded,
    SourceRewarded,
    CampaignClosed,
    ReaderServed,
};

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

// Fields not relevant to a kind stay empty. The key itself never appears in
// the event log.
struct EventPayload {
    std::optional<PartyId> source;
    std::optional<PartyId> verifier;
    std::optional<PartyId> reader;
    std::optional<Money> amount;
    std::optional<Money> agreed_reward;
    std::optional<bool> valid;
    std::optional<std::uint64_t> count;
    std::vector<ContentAddress> locations;

    friend bool operator==(const EventPayload&, const EventPayload&) = default;
};

struct ProtocolEvent {
    std::uint64_t step = 0;
    EventKind kind = EventKind::CampaignCreated;
    EventPayload payload;

    friend bool operator==(const ProtocolEvent&, const ProtocolEvent&) = default;
};

struct SubscriptionGrant {
    SymmetricKey key;
    std::size_t chunk_size = 0;
};

struct DataRelease {
    std::vector<ContentAddress> chunk_locations;
    SymmetricKey key;
};

class Campaign {
public:
    // Throws ProtocolError(InvalidParams).
    static Campaign create(const CampaignParams& params, std::uint64_t key_seed);

    // Pay the fee, receive key and chunk size. A source may name
    // its own reward (a reverse-auction ask); otherwise params.source_reward.
    SubscriptionGrant subscribe_source(const PartyId& source, Money fee_paid,
                                       std::optional<Money> agreed_reward = std::nullopt);

    // Record where the encrypted chunks live; emits the
    // verification request immediately.
    void register_data(const PartyId& source, std::vector<ContentAddress> chunk_locations);

    // First claimant on a Registered submission is elected.
    DataRelease claim_verification(const PartyId& verifier, const PartyId& source);

    // The verifier is paid for any verdict; the source only when
    // valid. Rejected sources keep nothing and lose their fee.
    void report_verdict(const PartyId& verifier, const PartyId& source, bool valid);

    // Closes once the verified count reaches the threshold. Returns
    // true only on the call that performed the close.
    bool try_finalize();

    // Post-close data access for paying readers. Locations of verified
    // submissions only, ordered by source id.
    DataRelease serve_reader(const PartyId& reader, Money fee_paid);

    const CampaignParams& params() const { return params_; }
    Phase phase() const { return phase_; }
    Money treasury() const { return treasury_; }
    std::uint64_t campaign_id() const { return key_seed_; }
    std::size_t verified_count() const;
    const std::map<PartyId, DataSubmission>& submissions() const { return submissions_; }
    const std::vector<LedgerEntry>& ledger() const { return ledger_; }
    const std::vector<ProtocolEvent>& events() const { return events_; }

private:
    Campaign(const CampaignParams& params, std::uint64_t key_seed);

    std::uint64_t next_step() { return ++clock_; }
    void append_event(std::uint64_t step, EventKind kind, EventPayload payload);
    void post(std::uint64_t step, const PartyId& party, LedgerKind kind, Money amount);
    DataSubmission& submission_for(const PartyId& source, ProtocolErrc missing);

    CampaignParams params_;
    std::uint64_t key_seed_ = 0;
    SymmetricKey key_{};
    Phase phase_ = Phase::Open;
    std::map<PartyId, DataSubmission> submissions_;
    Money treasury_;
    std::vector<LedgerEntry> ledger_;
    std::vector<ProtocolEvent> events_;
    std::uint64_t clock_ = 0;
};

// ---------------------------------------------------------------------------
// Audit surface
// ---------------------------------------------------------------------------

// Sum of inflows minus outflows.
Money ledger_balance(const std::vector<LedgerEntry>& ledger);

// Rebuilds the submissions map from an event log, validating every status
// transition along the way. Throws ProtocolError(InvalidTransition) if the
// log is inconsistent with the status machine.
std::map<PartyId, DataSubmission> replay_submissions(const std::vector<ProtocolEvent>& events);

// Line-delimited JSON, one {"step","kind","payload"} object per line.
std::string export_events_jsonl(const std::vector<ProtocolEvent>& events);
std::vector<ProtocolEvent> parse_events_jsonl(std::string_view text);

// CSV with header "step,party,kind,amount_milli".
std::string export_ledger_csv(const std::vector<LedgerEntry>& ledger);
std::vector<LedgerEntry> parse_ledger_csv(std::string_view text);

// SourceReward totals per party.
std::map<PartyId, Money> source_reward_totals(const std::vector<LedgerEntry>& ledger);

}  // namespace crowdsense::protocol
