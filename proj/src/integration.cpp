#include "crowdsense/integration.hpp"

#include <algorithm>
#include <stdexcept>

namespace crowdsense::integration {

std::string agent_party(sim::AgentId id) { return "agent-" + std::to_string(id); }

storage::Bytes sensor_reading(sim::AgentId agent, sim::ZoneId zone, std::uint32_t step,
                              sim::Seconds timestamp) {
    return storage::to_bytes("{\"agent\":" + std::to_string(agent) +
                             ",\"zone\":" + std::to_string(zone) +
                             ",\"step\":" + std::to_string(step) +
                             ",\"t\":" + std::to_string(timestamp) + "}");
}

bool looks_like_reading(storage::ByteView payload) {
    static constexpr std::string_view kPrefix = "{\"agent\":";
    return payload.size() > kPrefix.size() &&
           std::equal(kPrefix.begin(), kPrefix.end(), payload.begin()) && payload.back() == '}';
}

ProtocolBridge::ProtocolBridge(std::uint64_t seed, protocol::CampaignParams base)
    : seed_(seed), base_(base) {}

void ProtocolBridge::on_round(const sim::OfferRound& round) {
    if (!round.satisfied) return;

    protocol::CampaignParams params = base_;
    params.min_participants = static_cast<std::uint32_t>(round.selected.size());
    const std::uint64_t campaign_seed =
        seed_ ^ (static_cast<std::uint64_t>(round.step) << 20) ^ round.zone;
    auto campaign = protocol::Campaign::create(params, campaign_seed);
    storage::MemoryStore store;
    const std::string verifier = "verifier-zone-" + std::to_string(round.zone);

    for (sim::AgentId id : round.selected) {
        const auto offer = std::find_if(round.offers.begin(), round.offers.end(),
                                        [id](const sim::Offer& o) { return o.agent == id; });
        if (offer == round.offers.end()) throw std::logic_error("selected agent did not offer");
        const std::string party = agent_party(id);
        const auto grant = campaign.subscribe_source(party, params.subscription_fee, offer->ask);
        const auto reading = sensor_reading(id, round.zone, round.step, offer->data_timestamp);
        campaign.register_data(party, storage::upload_dataset(store, grant.key, reading,
                                                              grant.chunk_size,
                                                              campaign.campaign_id(), party));
    }
    for (sim::AgentId id : round.selected) {
        const std::string party = agent_party(id);
        const auto release = campaign.claim_verification(verifier, party);
        const bool ok = storage::verify_dataset(store, release.chunk_locations, release.key,
                                                looks_like_reading);
        campaign.report_verdict(verifier, party, ok);
    }
    if (!campaign.try_finalize()) {
        throw std::logic_error("zone " + std::to_string(round.zone) + " step " +
                               std::to_string(round.step) + ": campaign did not close");
    }
    if (protocol::ledger_balance(campaign.ledger()) != campaign.treasury()) {
        throw std::logic_error("campaign ledger does not balance");
    }
    ++closed_;

    for (const auto& [party, amount] : protocol::source_reward_totals(campaign.ledger())) {
        const auto id = static_cast<sim::AgentId>(std::stoul(party.substr(6)));
        totals_[id] += amount;
    }
}

}  // namespace crowdsense::integration
