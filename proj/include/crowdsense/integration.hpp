#pragma once

#include "crowdsense/money.hpp"
#include "crowdsense/protocol.hpp"
#include "crowdsense/sim.hpp"
#include "crowdsense/storage.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace crowdsense::integration {

std::string agent_party(sim::AgentId id);

// Replays satisfied zone rounds as full campaigns: every selected agent
// subscribes at its ask, uploads an encrypted reading, gets verified by the
// zone's verifier (always honest here) and is rewarded; the campaign must
// then close at the zone's threshold.
class ProtocolBridge {
public:
    ProtocolBridge(std::uint64_t seed, protocol::CampaignParams base);

    // Throws std::logic_error if a campaign fails to close or its ledger does
    // not balance.
    void on_round(const sim::OfferRound& round);

    const std::map<sim::AgentId, Money>& reward_totals() const { return totals_; }
    std::uint64_t campaigns_closed() const { return closed_; }

private:
    std::uint64_t seed_;
    protocol::CampaignParams base_;
    std::map<sim::AgentId, Money> totals_;
    std::uint64_t closed_ = 0;
};

// Reading an agent uploads for a round; also the verifier's format check.
storage::Bytes sensor_reading(sim::AgentId agent, sim::ZoneId zone, std::uint32_t step,
                              sim::Seconds timestamp);
bool looks_like_reading(storage::ByteView payload);

}  // namespace crowdsense::integration
