// observation.hpp
//
// KeyObservation: one server public key sighting, the unit of reuse analysis.

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "epdg/common/time.hpp"
#include "epdg/discovery/discovery.hpp"

namespace epdg::analysis {

struct KeyObservation {
    discovery::PlmnId op{"001", "01"};
    std::string endpoint;
    std::uint16_t group = 0;
    std::string pubkey_fp;  // 64 lowercase hex
    std::string nonce_fp;   // 64 lowercase hex
    SystemTime observed_at{};

    // throws InvariantViolation on malformed fingerprints
    void validate() const;
    bool operator==(const KeyObservation&) const = default;
};

nlohmann::json to_json(const KeyObservation& o);
// throws FormatError / InvariantViolation
KeyObservation observation_from_json(const nlohmann::json& j);

}  // namespace epdg::analysis
