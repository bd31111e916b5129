// policy.hpp
//
// Negotiation behavior of UEs and ePDGs, and the responder engine that turns
// an EpdgPolicy into concrete SA_INIT answers. The same engine backs the UDP
// mock fleet and the in-process attack simulator.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epdg/common/bytes.hpp"
#include "epdg/common/random.hpp"
#include "epdg/dh/engine.hpp"
#include "epdg/ike/codec.hpp"

namespace epdg::sim {

enum class InvalidKeRule { OfferedOnly, AnyGroup, RejectAll };

struct UePolicy {
    std::vector<std::uint16_t> offered_groups;
    std::uint16_t preferred_group = 0;
    InvalidKeRule invalid_ke_rule = InvalidKeRule::OfferedOnly;
    double rekey_soft_s = 64800;
    double rekey_hard_s = 64900;
    bool sip_encryption_required = false;

    // throws InvariantViolation
    void validate() const;
};

enum class Preference { AcceptClientChoice, DemandStrongest, DemandSpecific };
enum class KeyMode { FreshPerHandshake, StaticPool, ReuseWindow };
// what a server does with an offer it cannot serve
enum class UnsupportedAction { Notify, Drop };

struct EpdgPolicy {
    std::vector<std::uint16_t> supported_groups;
    Preference preference = Preference::AcceptClientChoice;
    std::uint16_t demanded_group = 0;  // DemandSpecific only

    KeyMode key_mode = KeyMode::FreshPerHandshake;
    std::vector<dh::BigInt> static_pool;
    // one exponent serves every group (the cross-group hazard) when true
    bool pool_shared_across_groups = true;
    double reuse_window_s = 0;

    UnsupportedAction unsupported_action = UnsupportedAction::Notify;
    std::optional<Bytes> fixed_nonce;

    bool reauth_on_rekey = false;
    bool enforce_sip_encryption = false;

    bool supports(std::uint16_t group) const;
    // throws InvariantViolation
    void validate() const;
};

struct Decision {
    enum class Kind { Accept, SwitchGroup, Reject, Drop };
    Kind kind = Kind::Drop;
    std::uint16_t group = 0;   // Accept / SwitchGroup
    std::uint16_t notify = 0;  // Reject
};

// Pure group-selection logic:
//  - AcceptClientChoice takes the client's KE group when supported, else the
//    first supported offered group.
//  - DemandStrongest takes the strongest supported offered group; with no
//    overlap it still names its strongest supported group.
//  - DemandSpecific names the demanded group when it is offered and otherwise
//    behaves like AcceptClientChoice.
Decision decide(const EpdgPolicy& policy, const std::vector<std::uint16_t>& offered, std::uint16_t ke_group);

// Exponent a static-pool server uses for `group_id`. Shared pools reuse the
// raw exponent; independent pools derive a per-group exponent from it.
dh::BigInt pool_exponent(const dh::BigInt& base, int group_id, bool shared);

class EpdgResponder {
public:
    // clock returns seconds on any monotonic scale; used by ReuseWindow
    EpdgResponder(EpdgPolicy policy, std::uint64_t seed, std::function<double()> clock = {});

    // nullopt when the policy drops the request
    std::optional<ike::IkeMessage> handle(const ike::IkeMessage& request);

    const EpdgPolicy& policy() const { return policy_; }

    struct Served {
        std::uint16_t group = 0;
        std::optional<dh::BigInt> private_exponent;  // MODP accepts only
        Bytes public_value;
    };
    // key material of the most recent accepted handshake
    const std::optional<Served>& last_served() const { return last_served_; }

private:
    std::pair<std::optional<dh::BigInt>, Bytes> server_key(std::uint16_t group);

    EpdgPolicy policy_;
    SeededRandom rng_;
    std::function<double()> clock_;
    std::map<std::pair<std::size_t, int>, dh::BigInt> pool_cache_;
    struct Windowed {
        dh::BigInt exponent;
        dh::BigInt public_value;
        double created = 0;
    };
    std::map<int, Windowed> window_cache_;
    std::optional<Served> last_served_;
};

// ---- JSON ----

nlohmann::json to_json(const UePolicy& p);
UePolicy ue_policy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EpdgPolicy& p);
EpdgPolicy epdg_policy_from_json(const nlohmann::json& j);

std::string to_string(InvalidKeRule r);
std::string to_string(Preference p);
std::string to_string(KeyMode m);

}  // namespace epdg::sim
