// attack.hpp
//
// Deterministic in-process simulation of UE, on-path attacker and ePDG on a
// virtual clock. Every message placed on the bus is a real IKEv2 encoding.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "epdg/common/bytes.hpp"
#include "epdg/scanner/scanner.hpp"
#include "epdg/sim/policy.hpp"

namespace epdg::sim {

struct AttackerModel {
    bool on_path = true;
    bool can_drop = true;
    bool can_inject = true;
    bool can_rewrite_plaintext = true;
    int crack_capability = 0;  // highest group code breakable in time; 0 = none
    double crack_latency_s = 0;

    // throws InvariantViolation unless crack_capability is 0, 1 or 2
    void validate() const;
};

enum class Layer { L1, L2, L3 };
std::string to_string(Layer l);

struct Event {
    enum class Kind { Message, Accept, Auth, Crack, Split, LayerGained, Note, Failure };
    double t = 0;
    Kind kind = Kind::Note;
    std::string actor;
    std::string from;  // Message only
    std::string to;    // Message only
    std::string label;
    Bytes wire;            // Message and Accept
    bool dropped = false;  // Message intercepted by the attacker
    bool injected = false;  // Message forged by the attacker

    bool operator==(const Event&) const = default;
};

std::string to_string(Event::Kind k);

struct Outcome {
    enum class Kind { Success, Downgraded, AttackFailed, HandshakeFailed };
    Kind kind = Kind::HandshakeFailed;
    std::uint16_t group = 0;  // Downgraded only
    std::string reason;       // failures only

    bool operator==(const Outcome&) const = default;
};

struct Transcript {
    std::vector<Event> events;
    std::optional<std::uint16_t> negotiated_group;
    std::set<Layer> layers_compromised;  // L3 implies L2 implies L1
    Outcome outcome;
    bool speculative = false;  // premature rekey triggering was used
    std::vector<std::string> notes;

    // bus messages in order
    std::vector<const Event*> messages() const;
    bool operator==(const Transcript&) const = default;
};

struct RekeySchedule {
    // attacker-triggered rekey time; untested against real devices
    std::optional<double> premature_rekey_s;
    // CHILD_SA rekey period; defaults to the UE soft timer
    std::optional<double> child_rekey_s;
    // run an INVALID_KE pivot to this group before the takeover
    std::optional<std::uint16_t> pivot_target;
};

// Plain negotiation; an attacker, when given, only relays.
Transcript run_handshake(const UePolicy& ue, const EpdgPolicy& epdg, const std::optional<AttackerModel>& attacker,
                         std::uint64_t seed);

// Attacker drops the first SA_INIT and injects INVALID_KE(target_group).
// Downgraded(g) when the handshake completes on a group g no stronger than
// the target; AttackFailed otherwise.
Transcript attack_invalid_ke_pivot(const UePolicy& ue, const EpdgPolicy& epdg, const AttackerModel& attacker,
                                   std::uint16_t target_group, std::uint64_t seed);

// Throws PreconditionError when the attacker cannot break the negotiated
// group.
Transcript rekey_takeover(const UePolicy& ue, const EpdgPolicy& epdg, const AttackerModel& attacker,
                          const RekeySchedule& schedule, std::uint64_t seed);

struct Feasibility {
    bool feasible = false;
    std::string reason;
};

Feasibility downgrade_feasibility(const UePolicy& ue, const scanner::ToleranceResult& server);

// "UE -> ePDG : SA_INIT([DH2, DH14], KE_DH14)" per message, plus marked
// drops, injections and timeline notes
std::string render_sequence(const Transcript& t);

struct Scenario {
    enum class Mode { Handshake, Pivot, RekeyTakeover };
    Mode mode = Mode::Handshake;
    std::uint64_t seed = 1;
    UePolicy ue;
    EpdgPolicy epdg;
    std::optional<AttackerModel> attacker;
    std::uint16_t target_group = 0;  // Pivot
    RekeySchedule schedule;          // RekeyTakeover
};

// throws FormatError, InvariantViolation
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);
Transcript run_scenario(const Scenario& s);

nlohmann::json to_json(const Transcript& t);
nlohmann::json to_json(const AttackerModel& a);
AttackerModel attacker_from_json(const nlohmann::json& j);

}  // namespace epdg::sim
