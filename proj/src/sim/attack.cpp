#include "epdg/sim/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "epdg/common/errors.hpp"
#include "epdg/dh/engine.hpp"
#include "epdg/ike/codec.hpp"

namespace epdg::sim {

namespace {

constexpr const char* kUe = "UE";
constexpr const char* kEpdg = "ePDG";
constexpr const char* kMitm = "MitM";
// one-way virtual latency per bus message
constexpr double kHop = 0.05;

bool contains(const std::vector<std::uint16_t>& v, std::uint16_t g) {
    return std::find(v.begin(), v.end(), g) != v.end();
}

// Single-threaded event loop over one virtual timeline.
class Simulation {
public:
    Simulation(const UePolicy& ue, const EpdgPolicy& epdg, std::uint64_t seed)
        : ue_(ue),
          epdg_(epdg),
          ue_rng_(seed * 3 + 1),
          attacker_rng_(seed * 3 + 3),
          responder_(epdg, seed * 3 + 2, [this] { return now_; }) {
        ue_.validate();
        epdg_.validate();
    }

    Transcript& transcript() { return tr_; }
    double now() const { return now_; }
    void advance_to(double t) { now_ = std::max(now_, t); }

    void message(const std::string& from, const std::string& to, const ike::IkeMessage& msg, bool dropped = false,
                 bool injected = false) {
        Event e;
        e.t = now_;
        e.kind = Event::Kind::Message;
        e.actor = from;
        e.from = from;
        e.to = to;
        e.label = ike::describe(msg);
        e.wire = ike::encode(msg);
        e.dropped = dropped;
        e.injected = injected;
        tr_.events.push_back(std::move(e));
        now_ += kHop;
    }

    void event(Event::Kind kind, const std::string& actor, const std::string& label, Bytes wire = {}) {
        Event e;
        e.t = now_;
        e.kind = kind;
        e.actor = actor;
        e.label = label;
        e.wire = std::move(wire);
        tr_.events.push_back(std::move(e));
    }

    void gain(Layer l, const std::string& how) {
        tr_.layers_compromised.insert(l);
        event(Event::Kind::LayerGained, kMitm, to_string(l) + ": " + how);
    }

    ike::IkeMessage ue_request(const std::vector<std::uint16_t>& offered, std::uint16_t ke_group) {
        ike::ClientProposalSpec spec;
        spec.offered_groups = offered;
        spec.chosen_group = ke_group;
        spec.allow_unoffered_chosen = true;
        spec.ke_data = key_share(ke_group, ue_rng_);
        return ike::build_sa_init(spec, ue_rng_);
    }

    static Bytes key_share(std::uint16_t group, RandomSource& rng) {
        if (ike::is_modp_group(group)) {
            const auto& params = dh::group_params(group);
            return dh::to_bytes(dh::gen_keypair(params, rng).public_value, params.octets());
        }
        return rng.bytes(ike::ke_length(group).value_or(32));
    }

    struct Offer {
        std::vector<std::uint16_t> groups;
        std::uint16_t ke = 0;
    };

    // UE reaction to INVALID_KE(g); nullopt with reason on refusal
    std::optional<Offer> ue_react(std::uint16_t g, std::string& reason) {
        if (ue_.invalid_ke_rule == InvalidKeRule::RejectAll) {
            reason = "UE rejects group switch requests";
            return std::nullopt;
        }
        if (tried_.count(g)) {
            reason = "group switch loop on " + ike::group_name(g);
            return std::nullopt;
        }
        if (ue_.invalid_ke_rule == InvalidKeRule::AnyGroup) return Offer{{g}, g};
        if (!contains(ue_.offered_groups, g)) {
            reason = "UE rejected unoffered group " + ike::group_name(g);
            return std::nullopt;
        }
        return Offer{ue_.offered_groups, g};
    }

    // Delivers offers to the ePDG until acceptance or failure.
    void negotiate(Offer offer, const std::string& ue_to) {
        for (;;) {
            tried_.insert(offer.ke);
            const auto req = ue_request(offer.groups, offer.ke);
            message(kUe, ue_to, req);
            const auto resp = responder_.handle(req);
            if (!resp) {
                event(Event::Kind::Failure, kEpdg, "no response");
                tr_.outcome = {Outcome::Kind::HandshakeFailed, 0, "no response from ePDG"};
                return;
            }
            if (const auto* ke = resp->find<ike::KePayload>()) {
                event(Event::Kind::Accept, kEpdg, ike::describe(*resp), ike::encode(*resp));
                now_ += kHop;
                tr_.negotiated_group = ke->group;
                tr_.outcome = {Outcome::Kind::Success, 0, {}};
                last_request_ = req;
                last_response_ = *resp;
                return;
            }
            message(kEpdg, kUe, *resp);
            const auto* n = resp->find<ike::NotifyPayload>();
            if (n && n->type == ike::notify_type::kInvalidKePayload && n->data.size() == 2) {
                std::string reason;
                auto next = ue_react(get_u16(n->data, 0), reason);
                if (!next) {
                    event(Event::Kind::Failure, kUe, reason);
                    tr_.outcome = {Outcome::Kind::HandshakeFailed, 0, reason};
                    return;
                }
                offer = *next;
                continue;
            }
            const std::string reason = (n && n->type == ike::notify_type::kNoProposalChosen)
                                           ? "no common group"
                                           : "ePDG answered " + ike::describe(*resp);
            event(Event::Kind::Failure, kEpdg, reason);
            tr_.outcome = {Outcome::Kind::HandshakeFailed, 0, reason};
            return;
        }
    }

    void handshake() { negotiate({ue_.offered_groups, ue_.preferred_group}, kEpdg); }

    void pivot(const AttackerModel& attacker, std::uint16_t target) {
        attacker.validate();
        if (!attacker.on_path || !attacker.can_drop || !attacker.can_inject) {
            tr_.outcome = {Outcome::Kind::AttackFailed, 0, "attacker cannot drop and inject on path"};
            event(Event::Kind::Failure, kMitm, tr_.outcome.reason);
            return;
        }
        tried_.insert(ue_.preferred_group);
        const auto first = ue_request(ue_.offered_groups, ue_.preferred_group);
        message(kUe, kMitm, first, /*dropped=*/true);
        message(kMitm, kUe, ike::build_invalid_ke(first, target), false, /*injected=*/true);

        std::string reason;
        std::optional<Offer> next;
        if (target == ue_.preferred_group) {
            reason = "target group equals the UE's initial choice";
        } else {
            next = ue_react(target, reason);
        }
        if (!next) {
            event(Event::Kind::Failure, kUe, reason);
            tr_.outcome = {Outcome::Kind::AttackFailed, 0, reason};
            return;
        }
        negotiate(*next, kEpdg);
        if (tr_.outcome.kind == Outcome::Kind::HandshakeFailed) {
            tr_.outcome = {Outcome::Kind::AttackFailed, 0, "handshake failed after pivot: " + tr_.outcome.reason};
            return;
        }
        const auto g = *tr_.negotiated_group;
        if (ike::group_strength(g) <= ike::group_strength(target)) {
            tr_.outcome = {Outcome::Kind::Downgraded, g, {}};
        } else {
            tr_.outcome = {Outcome::Kind::AttackFailed, 0, "ePDG steered the handshake to " + ike::group_name(g)};
        }
    }

    ike::IkeMessage rekey_message(std::uint16_t group, bool child, bool response, RandomSource& rng) {
        ike::IkeMessage m;
        m.header = last_request_.header;
        m.header.responder_spi = last_response_.header.responder_spi;
        m.header.exchange_type = ike::exchange::kCreateChildSa;
        m.header.flags = response ? ike::flags::kResponse : ike::flags::kInitiator;
        m.header.message_id = ++message_id_;
        ike::Proposal p;
        if (child) {
            p.protocol = 3;  // ESP
            p.spi = rng.bytes(4);
            p.transforms = {ike::make_transform(ike::transform_type::kEncr, ike::encr::kAesCbc, 128),
                            ike::make_transform(ike::transform_type::kInteg, ike::integ::kHmacSha1_96)};
        } else {
            p.protocol = ike::protocol::kIke;
            p.spi = rng.bytes(8);
            p.transforms = {ike::make_transform(ike::transform_type::kEncr, ike::encr::kAesCbc, 128),
                            ike::make_transform(ike::transform_type::kPrf, ike::prf::kHmacSha1),
                            ike::make_transform(ike::transform_type::kInteg, ike::integ::kHmacSha1_96)};
        }
        p.transforms.push_back(ike::make_transform(ike::transform_type::kKeGroup, group));
        m.payloads.emplace_back(ike::SaPayload{{p}});
        m.payloads.emplace_back(ike::KePayload{group, key_share(group, rng)});
        m.payloads.emplace_back(ike::NoncePayload{rng.bytes(32)});
        ike::finalize(m);
        return m;
    }

    // attacker answers each side with its own unauthenticated exchange
    void split_exchange(std::uint16_t group, bool child) {
        message(kUe, kMitm, rekey_message(group, child, false, ue_rng_));
        message(kMitm, kUe, rekey_message(group, child, true, attacker_rng_), false, true);
        message(kMitm, kEpdg, rekey_message(group, child, false, attacker_rng_), false, true);
        message(kEpdg, kMitm, rekey_message(group, child, true, attacker_rng_));
    }

    void takeover(const AttackerModel& attacker, const RekeySchedule& schedule) {
        attacker.validate();
        const std::uint16_t g = *tr_.negotiated_group;
        if (attacker.crack_capability < g)
            throw PreconditionError("attacker cannot break negotiated group " + ike::group_name(g));

        const double t0 = now_;
        event(Event::Kind::Auth, "UE/ePDG", "IKE_AUTH (EAP-AKA)");
        now_ += kHop;
        tr_.notes.push_back("rekeying modeled as a fresh unauthenticated DH exchange with plaintext SA/KE/Nonce");

        if (attacker.crack_latency_s >= ue_.rekey_hard_s) {
            advance_to(t0 + ue_.rekey_hard_s);
            event(Event::Kind::Note, "UE/ePDG", "IKE SA rekeyed at hard lifetime");
            tr_.outcome = {Outcome::Kind::AttackFailed, 0, "key rotated before the crack completed"};
            event(Event::Kind::Failure, kMitm, tr_.outcome.reason);
            return;
        }
        const double t_crack = t0 + attacker.crack_latency_s;
        advance_to(t_crack);
        event(Event::Kind::Crack, kMitm, "recovered IKE SA keys of " + ike::group_name(g));
        gain(Layer::L1, "IKE SA keys recovered");

        double t1 = 0;
        if (schedule.premature_rekey_s && *schedule.premature_rekey_s >= attacker.crack_latency_s) {
            t1 = t0 + *schedule.premature_rekey_s;
            tr_.speculative = true;
            tr_.notes.push_back("premature rekey triggering is speculative and untested on devices");
        } else if (attacker.crack_latency_s < ue_.rekey_soft_s) {
            t1 = t0 + ue_.rekey_soft_s;
        } else {
            t1 = t0 + ue_.rekey_hard_s;
        }
        advance_to(t1);
        split_exchange(g, /*child=*/false);
        event(Event::Kind::Split, kMitm, "separate IKE SAs with UE and ePDG");

        const double period = schedule.child_rekey_s.value_or(ue_.rekey_soft_s);
        if (period <= 0) throw InvariantViolation("child rekey period must be positive");
        const double k = std::max(1.0, std::ceil((t1 - t0) / period));
        advance_to(t0 + k * period);
        if (epdg_.reauth_on_rekey) {
            event(Event::Kind::Auth, kEpdg, "re-authentication demanded at rekey");
            tr_.notes.push_back("re-authentication at rekey blocks CHILD_SA takeover");
            tr_.outcome = {Outcome::Kind::Success, 0, {}};
            return;
        }
        split_exchange(g, /*child=*/true);
        for (const auto& e : tr_.events) {
            if (e.kind == Event::Kind::Auth && e.t > t_crack)
                throw InvariantViolation("authentication event between compromise and CHILD_SA takeover");
        }
        gain(Layer::L2, "CHILD_SA rekeyed through attacker without authentication");

        if (!(ue_.sip_encryption_required || epdg_.enforce_sip_encryption)) {
            gain(Layer::L3, "SIP signalling unencrypted inside the tunnel");
        } else {
            event(Event::Kind::Note, kMitm, "SIP encryption enforced; L3 protected");
        }
        tr_.outcome = {Outcome::Kind::Success, 0, {}};
    }

private:
    UePolicy ue_;
    EpdgPolicy epdg_;
    SeededRandom ue_rng_;
    SeededRandom attacker_rng_;
    double now_ = 0;
    EpdgResponder responder_;
    Transcript tr_;
    std::set<std::uint16_t> tried_;
    ike::IkeMessage last_request_;
    ike::IkeMessage last_response_;
    std::uint32_t message_id_ = 1;
};

const char* outcome_name(Outcome::Kind k) {
    switch (k) {
        case Outcome::Kind::Success: return "success";
        case Outcome::Kind::Downgraded: return "downgraded";
        case Outcome::Kind::AttackFailed: return "attack-failed";
        case Outcome::Kind::HandshakeFailed: return "handshake-failed";
    }
    return "?";
}

}  // namespace

void AttackerModel::validate() const {
    if (crack_capability != 0 && crack_capability != 1 && crack_capability != 2)
        throw InvariantViolation("crack_capability must be 0, 1 or 2");
    if (crack_latency_s < 0) throw InvariantViolation("crack_latency_s must be non-negative");
}

std::string to_string(Layer l) {
    switch (l) {
        case Layer::L1: return "L1";
        case Layer::L2: return "L2";
        case Layer::L3: return "L3";
    }
    return "?";
}

std::string to_string(Event::Kind k) {
    switch (k) {
        case Event::Kind::Message: return "message";
        case Event::Kind::Accept: return "accept";
        case Event::Kind::Auth: return "auth";
        case Event::Kind::Crack: return "crack";
        case Event::Kind::Split: return "split";
        case Event::Kind::LayerGained: return "layer";
        case Event::Kind::Note: return "note";
        case Event::Kind::Failure: return "failure";
    }
    return "?";
}

std::vector<const Event*> Transcript::messages() const {
    std::vector<const Event*> out;
    for (const auto& e : events) {
        if (e.kind == Event::Kind::Message) out.push_back(&e);
    }
    return out;
}

Transcript run_handshake(const UePolicy& ue, const EpdgPolicy& epdg, const std::optional<AttackerModel>& attacker,
                         std::uint64_t seed) {
    if (attacker) attacker->validate();
    Simulation sim(ue, epdg, seed);
    sim.handshake();
    return sim.transcript();
}

Transcript attack_invalid_ke_pivot(const UePolicy& ue, const EpdgPolicy& epdg, const AttackerModel& attacker,
                                   std::uint16_t target_group, std::uint64_t seed) {
    Simulation sim(ue, epdg, seed);
    sim.pivot(attacker, target_group);
    return sim.transcript();
}

Transcript rekey_takeover(const UePolicy& ue, const EpdgPolicy& epdg, const AttackerModel& attacker,
                          const RekeySchedule& schedule, std::uint64_t seed) {
    Simulation sim(ue, epdg, seed);
    if (schedule.pivot_target) {
        sim.pivot(attacker, *schedule.pivot_target);
        if (sim.transcript().outcome.kind != Outcome::Kind::Downgraded) return sim.transcript();
    } else {
        sim.handshake();
        if (sim.transcript().outcome.kind != Outcome::Kind::Success) return sim.transcript();
    }
    const Outcome initial = sim.transcript().outcome;
    sim.takeover(attacker, schedule);
    // a successful takeover keeps the downgrade that enabled it
    auto& tr = sim.transcript();
    if (tr.outcome.kind == Outcome::Kind::Success && initial.kind == Outcome::Kind::Downgraded) {
        tr.notes.push_back("initial handshake downgraded to " + ike::group_name(initial.group));
    }
    return tr;
}

Feasibility downgrade_feasibility(const UePolicy& ue, const scanner::ToleranceResult& server) {
    using K = scanner::ToleranceResult::Kind;
    if (ue.invalid_ke_rule == InvalidKeRule::RejectAll) return {false, "client rejects INVALID_KE group switches"};
    if (ue.offered_groups.size() <= 1 && ue.invalid_ke_rule != InvalidKeRule::AnyGroup)
        return {false, "client announces a single DH group"};
    switch (server.kind) {
        case K::Tolerated: return {true, "server tolerates the weak client choice"};
        case K::DowngradeIndicated:
            return {true, "server itself steers clients to " + ike::group_name(server.group)};
        case K::UpgradeRequested:
            return {false, "server demands an upgrade to " + ike::group_name(server.group)};
        case K::Error: return {false, "server behavior unknown (error response)"};
    }
    return {false, "unknown server behavior"};
}

std::string render_sequence(const Transcript& t) {
    std::ostringstream out;
    for (const auto& e : t.events) {
        switch (e.kind) {
            case Event::Kind::Message:
                out << e.from << " -> " << e.to << " : " << e.label;
                if (e.dropped) out << "  [dropped]";
                if (e.injected) out << "  [forged]";
                out << "\n";
                break;
            case Event::Kind::Accept:
                out << "      " << e.actor << " accepts: " << e.label << "\n";
                break;
            default:
                out << "  t=" << e.t << "s " << e.actor << " " << to_string(e.kind) << ": " << e.label << "\n";
        }
    }
    out << "negotiated: " << (t.negotiated_group ? ike::group_name(*t.negotiated_group) : "none") << "\n";
    out << "outcome: " << outcome_name(t.outcome.kind);
    if (t.outcome.kind == Outcome::Kind::Downgraded) out << "(" << ike::group_name(t.outcome.group) << ")";
    if (!t.outcome.reason.empty()) out << " (" << t.outcome.reason << ")";
    out << "\n";
    if (!t.layers_compromised.empty()) {
        out << "layers:";
        for (auto l : t.layers_compromised) out << " " << to_string(l);
        out << "\n";
    }
    return out.str();
}

// ---- JSON ----

nlohmann::json to_json(const AttackerModel& a) {
    return {{"on_path", a.on_path},
            {"can_drop", a.can_drop},
            {"can_inject", a.can_inject},
            {"can_rewrite_plaintext", a.can_rewrite_plaintext},
            {"crack_capability", a.crack_capability},
            {"crack_latency_s", a.crack_latency_s}};
}

AttackerModel attacker_from_json(const nlohmann::json& j) {
    try {
        AttackerModel a;
        a.on_path = j.value("on_path", true);
        a.can_drop = j.value("can_drop", true);
        a.can_inject = j.value("can_inject", true);
        a.can_rewrite_plaintext = j.value("can_rewrite_plaintext", true);
        a.crack_capability = j.value("crack_capability", 0);
        a.crack_latency_s = j.value("crack_latency_s", 0.0);
        a.validate();
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad attacker model: ") + e.what());
    }
}

nlohmann::json to_json(const Transcript& t) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : t.events) {
        nlohmann::json j{{"t", e.t}, {"kind", to_string(e.kind)}, {"actor", e.actor}, {"label", e.label}};
        if (e.kind == Event::Kind::Message) {
            j["from"] = e.from;
            j["to"] = e.to;
            if (e.dropped) j["dropped"] = true;
            if (e.injected) j["injected"] = true;
        }
        if (!e.wire.empty()) j["wire"] = to_hex(e.wire);
        events.push_back(j);
    }
    nlohmann::json layers = nlohmann::json::array();
    for (auto l : t.layers_compromised) layers.push_back(to_string(l));
    nlohmann::json outcome{{"kind", outcome_name(t.outcome.kind)}};
    if (t.outcome.kind == Outcome::Kind::Downgraded) outcome["group"] = t.outcome.group;
    if (!t.outcome.reason.empty()) outcome["reason"] = t.outcome.reason;
    return {{"schema_version", 1},
            {"type", "transcript"},
            {"events", events},
            {"negotiated_group", t.negotiated_group ? nlohmann::json(*t.negotiated_group) : nlohmann::json(nullptr)},
            {"layers_compromised", layers},
            {"outcome", outcome},
            {"speculative", t.speculative},
            {"notes", t.notes}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        Scenario s;
        const auto mode = j.value("mode", std::string("handshake"));
        if (mode == "handshake") s.mode = Scenario::Mode::Handshake;
        else if (mode == "pivot") s.mode = Scenario::Mode::Pivot;
        else if (mode == "rekey-takeover") s.mode = Scenario::Mode::RekeyTakeover;
        else throw FormatError("unknown scenario mode '" + mode + "'");
        s.seed = j.value("seed", std::uint64_t{1});
        s.ue = ue_policy_from_json(j.at("ue"));
        s.epdg = epdg_policy_from_json(j.at("epdg"));
        if (j.contains("attacker") && !j["attacker"].is_null()) s.attacker = attacker_from_json(j["attacker"]);
        s.target_group = j.value("target_group", std::uint16_t{0});
        if (j.contains("schedule")) {
            const auto& sch = j["schedule"];
            if (sch.contains("premature_rekey_s")) s.schedule.premature_rekey_s = sch["premature_rekey_s"].get<double>();
            if (sch.contains("child_rekey_s")) s.schedule.child_rekey_s = sch["child_rekey_s"].get<double>();
            if (sch.contains("pivot_target")) s.schedule.pivot_target = sch["pivot_target"].get<std::uint16_t>();
        }
        if (s.mode != Scenario::Mode::Handshake && !s.attacker)
            throw FormatError("scenario mode '" + mode + "' needs an attacker");
        if (s.mode == Scenario::Mode::Pivot && s.target_group == 0)
            throw FormatError("pivot scenario needs target_group");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad scenario: ") + e.what());
    }
}

nlohmann::json to_json(const Scenario& s) {
    const char* mode = s.mode == Scenario::Mode::Handshake ? "handshake"
                       : s.mode == Scenario::Mode::Pivot   ? "pivot"
                                                           : "rekey-takeover";
    nlohmann::json j{{"mode", mode}, {"seed", s.seed}, {"ue", to_json(s.ue)}, {"epdg", to_json(s.epdg)}};
    if (s.attacker) j["attacker"] = to_json(*s.attacker);
    if (s.target_group) j["target_group"] = s.target_group;
    nlohmann::json sch = nlohmann::json::object();
    if (s.schedule.premature_rekey_s) sch["premature_rekey_s"] = *s.schedule.premature_rekey_s;
    if (s.schedule.child_rekey_s) sch["child_rekey_s"] = *s.schedule.child_rekey_s;
    if (s.schedule.pivot_target) sch["pivot_target"] = *s.schedule.pivot_target;
    if (!sch.empty()) j["schedule"] = sch;
    return j;
}

Transcript run_scenario(const Scenario& s) {
    switch (s.mode) {
        case Scenario::Mode::Handshake: return run_handshake(s.ue, s.epdg, s.attacker, s.seed);
        case Scenario::Mode::Pivot: return attack_invalid_ke_pivot(s.ue, s.epdg, *s.attacker, s.target_group, s.seed);
        case Scenario::Mode::RekeyTakeover: return rekey_takeover(s.ue, s.epdg, *s.attacker, s.schedule, s.seed);
    }
    throw Error("unreachable scenario mode");
}

}  // namespace epdg::sim
