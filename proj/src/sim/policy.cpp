#include "epdg/sim/policy.hpp"

#include <algorithm>
#include <chrono>

#include "epdg/common/errors.hpp"

namespace epdg::sim {

namespace {

bool contains(const std::vector<std::uint16_t>& v, std::uint16_t g) {
    return std::find(v.begin(), v.end(), g) != v.end();
}

std::uint16_t strongest(const std::vector<std::uint16_t>& groups) {
    return *std::max_element(groups.begin(), groups.end(), [](auto a, auto b) {
        return ike::group_strength(a) < ike::group_strength(b);
    });
}

Decision unsupported(const EpdgPolicy& p) {
    if (p.unsupported_action == UnsupportedAction::Drop) return {Decision::Kind::Drop, 0, 0};
    return {Decision::Kind::Reject, 0, ike::notify_type::kNoProposalChosen};
}

Decision accept_or_switch(std::uint16_t target, std::uint16_t ke_group) {
    if (target == ke_group) return {Decision::Kind::Accept, target, 0};
    return {Decision::Kind::SwitchGroup, target, 0};
}

Decision client_choice(const EpdgPolicy& p, const std::vector<std::uint16_t>& offered, std::uint16_t ke_group) {
    if (p.supports(ke_group)) return {Decision::Kind::Accept, ke_group, 0};
    for (auto g : offered) {
        if (p.supports(g)) return {Decision::Kind::SwitchGroup, g, 0};
    }
    return unsupported(p);
}

template <typename E>
E parse_enum(const nlohmann::json& j, const char* key, std::initializer_list<std::pair<const char*, E>> names, E fallback) {
    if (!j.contains(key)) return fallback;
    const auto s = j.at(key).get<std::string>();
    for (const auto& [name, value] : names) {
        if (s == name) return value;
    }
    throw FormatError(std::string("unknown value '") + s + "' for " + key);
}

}  // namespace

void UePolicy::validate() const {
    if (offered_groups.empty()) throw InvariantViolation("UE must offer at least one group");
    if (!contains(offered_groups, preferred_group))
        throw InvariantViolation("preferred group " + ike::group_name(preferred_group) + " is not offered");
    if (rekey_soft_s > rekey_hard_s) throw InvariantViolation("soft rekey timer exceeds hard timer");
    if (rekey_soft_s <= 0) throw InvariantViolation("rekey timers must be positive");
}

bool EpdgPolicy::supports(std::uint16_t group) const { return contains(supported_groups, group); }

void EpdgPolicy::validate() const {
    if (key_mode == KeyMode::StaticPool && static_pool.empty())
        throw InvariantViolation("static-pool key mode needs a non-empty pool");
    if (key_mode == KeyMode::ReuseWindow && reuse_window_s <= 0)
        throw InvariantViolation("reuse-window key mode needs a positive window");
    if (preference == Preference::DemandSpecific && demanded_group == 0)
        throw InvariantViolation("demand-specific preference needs a demanded group");
    for (const auto& e : static_pool) {
        if (e <= 1) throw InvariantViolation("static pool exponents must exceed 1");
    }
}

Decision decide(const EpdgPolicy& policy, const std::vector<std::uint16_t>& offered, std::uint16_t ke_group) {
    std::vector<std::uint16_t> common;
    for (auto g : offered) {
        if (policy.supports(g)) common.push_back(g);
    }
    switch (policy.preference) {
        case Preference::AcceptClientChoice:
            return client_choice(policy, offered, ke_group);
        case Preference::DemandStrongest:
            if (!common.empty()) return accept_or_switch(strongest(common), ke_group);
            if (policy.supported_groups.empty() || policy.unsupported_action == UnsupportedAction::Drop)
                return unsupported(policy);
            return accept_or_switch(strongest(policy.supported_groups), ke_group);
        case Preference::DemandSpecific:
            if (contains(offered, policy.demanded_group)) return accept_or_switch(policy.demanded_group, ke_group);
            return client_choice(policy, offered, ke_group);
    }
    return unsupported(policy);
}

dh::BigInt pool_exponent(const dh::BigInt& base, int group_id, bool shared) {
    const auto& group = dh::group_params(group_id);
    dh::BigInt a = base;
    if (!shared) {
        Bytes seed = dh::to_bytes(base, (mpz_sizeinbase(base.get_mpz_t(), 2) + 7) / 8);
        seed.push_back(static_cast<std::uint8_t>(group_id));
        a = dh::from_hex(sha256_hex(seed));
    }
    if (a <= 1 || a >= group.p - 1) {
        dh::BigInt r = a % (group.p - 3);
        a = r + 2;
    }
    return a;
}

EpdgResponder::EpdgResponder(EpdgPolicy policy, std::uint64_t seed, std::function<double()> clock)
    : policy_(std::move(policy)), rng_(seed), clock_(std::move(clock)) {
    policy_.validate();
    if (!clock_) {
        clock_ = [] {
            using namespace std::chrono;
            return duration<double>(steady_clock::now().time_since_epoch()).count();
        };
    }
}

std::pair<std::optional<dh::BigInt>, Bytes> EpdgResponder::server_key(std::uint16_t group) {
    if (!ike::is_modp_group(group)) {
        // no curve arithmetic: a well-formed but unverified key share
        return {std::nullopt, rng_.bytes(*ike::ke_length(group))};
    }
    const auto& params = dh::group_params(group);
    switch (policy_.key_mode) {
        case KeyMode::FreshPerHandshake: {
            auto kp = dh::gen_keypair(params, rng_);
            return {kp.private_exponent, dh::to_bytes(kp.public_value, params.octets())};
        }
        case KeyMode::StaticPool: {
            const std::size_t idx = static_cast<std::size_t>(rng_.uniform(policy_.static_pool.size()));
            const auto a = pool_exponent(policy_.static_pool[idx], group, policy_.pool_shared_across_groups);
            auto key = std::make_pair(idx, static_cast<int>(group));
            auto it = pool_cache_.find(key);
            if (it == pool_cache_.end()) {
                it = pool_cache_.emplace(key, dh::keypair_from_exponent(params, a).public_value).first;
            }
            return {a, dh::to_bytes(it->second, params.octets())};
        }
        case KeyMode::ReuseWindow: {
            const double now = clock_();
            auto it = window_cache_.find(group);
            if (it == window_cache_.end() || now - it->second.created >= policy_.reuse_window_s) {
                auto kp = dh::gen_keypair(params, rng_);
                window_cache_[group] = Windowed{kp.private_exponent, kp.public_value, now};
                it = window_cache_.find(group);
            }
            return {it->second.exponent, dh::to_bytes(it->second.public_value, params.octets())};
        }
    }
    throw Error("unreachable key mode");
}

std::optional<ike::IkeMessage> EpdgResponder::handle(const ike::IkeMessage& request) {
    using namespace ike;
    if (request.header.exchange_type != exchange::kIkeSaInit) return std::nullopt;
    if (request.header.flags & flags::kResponse) return std::nullopt;

    const auto* ke = request.find<KePayload>();
    const auto* sa = request.find<SaPayload>();
    if (!ke || !sa || !request.find<NoncePayload>()) return build_notify_response(request, notify_type::kInvalidSyntax);

    const auto offered = offered_groups(request);
    const Decision d = decide(policy_, offered, ke->group);
    switch (d.kind) {
        case Decision::Kind::Drop:
            return std::nullopt;
        case Decision::Kind::Reject:
            return build_notify_response(request, d.notify);
        case Decision::Kind::SwitchGroup:
            return build_invalid_ke(request, d.group);
        case Decision::Kind::Accept:
            break;
    }

    // client key share must be well formed for the accepted group
    const auto expected = ke_length(ke->group);
    if (!expected || (is_modp_group(ke->group) && ke->data.size() != *expected))
        return build_notify_response(request, notify_type::kInvalidSyntax);
    if (is_modp_group(ke->group)) {
        const auto& params = dh::group_params(ke->group);
        const auto peer = dh::from_bytes(ke->data);
        if (peer <= 1 || peer >= params.p) return build_notify_response(request, notify_type::kInvalidSyntax);
    }
    const auto& first = sa->proposals.front();
    for (std::uint8_t type : {transform_type::kEncr, transform_type::kPrf, transform_type::kInteg}) {
        if (std::none_of(first.transforms.begin(), first.transforms.end(),
                         [type](const Transform& t) { return t.type == type; }))
            return build_notify_response(request, notify_type::kNoProposalChosen);
    }

    auto [exponent, pub] = server_key(ke->group);
    Bytes nonce = policy_.fixed_nonce ? *policy_.fixed_nonce : rng_.bytes(32);
    Spi spi{};
    rng_.fill(spi);
    last_served_ = Served{ke->group, exponent, pub};
    return build_sa_init_response(request, ke->group, std::move(pub), std::move(nonce), spi);
}

// ---- JSON ----

std::string to_string(InvalidKeRule r) {
    switch (r) {
        case InvalidKeRule::OfferedOnly: return "offered-only";
        case InvalidKeRule::AnyGroup: return "any-group";
        case InvalidKeRule::RejectAll: return "reject-all";
    }
    return "?";
}

std::string to_string(Preference p) {
    switch (p) {
        case Preference::AcceptClientChoice: return "accept-client-choice";
        case Preference::DemandStrongest: return "demand-strongest";
        case Preference::DemandSpecific: return "demand-specific";
    }
    return "?";
}

std::string to_string(KeyMode m) {
    switch (m) {
        case KeyMode::FreshPerHandshake: return "fresh";
        case KeyMode::StaticPool: return "static-pool";
        case KeyMode::ReuseWindow: return "reuse-window";
    }
    return "?";
}

nlohmann::json to_json(const UePolicy& p) {
    return {{"offered_groups", p.offered_groups},
            {"preferred_group", p.preferred_group},
            {"invalid_ke_rule", to_string(p.invalid_ke_rule)},
            {"rekey_soft_s", p.rekey_soft_s},
            {"rekey_hard_s", p.rekey_hard_s},
            {"sip_encryption_required", p.sip_encryption_required}};
}

UePolicy ue_policy_from_json(const nlohmann::json& j) {
    try {
        UePolicy p;
        p.offered_groups = j.at("offered_groups").get<std::vector<std::uint16_t>>();
        p.preferred_group = j.value("preferred_group", p.offered_groups.empty() ? std::uint16_t{0} : p.offered_groups.front());
        p.invalid_ke_rule = parse_enum<InvalidKeRule>(
            j, "invalid_ke_rule",
            {{"offered-only", InvalidKeRule::OfferedOnly}, {"any-group", InvalidKeRule::AnyGroup},
             {"reject-all", InvalidKeRule::RejectAll}},
            InvalidKeRule::OfferedOnly);
        p.rekey_soft_s = j.value("rekey_soft_s", p.rekey_soft_s);
        p.rekey_hard_s = j.value("rekey_hard_s", p.rekey_hard_s);
        p.sip_encryption_required = j.value("sip_encryption_required", false);
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad UE policy: ") + e.what());
    }
}

nlohmann::json to_json(const EpdgPolicy& p) {
    nlohmann::json j{{"supported_groups", p.supported_groups},
                     {"preference", to_string(p.preference)},
                     {"key_mode", to_string(p.key_mode)},
                     {"unsupported", p.unsupported_action == UnsupportedAction::Drop ? "drop" : "notify"},
                     {"reauth_on_rekey", p.reauth_on_rekey},
                     {"enforce_sip_encryption", p.enforce_sip_encryption}};
    if (p.preference == Preference::DemandSpecific) j["demanded_group"] = p.demanded_group;
    if (p.key_mode == KeyMode::StaticPool) {
        auto pool = nlohmann::json::array();
        for (const auto& e : p.static_pool) pool.push_back(dh::to_hex(e));
        j["static_pool"] = pool;
        j["pool_shared_across_groups"] = p.pool_shared_across_groups;
    }
    if (p.key_mode == KeyMode::ReuseWindow) j["reuse_window_s"] = p.reuse_window_s;
    if (p.fixed_nonce) j["fixed_nonce"] = to_hex(*p.fixed_nonce);
    return j;
}

EpdgPolicy epdg_policy_from_json(const nlohmann::json& j) {
    try {
        EpdgPolicy p;
        p.supported_groups = j.value("supported_groups", std::vector<std::uint16_t>{});
        p.preference = parse_enum<Preference>(
            j, "preference",
            {{"accept-client-choice", Preference::AcceptClientChoice},
             {"demand-strongest", Preference::DemandStrongest},
             {"demand-specific", Preference::DemandSpecific}},
            Preference::AcceptClientChoice);
        p.demanded_group = j.value("demanded_group", std::uint16_t{0});
        p.key_mode = parse_enum<KeyMode>(
            j, "key_mode",
            {{"fresh", KeyMode::FreshPerHandshake}, {"static-pool", KeyMode::StaticPool},
             {"reuse-window", KeyMode::ReuseWindow}},
            KeyMode::FreshPerHandshake);
        for (const auto& e : j.value("static_pool", std::vector<std::string>{})) p.static_pool.push_back(dh::from_hex(e));
        p.pool_shared_across_groups = j.value("pool_shared_across_groups", true);
        p.reuse_window_s = j.value("reuse_window_s", 0.0);
        p.unsupported_action = parse_enum<UnsupportedAction>(
            j, "unsupported", {{"notify", UnsupportedAction::Notify}, {"drop", UnsupportedAction::Drop}},
            UnsupportedAction::Notify);
        if (j.contains("fixed_nonce")) p.fixed_nonce = from_hex(j["fixed_nonce"].get<std::string>());
        p.reauth_on_rekey = j.value("reauth_on_rekey", false);
        p.enforce_sip_encryption = j.value("enforce_sip_encryption", false);
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad ePDG policy: ") + e.what());
    }
}

}  // namespace epdg::sim
