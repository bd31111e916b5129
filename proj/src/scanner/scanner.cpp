#include "epdg/scanner/scanner.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "epdg/common/errors.hpp"
#include "epdg/dh/engine.hpp"
#include "epdg/ike/codec.hpp"

namespace epdg::scanner {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::vector<std::uint16_t> canonical_order() {
    std::vector<std::uint16_t> order = ike::modp_groups();
    order.insert(order.end(), ike::ecp_groups().begin(), ike::ecp_groups().end());
    return order;
}

std::size_t canonical_rank(std::uint16_t g) {
    static const auto order = canonical_order();
    auto it = std::find(order.begin(), order.end(), g);
    return it == order.end() ? order.size() + g : static_cast<std::size_t>(it - order.begin());
}

bool spi_matches(ByteView reply, const ike::Spi& spi) {
    return reply.size() >= spi.size() && std::equal(spi.begin(), spi.end(), reply.begin());
}

}  // namespace

std::string outcome_kind(const ProbeOutcome& o) {
    return std::visit(overloaded{[](const outcome::Accepted&) { return std::string("accepted"); },
                                 [](const outcome::SwitchProposed&) { return std::string("switch-proposed"); },
                                 [](const outcome::ErrorNotify&) { return std::string("error-notify"); },
                                 [](const outcome::Ignored&) { return std::string("ignored"); },
                                 [](const outcome::TransportError&) { return std::string("transport-error"); }},
                      o);
}

ProbeOutcome classify_response(ByteView reply, std::uint16_t probed_group) {
    ike::IkeMessage msg;
    try {
        msg = ike::decode(reply);
    } catch (const Error& e) {
        return outcome::TransportError{std::string("malformed response: ") + e.what()};
    }
    if (msg.header.exchange_type != ike::exchange::kIkeSaInit || !(msg.header.flags & ike::flags::kResponse))
        return outcome::TransportError{"unexpected message (exchange " + std::to_string(msg.header.exchange_type) + ")"};

    for (const auto& p : msg.payloads) {
        const auto* n = std::get_if<ike::NotifyPayload>(&p);
        if (!n || n->type >= 16384) continue;  // status notifies are informational
        if (n->type == ike::notify_type::kInvalidKePayload && n->data.size() == 2) {
            const std::uint16_t to = get_u16(n->data, 0);
            if (to != probed_group) return outcome::SwitchProposed{probed_group, to};
        }
        return outcome::ErrorNotify{n->type};
    }

    const auto* ke = msg.find<ike::KePayload>();
    const auto* nonce = msg.find<ike::NoncePayload>();
    if (!ke || !nonce) return outcome::TransportError{"response carries neither KE nor an error notify"};

    outcome::Accepted acc{ke->group, ke->data, nonce->data, {}};
    if (ike::is_modp_group(ke->group)) {
        const auto& params = dh::group_params(ke->group);
        if (dh::is_degenerate_peer(params, dh::from_bytes(ke->data))) acc.flags.emplace_back("degenerate-public-value");
    } else {
        acc.flags.emplace_back("unverified-keyshare");
    }
    return acc;
}

std::string support_label(const std::map<std::uint16_t, ProbeOutcome>& per_group) {
    std::vector<std::uint16_t> requested;
    for (const auto& [g, _] : per_group) requested.push_back(g);
    std::sort(requested.begin(), requested.end(),
              [](auto a, auto b) { return canonical_rank(a) < canonical_rank(b); });

    std::vector<std::vector<std::uint16_t>> runs;
    bool prev_supported = false;
    for (auto g : requested) {
        const bool ok = std::holds_alternative<outcome::Accepted>(per_group.at(g));
        if (ok) {
            if (!prev_supported) runs.emplace_back();
            runs.back().push_back(g);
        }
        prev_supported = ok;
    }
    if (runs.empty()) return "none";

    std::string label;
    auto append = [&label](const std::string& part) {
        if (!label.empty()) label += "+";
        label += part;
    };
    for (const auto& run : runs) {
        if (run.size() >= 3) {
            append(ike::group_name(run.front()) + "–" + ike::group_name(run.back()));
        } else {
            for (auto g : run) append(ike::group_name(g));
        }
    }
    return label;
}

std::string to_string(ToleranceResult::Kind k) {
    switch (k) {
        case ToleranceResult::Kind::Tolerated: return "tolerated";
        case ToleranceResult::Kind::UpgradeRequested: return "upgrade-requested";
        case ToleranceResult::Kind::DowngradeIndicated: return "downgrade-indicated";
        case ToleranceResult::Kind::Error: return "error";
    }
    return "?";
}

Scanner::Scanner(Transport& transport, RandomSource& rng, ProbeConfig cfg, Clock clock)
    : transport_(transport), rng_(rng), cfg_(cfg), clock_(clock) {}

Endpoint Scanner::endpoint_of(const discovery::EpdgTarget& target) const {
    Endpoint ep;
    ep.address = target.addresses.front();
    ep.port = target.port;
    if (cfg_.nat_t && ep.port == 500) ep.port = 4500;
    return ep;
}

void Scanner::pace() {
    const auto now = std::chrono::steady_clock::now();
    if (last_send_) {
        const auto next = *last_send_ + cfg_.inter_probe_delay;
        if (next > now) std::this_thread::sleep_until(next);
    }
    last_send_ = std::chrono::steady_clock::now();
}

ProbeRecord Scanner::send_offer(const discovery::EpdgTarget& target, const std::vector<std::uint16_t>& offered,
                                std::uint16_t ke_group) {
    ProbeRecord rec;
    if (target.addresses.empty()) {
        rec.outcome = outcome::TransportError{"target has no address"};
        return rec;
    }
    const Endpoint ep = endpoint_of(target);
    check_target_allowed(ep.address, cfg_.authorized);

    ike::ClientProposalSpec spec;
    spec.offered_groups = offered;
    spec.chosen_group = ke_group;
    if (ike::is_modp_group(ke_group)) {
        const auto& params = dh::group_params(ke_group);
        spec.ke_data = dh::to_bytes(dh::gen_keypair(params, rng_).public_value, params.octets());
    } else if (auto len = ike::ke_length(ke_group)) {
        // classification-only key share
        spec.ke_data = rng_.bytes(*len);
    } else {
        throw PreconditionError("cannot probe unknown group " + std::to_string(ke_group));
    }
    const ike::IkeMessage request = ike::build_sa_init(spec, rng_);
    Bytes wire = ike::encode(request);
    if (cfg_.nat_t) wire = ike::add_non_esp_marker(wire);
    const ike::Spi spi = request.header.initiator_spi;
    const bool nat_t = cfg_.nat_t;

    auto accept = [&spi, nat_t](ByteView reply) {
        ByteView body = reply;
        if (nat_t) {
            auto stripped = ike::strip_non_esp_marker(reply);
            if (!stripped) return false;
            body = *stripped;
        }
        if (!spi_matches(body, spi)) return false;
        try {
            ike::decode(body);
            return true;
        } catch (const Error&) {
            return false;
        }
    };

    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        pace();
        ++rec.attempts;
        if (cfg_.capture) rec.requests.push_back(wire);
        std::optional<Bytes> reply;
        try {
            reply = transport_.exchange(ep, wire, cfg_.timeout, accept);
        } catch (const TransportFailure& e) {
            rec.outcome = outcome::TransportError{e.what()};
            return rec;
        }
        if (reply) {
            ByteView body = *reply;
            if (nat_t) body = *ike::strip_non_esp_marker(body);
            rec.outcome = classify_response(body, ke_group);
            if (cfg_.capture) rec.response = *reply;
            return rec;
        }
    }
    rec.outcome = outcome::Ignored{cfg_.timeout.count() * rec.attempts};
    return rec;
}

ProbeRecord Scanner::probe(const discovery::EpdgTarget& target, std::uint16_t group) {
    return send_offer(target, {group}, group);
}

ProbeOutcome Scanner::probe_group(const discovery::EpdgTarget& target, std::uint16_t group) {
    return probe(target, group).outcome;
}

SurveyResult Scanner::survey(const discovery::EpdgTarget& target, const std::vector<std::uint16_t>& groups) {
    if (groups.empty()) throw PreconditionError("survey needs at least one group");
    SurveyResult r;
    r.target = target;
    r.started_at = clock_.now();
    for (auto g : groups) {
        if (r.per_group.count(g)) continue;
        r.per_group.emplace(g, probe_group(target, g));
    }
    r.finished_at = clock_.now();
    r.support_label = support_label(r.per_group);
    return r;
}

ToleranceResult Scanner::weak_preference_test(const discovery::EpdgTarget& target) {
    constexpr std::uint16_t kWeakChoice = 2;
    const auto rec = send_offer(target, ike::modp_groups(), kWeakChoice);
    return std::visit(
        overloaded{
            [](const outcome::Accepted& a) {
                if (a.group == kWeakChoice) return ToleranceResult{ToleranceResult::Kind::Tolerated, 0, {}};
                return ToleranceResult{ToleranceResult::Kind::Error, 0, "accepted unrequested " + ike::group_name(a.group)};
            },
            [](const outcome::SwitchProposed& s) {
                if (ike::group_strength(s.to) > ike::group_strength(kWeakChoice))
                    return ToleranceResult{ToleranceResult::Kind::UpgradeRequested, s.to, {}};
                return ToleranceResult{ToleranceResult::Kind::DowngradeIndicated, s.to, {}};
            },
            [](const outcome::ErrorNotify& n) {
                return ToleranceResult{ToleranceResult::Kind::Error, 0, ike::notify_name(n.type)};
            },
            [](const outcome::Ignored&) { return ToleranceResult{ToleranceResult::Kind::Error, 0, "ignored"}; },
            [](const outcome::TransportError& t) -> ToleranceResult { throw TransportFailure(t.detail); },
        },
        rec.outcome);
}

std::vector<KeyAttempt> Scanner::collect_keys(const discovery::EpdgTarget& target, std::uint16_t group, int n) {
    if (n < 1) throw PreconditionError("collect_keys needs n >= 1");
    if (!ike::is_modp_group(group)) throw PreconditionError("collect_keys needs a MODP group");
    std::vector<KeyAttempt> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        KeyAttempt a{i, probe_group(target, group), std::nullopt};
        if (const auto* acc = std::get_if<outcome::Accepted>(&a.outcome)) {
            analysis::KeyObservation o;
            o.op = target.plmn;
            o.endpoint = target.addresses.front();
            o.group = acc->group;
            o.pubkey_fp = sha256_hex(acc->server_pubkey);
            o.nonce_fp = sha256_hex(acc->server_nonce);
            o.observed_at = clock_.now();
            a.observation = std::move(o);
        }
        out.push_back(std::move(a));
    }
    return out;
}

void for_each_parallel(std::size_t count, std::size_t width, const std::function<void(std::size_t)>& fn) {
    width = std::max<std::size_t>(1, std::min(width, count));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (std::size_t w = 0; w < width; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---- JSON ----

nlohmann::json to_json(const ProbeOutcome& o) {
    nlohmann::json j{{"kind", outcome_kind(o)}};
    std::visit(overloaded{[&j](const outcome::Accepted& a) {
                              j["group"] = a.group;
                              j["pubkey_fp"] = sha256_hex(a.server_pubkey);
                              j["nonce"] = to_hex(a.server_nonce);
                              if (!a.flags.empty()) j["flags"] = a.flags;
                          },
                          [&j](const outcome::SwitchProposed& s) {
                              j["from"] = s.from;
                              j["to"] = s.to;
                          },
                          [&j](const outcome::ErrorNotify& n) {
                              j["type"] = n.type;
                              j["name"] = ike::notify_name(n.type);
                          },
                          [&j](const outcome::Ignored& i) { j["timeout_ms"] = i.timeout_ms; },
                          [&j](const outcome::TransportError& t) { j["detail"] = t.detail; }},
               o);
    return j;
}

namespace {
void put_target(nlohmann::json& j, const discovery::EpdgTarget& t) {
    j["plmn"] = t.plmn.str();
    j["fqdn"] = t.fqdn;
    j["address"] = t.addresses.empty() ? nlohmann::json(nullptr) : nlohmann::json(t.addresses.front());
}
}  // namespace

nlohmann::json to_json(const SurveyResult& r) {
    nlohmann::json j{{"schema_version", 1}, {"type", "survey"}};
    put_target(j, r.target);
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [g, o] : r.per_group) per[std::to_string(g)] = to_json(o);
    j["per_group"] = per;
    j["support_label"] = r.support_label;
    j["started_at"] = iso8601(r.started_at);
    j["finished_at"] = iso8601(r.finished_at);
    return j;
}

nlohmann::json tolerance_to_json(const discovery::EpdgTarget& t, const ToleranceResult& r) {
    nlohmann::json j{{"schema_version", 1}, {"type", "tolerance"}};
    put_target(j, t);
    j["result"] = to_string(r.kind);
    if (r.kind == ToleranceResult::Kind::UpgradeRequested || r.kind == ToleranceResult::Kind::DowngradeIndicated)
        j["group"] = r.group;
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

nlohmann::json to_json(const discovery::EpdgTarget& t, const KeyAttempt& a) {
    if (a.observation) {
        auto j = analysis::to_json(*a.observation);
        j["attempt"] = a.index;
        return j;
    }
    nlohmann::json j{{"schema_version", 1}, {"type", "gap"}};
    put_target(j, t);
    j["attempt"] = a.index;
    j["outcome"] = to_json(a.outcome);
    return j;
}

}  // namespace epdg::scanner
