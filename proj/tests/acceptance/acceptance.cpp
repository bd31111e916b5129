// Acceptance run: one PASS/FAIL line per criterion, each under its own
// wall-clock budget. Exit status is nonzero when any criterion fails.

#include <openssl/bn.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "epdg/analysis/key_analysis.hpp"
#include "epdg/audit/config_audit.hpp"
#include "epdg/cli/commands.hpp"
#include "epdg/cli/mock_fleet.hpp"
#include "epdg/common/errors.hpp"
#include "epdg/dh/engine.hpp"
#include "epdg/ike/codec.hpp"
#include "epdg/scanner/scanner.hpp"
#include "epdg/scanner/transport.hpp"
#include "epdg/sim/attack.hpp"

namespace {

using namespace epdg;
using Wall = std::chrono::steady_clock;

struct Verdict {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    return nlohmann::json::parse(in);
}

sim::Scenario scenario(const std::string& name) {
    return sim::scenario_from_json(load_json(cli::data_file("scenarios/" + name)));
}

cli::MockFleetSpec fleet_spec(const std::string& name) {
    return cli::fleet_from_json(load_json(cli::data_file("fleets/" + name)));
}

scanner::ProbeConfig loopback_cfg() {
    scanner::ProbeConfig cfg;
    cfg.timeout = std::chrono::milliseconds(500);
    cfg.inter_probe_delay = std::chrono::milliseconds(0);
    return cfg;
}

// independent modular exponentiation through OpenSSL
dh::BigInt bn_mod_exp(const dh::BigInt& base, const dh::BigInt& exp, const dh::BigInt& mod) {
    BIGNUM* b = nullptr;
    BIGNUM* e = nullptr;
    BIGNUM* m = nullptr;
    BN_hex2bn(&b, base.get_str(16).c_str());
    BN_hex2bn(&e, exp.get_str(16).c_str());
    BN_hex2bn(&m, mod.get_str(16).c_str());
    BIGNUM* r = BN_new();
    BN_CTX* ctx = BN_CTX_new();
    BN_mod_exp(r, b, e, m, ctx);
    char* hex = BN_bn2hex(r);
    dh::BigInt out(hex, 16);
    OPENSSL_free(hex);
    BN_CTX_free(ctx);
    BN_free(r);
    BN_free(m);
    BN_free(e);
    BN_free(b);
    return out;
}

std::uint64_t pow_by_multiplication(std::uint64_t g, std::uint64_t e, std::uint64_t p) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 0; i < e; ++i) r = r * g % p;
    return r;
}

Verdict dh_correctness() {
    Verdict v;
    SeededRandom rng(1);
    for (const int id : dh::supported_group_ids()) {
        const auto& grp = dh::group_params(id);
        for (int i = 0; i < 50; ++i) {
            const auto a = dh::gen_keypair(grp, rng);
            const auto b = dh::gen_keypair(grp, rng);
            const auto ka = dh::shared_secret(grp, a.private_exponent, b.public_value).value;
            const auto kb = dh::shared_secret(grp, b.private_exponent, a.public_value).value;
            v.require(ka == kb, "secrets disagree in DH" + std::to_string(id));
            if (i < 3) {
                v.require(a.public_value == bn_mod_exp(grp.g, a.private_exponent, grp.p),
                          "public value differs from reference in DH" + std::to_string(id));
                v.require(ka == bn_mod_exp(b.public_value, a.private_exponent, grp.p),
                          "secret differs from reference in DH" + std::to_string(id));
            }
        }
    }
    const std::uint64_t p = 65521;
    const auto toy = dh::DhGroup::custom(p, 17);
    for (int i = 0; i < 100; ++i) {
        const auto a = dh::gen_keypair(toy, rng);
        const auto b = dh::gen_keypair(toy, rng);
        const auto ea = a.private_exponent.get_ui();
        const auto eb = b.private_exponent.get_ui();
        const auto k = pow_by_multiplication(pow_by_multiplication(17, eb, p), ea, p);
        v.require(a.public_value.get_ui() == pow_by_multiplication(17, ea, p), "toy public value mismatch");
        v.require(dh::shared_secret(toy, a.private_exponent, b.public_value).value.get_ui() == k, "toy secret mismatch");
    }
    return v;
}

ike::IkeMessage random_message(std::mt19937_64& gen, RandomSource& rng) {
    auto pick = [&gen](std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen); };
    const auto& modp = ike::modp_groups();
    const auto& ecp = ike::ecp_groups();
    auto any_group = [&]() { return pick(3) == 0 ? ecp[pick(ecp.size())] : modp[pick(modp.size())]; };
    ike::ClientProposalSpec spec;
    const std::size_t n = 1 + pick(6);
    while (spec.offered_groups.size() < n) {
        const auto g = any_group();
        if (std::find(spec.offered_groups.begin(), spec.offered_groups.end(), g) == spec.offered_groups.end())
            spec.offered_groups.push_back(g);
    }
    spec.chosen_group = spec.offered_groups[pick(spec.offered_groups.size())];
    spec.ke_data = rng.bytes(*ike::ke_length(spec.chosen_group));
    spec.nonce_length = 16 + pick(241);
    ike::apply_default_transforms(spec);
    const auto request = ike::build_sa_init(spec, rng);
    ike::Spi rspi{};
    for (auto& x : rspi) x = static_cast<std::uint8_t>(pick(256));
    switch (pick(4)) {
        case 0:
            return request;
        case 1:
            return ike::build_sa_init_response(request, spec.chosen_group, rng.bytes(*ike::ke_length(spec.chosen_group)),
                                               rng.bytes(32), rspi);
        case 2:
            return ike::build_invalid_ke(request, any_group());
        default:
            return ike::build_notify_response(request, ike::notify_type::kNoProposalChosen);
    }
}

Verdict codec_robustness() {
    Verdict v;
    std::mt19937_64 gen(2024);
    SeededRandom rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const auto msg = random_message(gen, rng);
        const Bytes wire = ike::encode(msg);
        const Bytes again = ike::encode(ike::decode(wire));
        v.require(again == wire, "round trip differs at message " + std::to_string(i));
    }
    std::size_t untyped = 0;
    for (int i = 0; i < 10000; ++i) {
        Bytes raw(std::uniform_int_distribution<std::size_t>(0, 400)(gen));
        for (auto& b : raw) b = static_cast<std::uint8_t>(gen());
        if (i % 2 == 0 && raw.size() >= ike::kHeaderSize) {
            raw[16] = ike::payload_type::kNonce;
            raw[17] = ike::kVersion2;
            const auto len = static_cast<std::uint32_t>(raw.size());
            raw[24] = static_cast<std::uint8_t>(len >> 24);
            raw[25] = static_cast<std::uint8_t>(len >> 16);
            raw[26] = static_cast<std::uint8_t>(len >> 8);
            raw[27] = static_cast<std::uint8_t>(len);
        }
        try {
            (void)ike::decode(raw);
        } catch (const Error&) {
        } catch (...) {
            ++untyped;
        }
    }
    v.require(untyped == 0, std::to_string(untyped) + " fuzz inputs raised an untyped exception");
    return v;
}

std::vector<std::string> labels(const sim::Transcript& t) {
    std::vector<std::string> out;
    for (const auto* e : t.messages()) out.push_back(e->label);
    return out;
}

Verdict invalid_ke_sequence() {
    Verdict v;
    const auto t = sim::run_scenario(scenario("invalid_ke_switch.json"));
    const std::vector<std::string> expected{"SA_INIT([DH2, DH14], KE_DH14)", "INVALID_KE(USE DH2)",
                                            "SA_INIT([DH2, DH14], KE_DH2)"};
    v.require(labels(t) == expected, "message sequence differs");
    v.require(t.negotiated_group == 2, "negotiated group is not DH2");
    return v;
}

Verdict pivot_attack() {
    Verdict v;
    auto s = scenario("pivot_downgrade.json");
    const auto any = sim::run_scenario(s);
    v.require(any.outcome.kind == sim::Outcome::Kind::Downgraded && any.outcome.group == 1,
              "any-group client was not downgraded to DH1");
    s.ue.invalid_ke_rule = sim::InvalidKeRule::OfferedOnly;
    const auto strict = sim::run_scenario(s);
    v.require(strict.outcome.kind == sim::Outcome::Kind::AttackFailed, "offered-only client was downgraded");
    return v;
}

Verdict static_key_pool() {
    Verdict v;
    cli::MockFleet fleet(fleet_spec("static_pool_13.json"));
    fleet.start();
    const auto targets = fleet.targets();
    std::vector<analysis::KeyObservation> all;
    std::mutex mu;
    std::size_t failed = 0;
    scanner::for_each_parallel(targets.size(), targets.size(), [&](std::size_t i) {
        scanner::UdpTransport udp;
        SeededRandom rng(100 + i);
        scanner::Scanner sc(udp, rng, loopback_cfg());
        const auto attempts = sc.collect_keys(targets[i], 2, 500);
        std::lock_guard lock(mu);
        for (const auto& a : attempts) {
            if (a.observation) all.push_back(*a.observation);
            else ++failed;
        }
    });
    fleet.stop();
    v.require(failed == 0, std::to_string(failed) + " handshakes failed");
    v.require(all.size() == 13u * 500u, "observation count " + std::to_string(all.size()));
    const auto report = analysis::census(all);
    v.require(report.distinct_keys == 10, "distinct keys " + std::to_string(report.distinct_keys));
    v.require(report.sharing_matrix.size() == 10, "shared keys " + std::to_string(report.sharing_matrix.size()));
    for (const auto& [key, ops] : report.sharing_matrix)
        v.require(ops.size() == 13, "a key is shared by " + std::to_string(ops.size()) + " operators");

    const double p = analysis::coverage_confidence(10, 500);
    v.require(p > 0.9999, "coverage confidence too low");
    std::mt19937_64 gen(17);
    const int trials = 100000;
    for (const int n : {30, 500}) {
        int complete = 0;
        for (int t = 0; t < trials; ++t) {
            std::uint32_t seen = 0;
            for (int i = 0; i < n && seen != 0x3ff; ++i) seen |= 1u << (gen() % 10);
            complete += seen == 0x3ff;
        }
        const double expect = analysis::coverage_confidence(10, n);
        const double sigma = std::sqrt(expect * (1 - expect) / trials);
        v.require(std::abs(static_cast<double>(complete) / trials - expect) <= 3 * sigma + 1e-12,
                  "Monte Carlo disagrees at n=" + std::to_string(n));
    }
    return v;
}

Verdict tolerance_split() {
    Verdict v;
    cli::MockFleet fleet(fleet_spec("tolerance_100.json"));
    fleet.start();
    const auto targets = fleet.targets();
    std::map<std::string, int> counts;
    std::mutex mu;
    scanner::for_each_parallel(targets.size(), 16, [&](std::size_t i) {
        scanner::UdpTransport udp;
        SeededRandom rng(200 + i);
        auto cfg = loopback_cfg();
        cfg.retries = 0;
        scanner::Scanner sc(udp, rng, cfg);
        std::string key;
        try {
            const auto r = sc.weak_preference_test(targets[i]);
            key = scanner::to_string(r.kind);
        } catch (const TransportFailure&) {
            key = "unreachable";
        }
        std::lock_guard lock(mu);
        ++counts[key];
    });
    fleet.stop();
    using K = scanner::ToleranceResult::Kind;
    const std::map<std::string, int> expected{{scanner::to_string(K::Tolerated), 41},
                                              {scanner::to_string(K::UpgradeRequested), 42},
                                              {scanner::to_string(K::Error), 12},
                                              {scanner::to_string(K::DowngradeIndicated), 4},
                                              {"unreachable", 1}};
    std::ostringstream got;
    for (const auto& [k, n] : counts) got << k << "=" << n << " ";
    v.require(counts == expected, "split " + got.str());
    return v;
}

std::vector<dh::BigInt> read_exponents(const std::string& path) {
    std::ifstream in(path);
    std::vector<dh::BigInt> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(dh::from_hex(line));
    }
    return out;
}

Verdict cross_group_reuse() {
    Verdict v;
    cli::MockFleet fleet(fleet_spec("cross_group.json"));
    fleet.start();
    std::vector<analysis::KeyObservation> all;
    scanner::UdpTransport udp;
    SeededRandom rng(300);
    scanner::Scanner sc(udp, rng, loopback_cfg());
    for (const auto& t : fleet.targets())
        for (const std::uint16_t g : {1, 14})
            for (const auto& a : sc.collect_keys(t, g, 3))
                if (a.observation) all.push_back(*a.observation);
    fleet.stop();
    v.require(all.size() == 12, "observation count " + std::to_string(all.size()));
    const auto r = analysis::cross_group_exposure(all, read_exponents(cli::data_file("fleets/cross_group.exponents")));
    v.require(r.evidence.size() == 1, "flagged " + std::to_string(r.evidence.size()) + " operators");
    if (r.evidence.size() == 1) {
        v.require(r.evidence.front().op == "997-01", "flagged " + r.evidence.front().op);
        v.require(r.evidence.front().groups == std::vector<std::uint16_t>{1, 14}, "wrong group pair");
    }
    return v;
}

Verdict config_audit() {
    Verdict v;
    const auto rules = audit::RuleSet::load(cli::data_file("deprecated_algorithms.json"));
    const auto defaults = audit::VendorDefaults::load(cli::data_file("vendor_defaults.json"));
    const auto* q = defaults.find("qualcomm");
    v.require(q != nullptr, "no qualcomm defaults");
    if (q) {
        std::set<std::uint16_t> ke;
        for (const auto& f : audit::audit(*q, rules).flags)
            if (f.category == audit::Category::Ke) ke.insert(f.id);
        v.require(ke == std::set<std::uint16_t>{2, 5}, "qualcomm KE flags differ");
    }
    const auto aes = audit::audit(
        audit::record_from_json(nlohmann::json::parse(R"({"vendor": "x", "encryption": ["AES_CBC-128", "AES_CBC-256"]})")),
        rules);
    v.require(!aes.has(audit::Category::Encryption), "AES-only record flagged");
    std::vector<audit::DeprecationReport> reports;
    for (int i = 0; i < 100; ++i) {
        nlohmann::json j{{"vendor", "corpus"}, {"operator", "232-" + std::to_string(100 + i)}};
        j["dh_groups"] = i < 83 ? std::vector<int>{2, 14} : std::vector<int>{14, 19};
        reports.push_back(audit::audit(audit::record_from_json(j), rules));
    }
    const auto s = audit::aggregate(reports);
    v.require(std::abs(s.per_vendor.at("corpus").deprecated_share.at(audit::Category::Ke) - 0.83) < 1e-12,
              "corpus share is not 0.83");
    return v;
}

Verdict rekey_takeover() {
    Verdict v;
    const auto base = scenario("full_attack.json");
    using sim::Layer;
    v.require(sim::run_scenario(base).layers_compromised == std::set<Layer>{Layer::L1, Layer::L2, Layer::L3},
              "default layers differ");
    auto sip = base;
    sip.epdg.enforce_sip_encryption = true;
    v.require(sim::run_scenario(sip).layers_compromised == std::set<Layer>{Layer::L1, Layer::L2},
              "SIP-encrypted layers differ");
    auto slow = base;
    slow.attacker->crack_latency_s = slow.ue.rekey_hard_s + 1;
    v.require(sim::run_scenario(slow).outcome.kind == sim::Outcome::Kind::AttackFailed, "slow crack succeeded");
    return v;
}

Verdict blacklist() {
    Verdict v;
    const auto entries = analysis::load_blacklist(cli::data_file("static_key_blacklist.txt"));
    v.require(entries.size() == 49, "entries " + std::to_string(entries.size()));
    std::map<std::uint16_t, int> per_group;
    for (const auto& e : entries) ++per_group[e.group];
    v.require(per_group == std::map<std::uint16_t, int>{{1, 10}, {2, 10}, {5, 10}, {14, 10}, {15, 9}},
              "per-group counts differ");
    std::ifstream in(std::string(EPDG_DATA_DIR) + "/testdata/blacklist_match.jsonl");
    std::vector<analysis::KeyObservation> obs;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) obs.push_back(analysis::observation_from_json(nlohmann::json::parse(line)));
    v.require(analysis::match_blacklist(obs, entries).size() == 1, "fixture hit count differs");
    return v;
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Verdict()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "DH agreement across MODP groups and toy-group oracle", 60, dh_correctness},
        {2, "codec round trip and fuzz robustness", 30, codec_robustness},
        {3, "INVALID_KE switch sequence", 1, invalid_ke_sequence},
        {4, "INVALID_KE pivot against client rules", 1, pivot_attack},
        {5, "static key pool census and coverage", 120, static_key_pool},
        {6, "weak-preference tolerance split", 120, tolerance_split},
        {7, "cross-group exponent reuse", 10, cross_group_reuse},
        {8, "deprecated configuration audit", 5, config_audit},
        {9, "rekey takeover layers", 1, rekey_takeover},
        {10, "static key blacklist", 1, blacklist},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = Wall::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.ok = false;
            v.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(Wall::now() - start).count();
        if (v.ok && secs > c.budget_s) {
            v.ok = false;
            v.detail = "over budget";
        }
        failures += !v.ok;
        std::printf("%s criterion %d: %s (%.2f s / %.0f s)%s%s\n", v.ok ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                    c.budget_s, v.ok ? "" : " - ", v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
