#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <set>
#include <string>

#include "epdg/cli/mock_fleet.hpp"
#include "epdg/common/errors.hpp"
#include "epdg/common/random.hpp"
#include "epdg/ike/codec.hpp"
#include "epdg/scanner/scanner.hpp"
#include "epdg/sim/policy.hpp"

namespace {

using namespace epdg;
using scanner::ToleranceResult;
namespace oc = scanner::outcome;

// answers through an in-process responder; nullopt models a silent server
class ResponderTransport final : public scanner::Transport {
public:
    explicit ResponderTransport(sim::EpdgPolicy p) : responder_(std::move(p), 5) {}
    std::optional<Bytes> exchange(const scanner::Endpoint&, ByteView request, std::chrono::milliseconds,
                                  const std::function<bool(ByteView)>& accept) override {
        ++sent;
        auto reply = responder_.handle(ike::decode(request));
        if (!reply) return std::nullopt;
        Bytes wire = ike::encode(*reply);
        if (!accept(wire)) return std::nullopt;
        return wire;
    }
    int sent = 0;

private:
    sim::EpdgResponder responder_;
};

discovery::EpdgTarget local_target(std::uint16_t port = 500) {
    discovery::EpdgTarget t;
    t.plmn = discovery::PlmnId("001", "01");
    t.fqdn = discovery::epdg_fqdn(t.plmn);
    t.addresses = {"127.0.0.1"};
    t.port = port;
    return t;
}

scanner::ProbeConfig fast_cfg() {
    scanner::ProbeConfig cfg;
    cfg.timeout = std::chrono::milliseconds(300);
    cfg.inter_probe_delay = std::chrono::milliseconds(0);
    return cfg;
}

sim::EpdgPolicy policy(std::vector<std::uint16_t> groups, sim::Preference pref = sim::Preference::AcceptClientChoice) {
    sim::EpdgPolicy p;
    p.supported_groups = std::move(groups);
    p.preference = pref;
    return p;
}

TEST(ScannerProbe, AcceptedWhenSupported) {
    ResponderTransport tr(policy({2, 14}));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    const auto o = sc.probe_group(local_target(), 2);
    ASSERT_TRUE(std::holds_alternative<oc::Accepted>(o));
    EXPECT_EQ(std::get<oc::Accepted>(o).group, 2);
    EXPECT_EQ(std::get<oc::Accepted>(o).server_pubkey.size(), 128u);
}

TEST(ScannerProbe, SwitchProposedByDemandStrongest) {
    ResponderTransport tr(policy({14}, sim::Preference::DemandStrongest));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    EXPECT_EQ(sc.probe_group(local_target(), 2), scanner::ProbeOutcome(oc::SwitchProposed{2, 14}));
}

TEST(ScannerProbe, IgnoredWhenDropped) {
    auto p = policy({14});
    p.unsupported_action = sim::UnsupportedAction::Drop;
    ResponderTransport tr(p);
    SeededRandom rng(1);
    auto cfg = fast_cfg();
    cfg.retries = 1;
    scanner::Scanner sc(tr, rng, cfg);
    const auto rec = sc.probe(local_target(), 19);
    EXPECT_TRUE(std::holds_alternative<oc::Ignored>(rec.outcome));
    EXPECT_EQ(rec.attempts, 2);
    EXPECT_EQ(tr.sent, 2);
}

TEST(ScannerProbe, ErrorNotifyForUnsupported) {
    ResponderTransport tr(policy({19, 20}));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    EXPECT_EQ(sc.probe_group(local_target(), 2), scanner::ProbeOutcome(oc::ErrorNotify{ike::notify_type::kNoProposalChosen}));
}

TEST(ScannerProbe, EcpProbeIsFlaggedUnverified) {
    ResponderTransport tr(policy({19}));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    const auto o = sc.probe_group(local_target(), 19);
    ASSERT_TRUE(std::holds_alternative<oc::Accepted>(o));
    EXPECT_EQ(std::get<oc::Accepted>(o).flags, std::vector<std::string>{"unverified-keyshare"});
}

TEST(ScannerProbe, CaptureRetainsOctets) {
    ResponderTransport tr(policy({2}));
    SeededRandom rng(1);
    auto cfg = fast_cfg();
    cfg.capture = true;
    scanner::Scanner sc(tr, rng, cfg);
    const auto rec = sc.probe(local_target(), 2);
    ASSERT_EQ(rec.requests.size(), 1u);
    ASSERT_TRUE(rec.response.has_value());
    EXPECT_EQ(ike::decode(rec.requests.front()).find<ike::KePayload>()->group, 2);
}

TEST(ScannerClassify, TotalOverGarbage) {
    EXPECT_EQ(scanner::outcome_kind(scanner::classify_response(Bytes{1, 2, 3}, 2)), "transport-error");
    EXPECT_EQ(scanner::outcome_kind(scanner::classify_response(Bytes{}, 2)), "transport-error");
}

TEST(ScannerClassify, DegeneratePublicValueFlagged) {
    SeededRandom rng(1);
    ike::ClientProposalSpec spec;
    spec.offered_groups = {2};
    spec.chosen_group = 2;
    spec.ke_data = Bytes(128, 1);
    const auto req = ike::build_sa_init(spec, rng);
    const auto& grp = dh::group_params(2);
    const auto resp = ike::build_sa_init_response(req, 2, dh::to_bytes(grp.p - 1, 128), Bytes(32, 1), ike::Spi{1});
    const auto o = scanner::classify_response(ike::encode(resp), 2);
    ASSERT_TRUE(std::holds_alternative<oc::Accepted>(o));
    EXPECT_EQ(std::get<oc::Accepted>(o).flags, std::vector<std::string>{"degenerate-public-value"});
}

TEST(ScannerSurvey, Labels) {
    const std::vector<std::uint16_t> all{1, 2, 5, 14, 15, 16, 17, 18};
    auto run = [&](sim::EpdgPolicy p) {
        ResponderTransport tr(std::move(p));
        SeededRandom rng(1);
        scanner::Scanner sc(tr, rng, fast_cfg());
        return sc.survey(local_target(), all).support_label;
    };
    EXPECT_EQ(run(policy({1, 2})), "DH1+DH2");
    EXPECT_EQ(run(policy(all)), "DH1–DH18");
    EXPECT_EQ(run(policy({19})), "none");
    EXPECT_EQ(run(policy({2, 14, 15, 16})), "DH2+DH14–DH16");
}

TEST(ScannerSurvey, EmptyGroupListRejected) {
    ResponderTransport tr(policy({2}));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    EXPECT_THROW(sc.survey(local_target(), {}), PreconditionError);
}

TEST(ScannerTolerance, Classes) {
    auto run = [](sim::EpdgPolicy p) {
        ResponderTransport tr(std::move(p));
        SeededRandom rng(1);
        scanner::Scanner sc(tr, rng, fast_cfg());
        return sc.weak_preference_test(local_target());
    };
    EXPECT_EQ(run(policy({2, 14})).kind, ToleranceResult::Kind::Tolerated);
    const auto up = run(policy({2, 14, 18}, sim::Preference::DemandStrongest));
    EXPECT_EQ(up.kind, ToleranceResult::Kind::UpgradeRequested);
    EXPECT_EQ(up.group, 18);
    auto down_policy = policy({1, 2}, sim::Preference::DemandSpecific);
    down_policy.demanded_group = 1;
    const auto down = run(down_policy);
    EXPECT_EQ(down.kind, ToleranceResult::Kind::DowngradeIndicated);
    EXPECT_EQ(down.group, 1);
    EXPECT_EQ(run(policy({19, 20})).kind, ToleranceResult::Kind::Error);
}

TEST(ScannerCollect, ObservationsCarryFingerprints) {
    auto p = policy({2});
    p.key_mode = sim::KeyMode::StaticPool;
    p.static_pool = {dh::BigInt(123457), dh::BigInt(98765431)};
    ResponderTransport tr(p);
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    const auto attempts = sc.collect_keys(local_target(), 2, 40);
    ASSERT_EQ(attempts.size(), 40u);
    std::set<std::string> fps;
    for (const auto& a : attempts) {
        ASSERT_TRUE(a.observation.has_value());
        fps.insert(a.observation->pubkey_fp);
    }
    std::set<std::string> expected;
    for (const auto& e : p.static_pool)
        expected.insert(dh::pubkey_fingerprint(dh::keypair_from_exponent(dh::group_params(2), e).public_value,
                                               dh::group_params(2)));
    EXPECT_EQ(fps, expected);
    EXPECT_THROW(sc.collect_keys(local_target(), 19, 1), PreconditionError);
    EXPECT_THROW(sc.collect_keys(local_target(), 2, 0), PreconditionError);
}

TEST(ScannerCollect, FreshKeysAreDistinct) {
    ResponderTransport tr(policy({2}));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    std::set<std::string> fps;
    for (const auto& a : sc.collect_keys(local_target(), 2, 100)) fps.insert(a.observation->pubkey_fp);
    EXPECT_EQ(fps.size(), 100u);
}

TEST(ScannerCollect, ReuseWindowRepeatsKey) {
    auto p = policy({2});
    p.key_mode = sim::KeyMode::ReuseWindow;
    p.reuse_window_s = 60;
    cli::MockFleetSpec spec;
    cli::MockOperator op;
    op.policy = p;
    spec.operators.push_back(op);
    cli::MockFleet fleet(spec);
    fleet.start();
    scanner::UdpTransport udp;
    SeededRandom rng(1);
    auto cfg = fast_cfg();
    cfg.inter_probe_delay = std::chrono::milliseconds(500);
    scanner::Scanner sc(udp, rng, cfg);
    std::set<std::string> fps;
    std::set<std::string> nonces;
    for (const auto& a : sc.collect_keys(fleet.targets().front(), 2, 10)) {
        ASSERT_TRUE(a.observation.has_value());
        fps.insert(a.observation->pubkey_fp);
        nonces.insert(a.observation->nonce_fp);
    }
    EXPECT_EQ(fps.size(), 1u);
    EXPECT_EQ(nonces.size(), 10u);
}

TEST(ScannerClassify, RandomOctetsAlwaysClassified) {
    std::mt19937_64 gen(8);
    for (int i = 0; i < 5000; ++i) {
        Bytes raw(gen() % 300);
        for (auto& b : raw) b = static_cast<std::uint8_t>(gen());
        EXPECT_NO_THROW((void)scanner::classify_response(raw, 2));
    }
}

TEST(ScannerSafety, PublicTargetsNeedAuthorization) {
    ResponderTransport tr(policy({2}));
    SeededRandom rng(1);
    scanner::Scanner sc(tr, rng, fast_cfg());
    auto t = local_target();
    t.addresses = {"8.8.8.8"};
    EXPECT_THROW(sc.probe_group(t, 2), UnauthorizedTarget);
    EXPECT_EQ(tr.sent, 0);
    EXPECT_TRUE(scanner::is_local_address("10.1.2.3"));
    EXPECT_TRUE(scanner::is_local_address("172.31.0.1"));
    EXPECT_FALSE(scanner::is_local_address("172.32.0.1"));
    EXPECT_TRUE(scanner::is_local_address("::1"));
    EXPECT_FALSE(scanner::is_local_address("2001:db8::1"));
}

TEST(ScannerPacing, InterProbeDelayRespected) {
    cli::MockFleetSpec spec;
    cli::MockOperator op;
    op.policy = policy({2, 14});
    spec.operators.push_back(op);
    cli::MockFleet fleet(spec);
    fleet.start();
    scanner::UdpTransport udp;
    SeededRandom rng(1);
    auto cfg = fast_cfg();
    cfg.inter_probe_delay = std::chrono::milliseconds(120);
    scanner::Scanner sc(udp, rng, cfg);
    (void)sc.survey(fleet.targets().front(), {1, 2, 14});
    const auto times = fleet.request_times(0);
    ASSERT_EQ(times.size(), 3u);
    for (std::size_t i = 1; i < times.size(); ++i)
        EXPECT_GE(times[i] - times[i - 1], std::chrono::milliseconds(115));
}

// ---- over real UDP ----

TEST(MockFleetUdp, LoopClosureForEveryPolicyVariant) {
    cli::MockFleetSpec spec;
    auto add = [&spec](const std::string& mnc, sim::EpdgPolicy p, bool nat_t = false) {
        cli::MockOperator op;
        op.plmn = discovery::PlmnId("001", mnc);
        op.policy = std::move(p);
        op.nat_t = nat_t;
        spec.operators.push_back(op);
    };
    add("01", policy({2, 14}));
    add("02", policy({2, 14, 18}, sim::Preference::DemandStrongest));
    auto down = policy({1, 2}, sim::Preference::DemandSpecific);
    down.demanded_group = 1;
    add("03", down);
    add("04", policy({19, 20}));
    auto drop = policy({19});
    drop.unsupported_action = sim::UnsupportedAction::Drop;
    add("05", drop);
    add("06", policy({2, 14}), true);

    cli::MockFleet fleet(spec);
    fleet.start();
    const auto targets = fleet.targets();
    ASSERT_EQ(targets.size(), 6u);

    scanner::UdpTransport udp;
    SeededRandom rng(1);
    auto cfg = fast_cfg();
    cfg.retries = 0;
    scanner::Scanner sc(udp, rng, cfg);
    EXPECT_EQ(sc.weak_preference_test(targets[0]).kind, ToleranceResult::Kind::Tolerated);
    EXPECT_EQ(sc.weak_preference_test(targets[1]), (ToleranceResult{ToleranceResult::Kind::UpgradeRequested, 18, {}}));
    EXPECT_EQ(sc.weak_preference_test(targets[2]), (ToleranceResult{ToleranceResult::Kind::DowngradeIndicated, 1, {}}));
    EXPECT_EQ(sc.weak_preference_test(targets[3]).kind, ToleranceResult::Kind::Error);
    EXPECT_TRUE(std::holds_alternative<oc::Ignored>(sc.probe_group(targets[4], 2)));

    auto nat_cfg = cfg;
    nat_cfg.nat_t = true;
    scanner::Scanner nat(udp, rng, nat_cfg);
    EXPECT_TRUE(std::holds_alternative<oc::Accepted>(nat.probe_group(targets[5], 14)));
    // a plain request to a NAT-T listener lacks the marker and is dropped
    EXPECT_TRUE(std::holds_alternative<oc::Ignored>(sc.probe_group(targets[5], 14)));
    fleet.stop();
}

TEST(MockFleetUdp, ClosedPortIsTransportFailure) {
    cli::MockFleetSpec spec;
    cli::MockOperator op;
    op.policy = policy({2});
    op.offline = true;
    spec.operators.push_back(op);
    cli::MockFleet fleet(spec);
    fleet.start();
    scanner::UdpTransport udp;
    SeededRandom rng(1);
    scanner::Scanner sc(udp, rng, fast_cfg());
    EXPECT_THROW(sc.weak_preference_test(fleet.targets().front()), TransportFailure);
    EXPECT_TRUE(std::holds_alternative<oc::TransportError>(sc.probe_group(fleet.targets().front(), 2)));
}

TEST(MockFleetUdp, SpecValidation) {
    cli::MockFleetSpec spec;
    cli::MockOperator a;
    a.policy = policy({2});
    a.listen_port = 40000;
    spec.operators = {a, a};
    EXPECT_THROW(spec.validate(), InvariantViolation);
    spec.operators = {a};
    spec.shared_key_pool = cli::SharedKeyPool{{dh::BigInt(5)}, {discovery::PlmnId("999", "99")}, true};
    EXPECT_THROW(spec.validate(), InvariantViolation);
    spec.shared_key_pool = cli::SharedKeyPool{{}, {a.plmn}, true};
    EXPECT_THROW(spec.validate(), InvariantViolation);
}

TEST(MockFleetUdp, RefusesPublicBind) {
    cli::MockFleetSpec spec;
    cli::MockOperator a;
    a.policy = policy({2});
    a.listen_address = "8.8.8.8";
    spec.operators = {a};
    cli::MockFleet fleet(spec);
    EXPECT_THROW(fleet.start(), UnauthorizedTarget);
}

TEST(MockFleetUdp, AddressInUse) {
    cli::MockFleetSpec spec;
    cli::MockOperator a;
    a.policy = policy({2});
    spec.operators = {a};
    cli::MockFleet first(spec);
    first.start();
    spec.operators[0].listen_port = first.targets().front().port;
    cli::MockFleet second(spec);
    EXPECT_THROW(second.start(), AddressInUse);
}

TEST(MockFleetUdp, SharedPoolFoldedIntoPolicies) {
    const auto spec = cli::fleet_from_json(nlohmann::json::parse(R"({
        "operators": [{"plmn": "001-01", "policy": {"supported_groups": [2]}},
                      {"plmn": "001-02", "policy": {"supported_groups": [2]}}],
        "shared_key_pool": {"exponents": ["0a", "0b"], "operators": ["001-02"]}})"));
    const auto ops = spec.effective_operators();
    EXPECT_EQ(ops[0].policy.key_mode, sim::KeyMode::FreshPerHandshake);
    EXPECT_EQ(ops[1].policy.key_mode, sim::KeyMode::StaticPool);
    EXPECT_EQ(ops[1].policy.static_pool.size(), 2u);
}

}  // namespace
