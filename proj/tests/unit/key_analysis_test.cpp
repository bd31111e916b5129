#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "epdg/analysis/key_analysis.hpp"
#include "epdg/analysis/observation.hpp"
#include "epdg/cli/commands.hpp"
#include "epdg/common/bytes.hpp"
#include "epdg/common/errors.hpp"

namespace {

using namespace epdg;
using analysis::KeyObservation;

std::string fp(int i) { return sha256_hex(Bytes{static_cast<std::uint8_t>(i), 0x42}); }

KeyObservation obs(const std::string& plmn, std::uint16_t group, const std::string& pub, const std::string& nonce) {
    KeyObservation o;
    o.op = discovery::PlmnId::parse(plmn);
    o.endpoint = "127.0.0.1:500";
    o.group = group;
    o.pubkey_fp = pub;
    o.nonce_fp = nonce;
    o.observed_at = parse_iso8601("2024-02-13T09:30:00.000Z");
    return o;
}

// probability that all d items are seen after n uniform draws, by iterating
// the occupancy Markov chain
double coverage_markov(int d, int n) {
    std::vector<double> p(d + 1, 0.0);
    p[0] = 1.0;
    for (int t = 0; t < n; ++t) {
        std::vector<double> q(d + 1, 0.0);
        for (int k = 0; k <= d; ++k) {
            q[k] += p[k] * k / d;
            if (k < d) q[k + 1] += p[k] * (d - k) / static_cast<double>(d);
        }
        p = q;
    }
    return p[d];
}

TEST(Census, StaticPoolSharedAcrossOperators) {
    std::vector<KeyObservation> all;
    for (int op = 1; op <= 3; ++op)
        for (int i = 0; i < 30; ++i)
            all.push_back(obs("232-0" + std::to_string(op), 2, fp(i % 10), fp(1000 + op * 100 + i)));
    const auto r = analysis::census(all);
    EXPECT_EQ(r.scope, analysis::ReuseReport::Scope::Inter);
    EXPECT_EQ(r.distinct_keys, 10u);
    EXPECT_EQ(r.total_obs, 90u);
    ASSERT_EQ(r.sharing_matrix.size(), 10u);
    for (const auto& [k, ops] : r.sharing_matrix) EXPECT_EQ(ops.size(), 3u);
    EXPECT_EQ(r.nonce_reuse_events, 0u);
    ASSERT_EQ(r.per_operator.size(), 3u);
    EXPECT_EQ(r.per_operator[0].distinct_keys, 10u);
}

TEST(Census, ThirteenOperatorsOnePool) {
    std::mt19937_64 gen(5);
    std::vector<KeyObservation> all;
    for (int op = 1; op <= 13; ++op)
        for (int i = 0; i < 40; ++i)
            all.push_back(obs("502-" + std::to_string(100 + op), 2, fp((i + op) % 10),
                              fp(10000 + op * 100 + i)));
    const auto r = analysis::census(all);
    ASSERT_EQ(r.sharing_matrix.size(), 10u);
    for (const auto& [k, ops] : r.sharing_matrix) EXPECT_EQ(ops.size(), 13u);
    std::shuffle(all.begin(), all.end(), gen);
    EXPECT_EQ(analysis::census(all), r);
}

TEST(Census, SingleNonceRepeat) {
    std::vector<KeyObservation> all{obs("232-01", 2, fp(1), fp(7)), obs("232-01", 2, fp(2), fp(7)),
                                    obs("232-01", 2, fp(3), fp(8))};
    EXPECT_EQ(analysis::census(all).nonce_reuse_events, 1u);
}

TEST(Census, FreshKeysGiveEmptyMatrix) {
    std::vector<KeyObservation> all;
    for (int i = 0; i < 20; ++i) all.push_back(obs(i % 2 ? "232-01" : "232-02", 14, fp(i), fp(500 + i)));
    const auto r = analysis::census(all);
    EXPECT_TRUE(r.sharing_matrix.empty());
    EXPECT_EQ(r.distinct_keys, 20u);
    EXPECT_EQ(r.total_obs, 20u);
}

TEST(Census, AliasesMergeOperatorsAndNonceReuseCounted) {
    std::vector<KeyObservation> all{obs("232-05", 2, fp(1), fp(9)), obs("232-10", 2, fp(1), fp(9)),
                                    obs("232-05", 2, fp(2), fp(9))};
    const auto merged = analysis::census(all, {{"232-05", "drei"}, {"232-10", "drei"}});
    EXPECT_EQ(merged.scope, analysis::ReuseReport::Scope::Intra);
    EXPECT_TRUE(merged.sharing_matrix.empty());
    EXPECT_EQ(merged.nonce_reuse_events, 2u);
    const auto split = analysis::census(all);
    EXPECT_EQ(split.sharing_matrix.size(), 1u);
}

TEST(Coverage, AgreesWithMarkovChain) {
    for (auto [d, n] : std::vector<std::pair<int, int>>{{1, 1}, {2, 3}, {5, 10}, {10, 30}, {10, 60}, {10, 500}, {40, 200}})
        EXPECT_NEAR(analysis::coverage_confidence(d, n), coverage_markov(d, n), 1e-9) << d << "," << n;
}

TEST(Coverage, MonteCarloWithinThreeSigma) {
    std::mt19937_64 gen(17);
    const int trials = 200000;
    for (auto [d, n] : std::vector<std::pair<int, int>>{{10, 25}, {10, 40}}) {
        std::uniform_int_distribution<int> draw(0, d - 1);
        int complete = 0;
        for (int t = 0; t < trials; ++t) {
            std::vector<bool> seen(d, false);
            int k = 0;
            for (int i = 0; i < n && k < d; ++i) {
                const int x = draw(gen);
                if (!seen[x]) {
                    seen[x] = true;
                    ++k;
                }
            }
            complete += (k == d);
        }
        const double p = analysis::coverage_confidence(d, n);
        const double sigma = std::sqrt(p * (1 - p) / trials);
        EXPECT_NEAR(static_cast<double>(complete) / trials, p, 3 * sigma + 1e-12) << d << "," << n;
    }
}

TEST(Coverage, ExactSmallCases) {
    EXPECT_DOUBLE_EQ(analysis::coverage_confidence(1, 1), 1.0);
    // 10! / 10^10
    EXPECT_NEAR(analysis::coverage_confidence(10, 10), 3628800.0 / 1e10, 1e-12);
}

TEST(Coverage, DomainChecks) {
    EXPECT_THROW(analysis::coverage_confidence(0, 5), DomainError);
    EXPECT_THROW(analysis::coverage_confidence(6, 5), DomainError);
    EXPECT_GT(analysis::coverage_confidence(10, 500), 0.9999);
}

TEST(Blacklist, ShippedFileHasFortyNineEntries) {
    const auto entries = analysis::load_blacklist(cli::data_file("static_key_blacklist.txt"));
    ASSERT_EQ(entries.size(), 49u);
    std::map<std::uint16_t, int> per_group;
    for (const auto& e : entries) ++per_group[e.group];
    EXPECT_EQ(per_group, (std::map<std::uint16_t, int>{{1, 10}, {2, 10}, {5, 10}, {14, 10}, {15, 9}}));
    EXPECT_EQ(entries.front().digest, "c91fbb17c38e95c3590c54838bab62808df808cce198c3ba24e830c8f3cc2fc7");
}

TEST(Blacklist, MalformedLinesReportLineNumber) {
    std::istringstream bad("# header\n2 c91fbb17c38e95c3590c54838bab62808df808cce198c3ba24e830c8f3cc2fc7\n2 nothex\n");
    try {
        analysis::parse_blacklist(bad);
        FAIL() << "expected MalformedBlacklist";
    } catch (const MalformedBlacklist& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    std::istringstream ecp("19 c91fbb17c38e95c3590c54838bab62808df808cce198c3ba24e830c8f3cc2fc7\n");
    EXPECT_THROW(analysis::parse_blacklist(ecp), MalformedBlacklist);
    std::istringstream upper("1 C91FBB17C38E95C3590C54838BAB62808DF808CCE198C3BA24E830C8F3CC2FC7\n");
    EXPECT_EQ(analysis::parse_blacklist(upper).front().digest,
              "c91fbb17c38e95c3590c54838bab62808df808cce198c3ba24e830c8f3cc2fc7");
}

TEST(Blacklist, SyntheticFixtureMatchesOnce) {
    const auto entries = analysis::load_blacklist(cli::data_file("static_key_blacklist.txt"));
    std::ifstream in(std::string(EPDG_TESTDATA_DIR) + "/blacklist_match.jsonl");
    std::vector<KeyObservation> all;
    std::string line;
    while (std::getline(in, line)) all.push_back(analysis::observation_from_json(nlohmann::json::parse(line)));
    ASSERT_GE(all.size(), 3u);
    const auto hits = analysis::match_blacklist(all, entries);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits.front().group, 2);
}

TEST(Blacklist, GroupMustMatch) {
    const std::vector<analysis::BlacklistEntry> bl{{1, fp(1), 1}};
    EXPECT_EQ(analysis::match_blacklist({obs("232-01", 2, fp(1), fp(2))}, bl).size(), 0u);
    EXPECT_EQ(analysis::match_blacklist({obs("232-01", 1, fp(1), fp(2))}, bl).size(), 1u);
    EXPECT_TRUE(analysis::match_blacklist({obs("232-01", 1, fp(1), fp(2))}, {}).empty());
}

TEST(CrossGroup, KnownExponentDetectsSharing) {
    const dh::BigInt a("123456789123456789123456789");
    const auto& g1 = dh::group_params(1);
    const auto& g14 = dh::group_params(14);
    auto fp_for = [](const dh::DhGroup& g, const dh::BigInt& e) {
        return dh::pubkey_fingerprint(dh::keypair_from_exponent(g, e).public_value, g);
    };
    const dh::BigInt b("987654321987654321");
    std::vector<KeyObservation> all{obs("232-01", 1, fp_for(g1, a), fp(1)), obs("232-01", 14, fp_for(g14, a), fp(2)),
                                    obs("232-02", 1, fp_for(g1, a), fp(3)), obs("232-02", 14, fp_for(g14, b), fp(4))};
    const auto r = analysis::cross_group_exposure(all, std::vector<dh::BigInt>{a, b});
    ASSERT_EQ(r.evidence.size(), 1u);
    EXPECT_EQ(r.evidence.front().op, "232-01");
    EXPECT_EQ(r.evidence.front().groups, (std::vector<std::uint16_t>{1, 14}));

    const auto blind = analysis::cross_group_exposure(all);
    EXPECT_FALSE(blind.known_exponents);
    EXPECT_EQ(blind.evidence.size(), 2u);
}

TEST(Observation, JsonRoundTripAndValidation) {
    const auto o = obs("232-05", 2, fp(1), fp(2));
    EXPECT_EQ(analysis::observation_from_json(analysis::to_json(o)), o);
    auto bad = o;
    bad.pubkey_fp = "xyz";
    EXPECT_THROW(bad.validate(), InvariantViolation);
}

}  // namespace
