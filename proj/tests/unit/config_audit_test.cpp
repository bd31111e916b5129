#include <gtest/gtest.h>

#include "epdg/audit/config_audit.hpp"
#include "epdg/cli/commands.hpp"
#include "epdg/common/errors.hpp"

namespace {

using namespace epdg::audit;
using nlohmann::json;

const RuleSet& rules() {
    static const RuleSet r = RuleSet::load(epdg::cli::data_file("deprecated_algorithms.json"));
    return r;
}

const VendorDefaults& defaults() {
    static const VendorDefaults d = VendorDefaults::load(epdg::cli::data_file("vendor_defaults.json"));
    return d;
}

std::vector<std::uint16_t> ids(const DeprecationReport& r, Category c) {
    std::vector<std::uint16_t> out;
    for (const auto& f : r.flags)
        if (f.category == c) out.push_back(f.id);
    return out;
}

TEST(ConfigAudit, RuleSetLoadsEveryRow) {
    EXPECT_EQ(rules().rules().size(), 19u);
    ASSERT_NE(rules().find(Category::Ke, 22), nullptr);
    EXPECT_EQ(rules().find(Category::Ke, 14), nullptr);
    EXPECT_EQ(rules().find(Category::Prf, 3)->name, "HMAC Tiger");
}

TEST(ConfigAudit, QualcommDefaultFlagsDh2AndDh5) {
    const auto* q = defaults().find("qualcomm");
    ASSERT_NE(q, nullptr);
    const auto r = audit(*q, rules());
    EXPECT_EQ(ids(r, Category::Ke), (std::vector<std::uint16_t>{2, 5}));
    EXPECT_EQ(ids(r, Category::Encryption), std::vector<std::uint16_t>{});
    EXPECT_EQ(ids(r, Category::Integrity), (std::vector<std::uint16_t>{1}));
    EXPECT_NEAR(r.deprecated_share_by_category.at(Category::Ke), 2.0 / 3.0, 1e-12);
}

TEST(ConfigAudit, AesOnlyStrongGroupIsClean) {
    const auto r = audit(record_from_json(json::parse(
                             R"({"vendor": "x", "dh_groups": [14], "encryption": ["AES_CBC-128"]})")),
                         rules());
    EXPECT_TRUE(r.flags.empty());
}

TEST(ConfigAudit, DesAndMd5PrfGiveTwoFlags) {
    const auto r = audit(record_from_json(json::parse(
                             R"({"vendor": "x", "encryption": ["DES", "AES_CBC-256"], "prf": ["HMAC_MD5", "HMAC_SHA2_256"]})")),
                         rules());
    ASSERT_EQ(r.flags.size(), 2u);
    EXPECT_EQ(r.flags[0].category, Category::Encryption);
    EXPECT_EQ(r.flags[0].id, 2);
    EXPECT_EQ(r.flags[1].category, Category::Prf);
    EXPECT_EQ(r.flags[1].id, 1);
}

TEST(ConfigAudit, SamsungPrfIsDerivedNotFlagged) {
    const auto resolved = defaults().resolve(record_from_json(json::parse(R"({"vendor": "Samsung", "operator": "232-05", "rekey_hard_s": 86400})")));
    EXPECT_TRUE(resolved.prf_derived);
    EXPECT_FALSE(resolved.prf.has_value());
    const auto r = audit(resolved, rules());
    EXPECT_FALSE(r.has(Category::Prf));
    EXPECT_EQ(ids(r, Category::Ke), (std::vector<std::uint16_t>{2}));
}

TEST(ConfigAudit, InheritsMissingFields) {
    const auto resolved =
        defaults().resolve(record_from_json(json::parse(R"({"vendor": "pixel", "operator": "262-01", "dh_groups": [14]})")));
    EXPECT_EQ(*resolved.dh_groups, (std::vector<std::uint16_t>{14}));
    EXPECT_EQ(resolved.rekey_hard_s, 14400);
    EXPECT_FALSE(resolved.inherited.empty());
}

TEST(ConfigAudit, FieldOrderDoesNotMatter) {
    const auto a = audit(record_from_json(json::parse(R"({"vendor": "x", "dh_groups": [5, 14, 2]})")), rules());
    const auto b = audit(record_from_json(json::parse(R"({"vendor": "x", "dh_groups": [2, 2, 14, 5]})")), rules());
    EXPECT_EQ(a.flags, b.flags);
}

TEST(ConfigAudit, UnknownAlgorithmNameRejected) {
    EXPECT_THROW(record_from_json(json::parse(R"({"vendor": "x", "encryption": ["ROT13"]})")), epdg::FormatError);
}

TEST(ConfigAggregate, EightyThreePercent) {
    std::vector<DeprecationReport> reports;
    for (int i = 0; i < 100; ++i) {
        json j{{"vendor", "oppo"}, {"operator", "232-" + std::to_string(10 + i)}};
        j["dh_groups"] = i < 83 ? std::vector<int>{2, 14} : std::vector<int>{14, 19};
        reports.push_back(audit(record_from_json(j), rules()));
    }
    const auto s = aggregate(reports);
    EXPECT_DOUBLE_EQ(s.per_vendor.at("oppo").deprecated_share.at(Category::Ke), 0.83);
    EXPECT_EQ(s.per_vendor.at("oppo").records, 100u);
}

TEST(ConfigAggregate, EmptyAndOutliers) {
    EXPECT_TRUE(aggregate({}).empty());
    std::vector<DeprecationReport> reports;
    reports.push_back(audit(record_from_json(json::parse(R"({"vendor": "v", "operator": "232-01", "rekey_hard_s": 31536000})")), rules()));
    reports.push_back(audit(record_from_json(json::parse(R"({"vendor": "v", "operator": "232-02", "rekey_hard_s": 3600})")), rules()));
    const auto s = aggregate(reports);
    EXPECT_EQ(s.outliers, std::vector<std::string>{"v/232-01"});
    ASSERT_FALSE(s.rekey_hard.empty());
    EXPECT_EQ(s.rekey_hard.back().count, 1u);
    EXPECT_DOUBLE_EQ(s.rekey_hard.front().cumulative, 0.5);
}

}  // namespace
