// config_audit.hpp
//
// Classifies normalized IKEv2 client configuration records against the
// deprecated-parameter rule set and aggregates shares per vendor.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace epdg::audit {

enum class Category { Encryption, Prf, Integrity, Ke };
std::string to_string(Category c);
Category category_from_string(const std::string& s);  // throws FormatError

struct Cipher {
    std::uint16_t id = 0;
    std::optional<std::uint16_t> key_bits;
    bool operator==(const Cipher&) const = default;
    auto operator<=>(const Cipher&) const = default;
};

struct ConfigRecord {
    std::string vendor;
    std::string op = "default";  // PLMN string or "default"
    std::optional<std::vector<std::uint16_t>> dh_groups;
    std::optional<std::vector<Cipher>> encryption;
    std::optional<std::vector<std::uint16_t>> integrity;
    std::optional<std::vector<std::uint16_t>> prf;
    std::optional<double> rekey_soft_s;
    std::optional<double> rekey_hard_s;
    // fields filled from the vendor default
    std::vector<std::string> inherited;
    // PRF absent everywhere; derived from the integrity algorithm
    bool prf_derived = false;

    // throws InvariantViolation: no field present
    void validate() const;
};

// IANA transform names, e.g. "AES_CBC", "HMAC_SHA1_96", "HMAC_MD5"; numeric
// strings are accepted as raw ids. Throws FormatError for unknown names.
std::uint16_t algorithm_id(Category c, const std::string& name);
std::string algorithm_name(Category c, std::uint16_t id);

// lists are deduplicated, preserving first occurrence
ConfigRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConfigRecord& r);

struct Rule {
    Category category;
    std::uint16_t id = 0;
    std::string name;
};

class RuleSet {
public:
    static RuleSet from_json(const nlohmann::json& j);
    static RuleSet load(const std::string& path);
    const Rule* find(Category c, std::uint16_t id) const;
    const std::vector<Rule>& rules() const { return rules_; }

private:
    std::vector<Rule> rules_;
};

class VendorDefaults {
public:
    static VendorDefaults from_json(const nlohmann::json& j);
    static VendorDefaults load(const std::string& path);
    const ConfigRecord* find(const std::string& vendor) const;
    // missing fields inherit the vendor default; PRF absent after inheritance
    // is marked derived
    ConfigRecord resolve(const ConfigRecord& r) const;

private:
    std::map<std::string, ConfigRecord> defaults_;
};

struct Flag {
    Category category;
    std::uint16_t id = 0;
    std::string name;
    bool operator==(const Flag& o) const { return category == o.category && id == o.id; }
};

struct DeprecationReport {
    ConfigRecord record;
    std::vector<Flag> flags;  // ordered by (category, id)
    // deprecated entries / entries present, per category with entries
    std::map<Category, double> deprecated_share_by_category;

    bool has(Category c) const;
};

DeprecationReport audit(const ConfigRecord& record, const RuleSet& rules);

struct VendorSummary {
    std::size_t records = 0;
    // fraction of records with at least one deprecated entry in the category
    std::map<Category, double> deprecated_share;
};

struct RekeyBucket {
    std::string label;
    double upper_s = 0;  // inclusive; infinity for the outlier bucket
    std::size_t count = 0;
    double cumulative = 0;  // fraction of records with a hard timer <= upper
};

struct AuditSummary {
    std::map<std::string, VendorSummary> per_vendor;
    std::vector<RekeyBucket> rekey_hard;  // empty when no record has a timer
    std::vector<std::string> outliers;    // "<vendor>/<operator>" above one week
    bool empty() const { return per_vendor.empty(); }
};

AuditSummary aggregate(const std::vector<DeprecationReport>& reports);

nlohmann::json to_json(const DeprecationReport& r);
nlohmann::json to_json(const AuditSummary& s);

}  // namespace epdg::audit
