#include "epdg/audit/config_audit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "epdg/common/errors.hpp"
#include "epdg/discovery/discovery.hpp"

namespace epdg::audit {

namespace {

using NameTable = std::vector<std::pair<std::uint16_t, const char*>>;

const NameTable kEncryption{{1, "DES_IV64"}, {2, "DES"},      {3, "3DES"},        {4, "RC5"},
                            {5, "IDEA"},     {6, "CAST"},     {7, "BLOWFISH"},    {8, "3IDEA"},
                            {9, "DES_IV32"}, {11, "NULL"},    {12, "AES_CBC"},    {13, "AES_CTR"},
                            {14, "AES_CCM_8"}, {15, "AES_CCM_12"}, {16, "AES_CCM_16"}, {18, "AES_GCM_8"},
                            {19, "AES_GCM_12"}, {20, "AES_GCM_16"}, {28, "CHACHA20_POLY1305"}};
const NameTable kPrf{{1, "HMAC_MD5"},      {2, "HMAC_SHA1"},     {3, "HMAC_TIGER"},    {4, "AES128_XCBC"},
                     {5, "HMAC_SHA2_256"}, {6, "HMAC_SHA2_384"}, {7, "HMAC_SHA2_512"}, {8, "AES128_CMAC"}};
const NameTable kIntegrity{{0, "NONE"},           {1, "HMAC_MD5_96"},        {2, "HMAC_SHA1_96"},
                           {3, "DES_MAC"},        {4, "KPDK_MD5"},           {5, "AES_XCBC_96"},
                           {6, "HMAC_MD5_128"},   {7, "HMAC_SHA1_160"},      {8, "AES_CMAC_96"},
                           {9, "AES_128_GMAC"},   {10, "AES_192_GMAC"},      {11, "AES_256_GMAC"},
                           {12, "HMAC_SHA2_256_128"}, {13, "HMAC_SHA2_384_192"}, {14, "HMAC_SHA2_512_256"}};

const NameTable& table(Category c) {
    switch (c) {
        case Category::Encryption: return kEncryption;
        case Category::Prf: return kPrf;
        case Category::Integrity: return kIntegrity;
        case Category::Ke: break;
    }
    static const NameTable empty;
    return empty;
}

std::string normalize(std::string s) {
    for (auto& ch : s) {
        if (ch == ' ' || ch == '-') ch = '_';
        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    return s;
}

bool numeric(const std::string& s) {
    return !s.empty() && s.size() <= 5 && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

template <typename T>
std::vector<T> dedup(const std::vector<T>& in) {
    std::vector<T> out;
    for (const auto& v : in) {
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

std::uint16_t id_from_json(Category c, const nlohmann::json& v) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0 && v.get<std::int64_t>() <= 0xffff) return v.get<std::uint16_t>();
    if (v.is_string()) return algorithm_id(c, v.get<std::string>());
    throw FormatError("algorithm must be a name or id");
}

Cipher cipher_from_json(const nlohmann::json& v) {
    Cipher c;
    if (v.is_object()) {
        c.id = id_from_json(Category::Encryption, v.at("algorithm"));
        if (v.contains("key_bits")) c.key_bits = v["key_bits"].get<std::uint16_t>();
        return c;
    }
    if (v.is_string()) {
        // "AES_CBC-128" form
        std::string s = v.get<std::string>();
        const auto dash = s.rfind('-');
        if (dash != std::string::npos && numeric(s.substr(dash + 1))) {
            c.key_bits = static_cast<std::uint16_t>(std::stoul(s.substr(dash + 1)));
            s = s.substr(0, dash);
        }
        c.id = algorithm_id(Category::Encryption, s);
        return c;
    }
    c.id = id_from_json(Category::Encryption, v);
    return c;
}

}  // namespace

std::string to_string(Category c) {
    switch (c) {
        case Category::Encryption: return "encryption";
        case Category::Prf: return "prf";
        case Category::Integrity: return "integrity";
        case Category::Ke: return "ke";
    }
    return "?";
}

Category category_from_string(const std::string& s) {
    if (s == "encryption") return Category::Encryption;
    if (s == "prf") return Category::Prf;
    if (s == "integrity") return Category::Integrity;
    if (s == "ke") return Category::Ke;
    throw FormatError("unknown category '" + s + "'");
}

std::uint16_t algorithm_id(Category c, const std::string& name) {
    const std::string n = normalize(name);
    if (numeric(n)) return static_cast<std::uint16_t>(std::stoul(n));
    if (c == Category::Ke) {
        if (n.rfind("DH", 0) == 0 && numeric(n.substr(2))) return static_cast<std::uint16_t>(std::stoul(n.substr(2)));
        throw FormatError("unknown key exchange group '" + name + "'");
    }
    for (const auto& [id, label] : table(c)) {
        if (n == label) return id;
    }
    throw FormatError("unknown " + to_string(c) + " algorithm '" + name + "'");
}

std::string algorithm_name(Category c, std::uint16_t id) {
    if (c == Category::Ke) return "DH" + std::to_string(id);
    for (const auto& [tid, label] : table(c)) {
        if (tid == id) return label;
    }
    return std::to_string(id);
}

void ConfigRecord::validate() const {
    if (!dh_groups && !encryption && !integrity && !prf && !rekey_soft_s && !rekey_hard_s)
        throw InvariantViolation("config record has no fields");
}

ConfigRecord record_from_json(const nlohmann::json& j) {
    try {
        ConfigRecord r;
        r.vendor = j.at("vendor").get<std::string>();
        std::transform(r.vendor.begin(), r.vendor.end(), r.vendor.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        r.op = j.value("operator", std::string("default"));
        if (r.op != "default") r.op = discovery::PlmnId::parse(r.op).str();
        if (j.contains("dh_groups")) {
            std::vector<std::uint16_t> g;
            for (const auto& v : j["dh_groups"]) g.push_back(id_from_json(Category::Ke, v));
            r.dh_groups = dedup(g);
        }
        if (j.contains("encryption")) {
            std::vector<Cipher> c;
            for (const auto& v : j["encryption"]) c.push_back(cipher_from_json(v));
            r.encryption = dedup(c);
        }
        if (j.contains("integrity")) {
            std::vector<std::uint16_t> v;
            for (const auto& x : j["integrity"]) v.push_back(id_from_json(Category::Integrity, x));
            r.integrity = dedup(v);
        }
        if (j.contains("prf")) {
            std::vector<std::uint16_t> v;
            for (const auto& x : j["prf"]) v.push_back(id_from_json(Category::Prf, x));
            r.prf = dedup(v);
        }
        if (j.contains("rekey_soft_s")) r.rekey_soft_s = j["rekey_soft_s"].get<double>();
        if (j.contains("rekey_hard_s")) r.rekey_hard_s = j["rekey_hard_s"].get<double>();
        r.validate();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad config record: ") + e.what());
    }
}

nlohmann::json to_json(const ConfigRecord& r) {
    nlohmann::json j{{"vendor", r.vendor}, {"operator", r.op}};
    if (r.dh_groups) j["dh_groups"] = *r.dh_groups;
    if (r.encryption) {
        auto arr = nlohmann::json::array();
        for (const auto& c : *r.encryption) {
            nlohmann::json e{{"algorithm", algorithm_name(Category::Encryption, c.id)}};
            if (c.key_bits) e["key_bits"] = *c.key_bits;
            arr.push_back(e);
        }
        j["encryption"] = arr;
    }
    auto names = [](Category c, const std::vector<std::uint16_t>& ids) {
        auto arr = nlohmann::json::array();
        for (auto id : ids) arr.push_back(algorithm_name(c, id));
        return arr;
    };
    if (r.integrity) j["integrity"] = names(Category::Integrity, *r.integrity);
    if (r.prf) j["prf"] = names(Category::Prf, *r.prf);
    if (r.prf_derived) j["prf"] = "derived";
    if (r.rekey_soft_s) j["rekey_soft_s"] = *r.rekey_soft_s;
    if (r.rekey_hard_s) j["rekey_hard_s"] = *r.rekey_hard_s;
    if (!r.inherited.empty()) j["inherited"] = r.inherited;
    return j;
}

RuleSet RuleSet::from_json(const nlohmann::json& j) {
    try {
        RuleSet rs;
        for (const auto& r : j.at("rules")) {
            rs.rules_.push_back({category_from_string(r.at("category").get<std::string>()),
                                 r.at("id").get<std::uint16_t>(), r.at("name").get<std::string>()});
        }
        return rs;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad rule set: ") + e.what());
    }
}

RuleSet RuleSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open rule set " + path);
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("rule set is not JSON: ") + e.what());
    }
}

const Rule* RuleSet::find(Category c, std::uint16_t id) const {
    for (const auto& r : rules_) {
        if (r.category == c && r.id == id) return &r;
    }
    return nullptr;
}

VendorDefaults VendorDefaults::from_json(const nlohmann::json& j) {
    VendorDefaults d;
    try {
        for (const auto& rec : j.at("defaults")) {
            auto r = record_from_json(rec);
            d.defaults_[r.vendor] = std::move(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad vendor defaults: ") + e.what());
    }
    return d;
}

VendorDefaults VendorDefaults::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open vendor defaults " + path);
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("vendor defaults are not JSON: ") + e.what());
    }
}

const ConfigRecord* VendorDefaults::find(const std::string& vendor) const {
    auto it = defaults_.find(vendor);
    return it == defaults_.end() ? nullptr : &it->second;
}

ConfigRecord VendorDefaults::resolve(const ConfigRecord& r) const {
    ConfigRecord out = r;
    if (const auto* d = find(r.vendor)) {
        auto inherit = [&out](auto& field, const auto& from, const char* name) {
            if (!field && from) {
                field = from;
                out.inherited.emplace_back(name);
            }
        };
        inherit(out.dh_groups, d->dh_groups, "dh_groups");
        inherit(out.encryption, d->encryption, "encryption");
        inherit(out.integrity, d->integrity, "integrity");
        inherit(out.prf, d->prf, "prf");
        inherit(out.rekey_soft_s, d->rekey_soft_s, "rekey_soft_s");
        inherit(out.rekey_hard_s, d->rekey_hard_s, "rekey_hard_s");
    }
    out.prf_derived = !out.prf.has_value() && out.integrity.has_value();
    return out;
}

bool DeprecationReport::has(Category c) const {
    return std::any_of(flags.begin(), flags.end(), [c](const Flag& f) { return f.category == c; });
}

DeprecationReport audit(const ConfigRecord& record, const RuleSet& rules) {
    DeprecationReport rep;
    rep.record = record;
    std::set<std::pair<int, std::uint16_t>> flagged;

    auto check = [&](Category c, const std::vector<std::uint16_t>& ids) {
        if (ids.empty()) return;
        std::size_t bad = 0;
        for (auto id : ids) {
            if (const auto* rule = rules.find(c, id)) {
                ++bad;
                if (flagged.emplace(static_cast<int>(c), id).second) rep.flags.push_back({c, id, rule->name});
            }
        }
        rep.deprecated_share_by_category[c] = static_cast<double>(bad) / static_cast<double>(ids.size());
    };

    if (record.encryption) {
        std::vector<std::uint16_t> ids;
        for (const auto& c : *record.encryption) ids.push_back(c.id);
        check(Category::Encryption, ids);
    }
    if (record.prf) check(Category::Prf, *record.prf);
    if (record.integrity) check(Category::Integrity, *record.integrity);
    if (record.dh_groups) check(Category::Ke, *record.dh_groups);

    std::sort(rep.flags.begin(), rep.flags.end(), [](const Flag& a, const Flag& b) {
        return std::make_pair(static_cast<int>(a.category), a.id) < std::make_pair(static_cast<int>(b.category), b.id);
    });
    return rep;
}

AuditSummary aggregate(const std::vector<DeprecationReport>& reports) {
    AuditSummary s;
    std::map<std::string, std::map<Category, std::size_t>> hits;
    std::vector<double> timers;
    for (const auto& r : reports) {
        auto& v = s.per_vendor[r.record.vendor];
        ++v.records;
        for (auto c : {Category::Encryption, Category::Prf, Category::Integrity, Category::Ke}) {
            if (r.has(c)) ++hits[r.record.vendor][c];
        }
        if (r.record.rekey_hard_s) {
            timers.push_back(*r.record.rekey_hard_s);
            if (*r.record.rekey_hard_s > 7 * 86400.0) s.outliers.push_back(r.record.vendor + "/" + r.record.op);
        }
    }
    for (auto& [vendor, v] : s.per_vendor) {
        for (auto c : {Category::Encryption, Category::Prf, Category::Integrity, Category::Ke}) {
            v.deprecated_share[c] = static_cast<double>(hits[vendor][c]) / static_cast<double>(v.records);
        }
    }
    if (!timers.empty()) {
        const double inf = std::numeric_limits<double>::infinity();
        s.rekey_hard = {{"<=1h", 3600, 0, 0},
                        {"<=4h", 4 * 3600.0, 0, 0},
                        {"<=1d", 86400, 0, 0},
                        {"<=1w", 7 * 86400.0, 0, 0},
                        {">1w", inf, 0, 0}};
        for (double t : timers) {
            for (auto& b : s.rekey_hard) {
                if (t <= b.upper_s) {
                    ++b.count;
                    break;
                }
            }
        }
        std::size_t cum = 0;
        for (auto& b : s.rekey_hard) {
            cum += b.count;
            b.cumulative = static_cast<double>(cum) / static_cast<double>(timers.size());
        }
    }
    return s;
}

nlohmann::json to_json(const DeprecationReport& r) {
    auto flags = nlohmann::json::array();
    for (const auto& f : r.flags) flags.push_back({{"category", to_string(f.category)}, {"id", f.id}, {"name", f.name}});
    nlohmann::json shares = nlohmann::json::object();
    for (const auto& [c, v] : r.deprecated_share_by_category) shares[to_string(c)] = v;
    return {{"schema_version", 1},
            {"type", "deprecation_report"},
            {"record", to_json(r.record)},
            {"flags", flags},
            {"deprecated_share_by_category", shares}};
}

nlohmann::json to_json(const AuditSummary& s) {
    nlohmann::json vendors = nlohmann::json::object();
    for (const auto& [name, v] : s.per_vendor) {
        nlohmann::json shares = nlohmann::json::object();
        for (const auto& [c, x] : v.deprecated_share) shares[to_string(c)] = x;
        vendors[name] = {{"records", v.records}, {"deprecated_share", shares}};
    }
    auto buckets = nlohmann::json::array();
    for (const auto& b : s.rekey_hard) {
        buckets.push_back({{"label", b.label},
                           {"upper_s", std::isinf(b.upper_s) ? nlohmann::json(nullptr) : nlohmann::json(b.upper_s)},
                           {"count", b.count},
                           {"cumulative", b.cumulative}});
    }
    return {{"schema_version", 1},
            {"type", "audit_summary"},
            {"per_vendor", vendors},
            {"rekey_hard_buckets", buckets},
            {"outliers", s.outliers}};
}

}  // namespace epdg::audit
