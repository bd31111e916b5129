// discovery.hpp
//
// ePDG endpoint discovery: PLMN identifiers, the 3GPP ePDG FQDN and name
// resolution through an injected resolver.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "epdg/common/time.hpp"

namespace epdg::discovery {

// Mobile Country Code + Mobile Network Code
class PlmnId {
public:
    // throws InvalidPlmn: mcc must be 3 digits, mnc 2 or 3 digits
    PlmnId(std::string mcc, std::string mnc);

    // "232-05"
    static PlmnId parse(std::string_view text);

    const std::string& mcc() const { return mcc_; }
    const std::string& mnc() const { return mnc_; }
    std::string mnc3() const;  // zero-padded to 3 digits
    std::string str() const;   // "232-05"

    auto operator<=>(const PlmnId&) const = default;

private:
    std::string mcc_;
    std::string mnc_;
};

std::string epdg_fqdn(const PlmnId& plmn);

// Inclusive decimal code range. The digit count of `low` and `high` fixes the
// width of generated codes; a mixed range such as "00".."999" yields the
// two-digit codes up to 99 followed by the three-digit codes from 100.
struct CodeRange {
    std::string low;
    std::string high;
};

struct PlmnRange {
    CodeRange mcc;
    CodeRange mnc;
};

// "232" or "200-799"
CodeRange parse_code_range(std::string_view text);

// Cartesian expansion, deduplicated by FQDN (two-digit "05" and three-digit
// "005" share one name), ordered by (mcc, mnc).
std::vector<PlmnId> enumerate_plmns(const std::vector<PlmnRange>& ranges);

enum class RecordType { A, AAAA };

class Resolver {
public:
    virtual ~Resolver() = default;
    // Addresses for the name; empty when the name or record type does not
    // exist. Throws ResolverUnavailable on transport failure.
    virtual std::vector<std::string> lookup(const std::string& fqdn, RecordType type) = 0;
};

// libresolv; queries the system-configured servers or a given upstream
class SystemResolver final : public Resolver {
public:
    struct Options {
        std::optional<std::string> upstream;  // IPv4 address of the upstream server
        int timeout_s = 5;
        int attempts = 2;
    };

    SystemResolver();
    explicit SystemResolver(Options opts);
    std::vector<std::string> lookup(const std::string& fqdn, RecordType type) override;

private:
    Options opts_;
};

// Canned answers. JSON form:
//   {"records": {"<fqdn>": {"a": [...], "aaaa": [...]} | "unavailable"}}
// Names absent from the map are NXDOMAIN.
class StubResolver final : public Resolver {
public:
    struct Entry {
        std::vector<std::string> a;
        std::vector<std::string> aaaa;
        bool unavailable = false;
    };

    StubResolver() = default;
    explicit StubResolver(std::map<std::string, Entry> records) : records_(std::move(records)) {}
    static StubResolver from_json(const nlohmann::json& doc);

    void add(const std::string& fqdn, Entry e) { records_[fqdn] = std::move(e); }
    std::vector<std::string> lookup(const std::string& fqdn, RecordType type) override;
    std::size_t queries() const { return queries_; }

private:
    std::map<std::string, Entry> records_;
    std::size_t queries_ = 0;
};

struct EpdgTarget {
    PlmnId plmn{"001", "01"};
    std::string fqdn;
    std::vector<std::string> addresses;  // v4 ascending, then v6 ascending
    SystemTime resolved_at{};
    std::uint16_t port = 500;
};

// Queries A and AAAA. An empty address list means no ePDG is published.
EpdgTarget resolve(const PlmnId& plmn, Resolver& resolver, const Clock& clock = {});

// canonical textual form; throws FormatError for non-IP input
std::string normalize_address(const std::string& addr);
bool is_ipv6(const std::string& addr);
// v4 before v6, each ascending by address octets; duplicates removed
std::vector<std::string> order_addresses(std::vector<std::string> addrs);

nlohmann::json to_json(const EpdgTarget& t);
EpdgTarget target_from_json(const nlohmann::json& j);

}  // namespace epdg::discovery
