// key_analysis.hpp
//
// Reuse analytics over KeyObservations: per-operator key census, static key
// sharing across operators, nonce reuse, blacklist matching and cross-group
// exponent exposure.

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "epdg/analysis/observation.hpp"
#include "epdg/dh/engine.hpp"

namespace epdg::analysis {

// PLMN string ("232-05") -> operator label; unmapped PLMNs are their own
// operator
using OperatorAliases = std::map<std::string, std::string>;

// {"aliases": {"232-05": "opA", "232-07": "opA"}}
OperatorAliases aliases_from_json(const nlohmann::json& j);

struct OperatorGroupCensus {
    std::string op;
    std::uint16_t group = 0;
    std::size_t distinct_keys = 0;
    std::size_t total_obs = 0;
    bool operator==(const OperatorGroupCensus&) const = default;
};

struct ReuseReport {
    enum class Scope { Intra, Inter };
    Scope scope = Scope::Intra;  // Inter when two or more operators are present
    std::set<std::uint16_t> groups;
    std::size_t distinct_keys = 0;  // distinct (group, fingerprint) pairs
    std::size_t total_obs = 0;
    // fingerprints seen at two or more operators
    std::map<std::string, std::set<std::string>> sharing_matrix;
    std::size_t nonce_reuse_events = 0;
    std::vector<OperatorGroupCensus> per_operator;  // sorted by (op, group)

    bool operator==(const ReuseReport&) const = default;
};

// permutation-invariant over the input
ReuseReport census(const std::vector<KeyObservation>& observations, const OperatorAliases& aliases = {});

// Probability that `draws` uniform draws from exactly `distinct_seen` keys
// show every key, by inclusion-exclusion. Throws DomainError unless
// draws >= distinct_seen >= 1.
double coverage_confidence(std::uint64_t distinct_seen, std::uint64_t draws);

struct BlacklistEntry {
    std::uint16_t group = 0;
    std::string digest;  // lowercase
    std::size_t line = 0;
    bool operator==(const BlacklistEntry& o) const { return group == o.group && digest == o.digest; }
};

// "<group> <sha256>" per line; '#' comments and blank lines skipped.
// Throws MalformedBlacklist with the 1-based line number.
std::vector<BlacklistEntry> parse_blacklist(std::istream& in);
std::vector<BlacklistEntry> load_blacklist(const std::string& path);

std::vector<KeyObservation> match_blacklist(const std::vector<KeyObservation>& observations,
                                            const std::vector<BlacklistEntry>& blacklist);

struct ExposureEvidence {
    std::string op;
    // groups whose observed keys one exponent reproduces (known-exponent
    // mode); groups with observations (cardinality mode)
    std::vector<std::uint16_t> groups;
    // distinct fingerprints per group
    std::map<std::uint16_t, std::size_t> cardinality;
    std::size_t exponents_matched = 0;  // known-exponent mode only
};

struct ExposureReport {
    bool known_exponents = false;
    std::vector<ExposureEvidence> evidence;
};

// With known exponents, reports operators where a single exponent reproduces
// observed public values in two or more MODP groups. Without them, lists the
// per-group fingerprint cardinality of every operator observed in two or
// more groups and makes no exponent claim.
ExposureReport cross_group_exposure(const std::vector<KeyObservation>& observations,
                                    const std::optional<std::vector<dh::BigInt>>& known_exponents = std::nullopt,
                                    const OperatorAliases& aliases = {});

nlohmann::json to_json(const ReuseReport& r);
nlohmann::json to_json(const ExposureReport& r);

}  // namespace epdg::analysis
