#include "epdg/analysis/key_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "epdg/common/errors.hpp"
#include "epdg/ike/codec.hpp"

namespace epdg::analysis {

namespace {

std::string operator_of(const KeyObservation& o, const OperatorAliases& aliases) {
    const auto plmn = o.op.str();
    auto it = aliases.find(plmn);
    return it == aliases.end() ? plmn : it->second;
}

}  // namespace

OperatorAliases aliases_from_json(const nlohmann::json& j) {
    if (!j.contains("aliases") || !j["aliases"].is_object()) throw FormatError("alias file needs an 'aliases' object");
    OperatorAliases out;
    for (const auto& [plmn, label] : j["aliases"].items()) {
        discovery::PlmnId::parse(plmn);
        out[plmn] = label.get<std::string>();
    }
    return out;
}

ReuseReport census(const std::vector<KeyObservation>& observations, const OperatorAliases& aliases) {
    ReuseReport r;
    r.total_obs = observations.size();

    std::map<std::pair<std::uint16_t, std::string>, std::set<std::string>> ops_per_key;
    std::map<std::pair<std::string, std::uint16_t>, std::pair<std::set<std::string>, std::size_t>> per_op_group;
    std::map<std::string, std::map<std::string, std::size_t>> nonces_per_op;
    std::set<std::string> operators;

    for (const auto& o : observations) {
        const auto op = operator_of(o, aliases);
        operators.insert(op);
        r.groups.insert(o.group);
        ops_per_key[{o.group, o.pubkey_fp}].insert(op);
        auto& slot = per_op_group[{op, o.group}];
        slot.first.insert(o.pubkey_fp);
        ++slot.second;
        ++nonces_per_op[op][o.nonce_fp];
    }

    r.distinct_keys = ops_per_key.size();
    for (const auto& [key, ops] : ops_per_key) {
        if (ops.size() >= 2) r.sharing_matrix[key.second].insert(ops.begin(), ops.end());
    }
    for (const auto& [key, slot] : per_op_group) {
        r.per_operator.push_back({key.first, key.second, slot.first.size(), slot.second});
    }
    for (const auto& [op, counts] : nonces_per_op) {
        for (const auto& [nonce, n] : counts) r.nonce_reuse_events += n - 1;
    }
    r.scope = operators.size() >= 2 ? ReuseReport::Scope::Inter : ReuseReport::Scope::Intra;
    return r;
}

double coverage_confidence(std::uint64_t distinct_seen, std::uint64_t draws) {
    if (distinct_seen < 1) throw DomainError("distinct_seen must be at least 1");
    if (draws < distinct_seen) throw DomainError("draws must be at least distinct_seen");
    const long double n = static_cast<long double>(distinct_seen);
    const long double d = static_cast<long double>(draws);
    long double sum = 0;
    for (std::uint64_t k = 0; k < distinct_seen; ++k) {
        const long double kk = static_cast<long double>(k);
        const long double log_binom = std::lgamma(n + 1) - std::lgamma(kk + 1) - std::lgamma(n - kk + 1);
        const long double log_miss = d * std::log1p(-kk / n);
        const long double term = std::exp(log_binom + log_miss);
        sum += (k % 2 == 0) ? term : -term;
    }
    // k = n contributes (1 - 1)^draws = 0
    return static_cast<double>(std::clamp<long double>(sum, 0.0L, 1.0L));
}

std::vector<BlacklistEntry> parse_blacklist(std::istream& in) {
    std::vector<BlacklistEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        std::string group_text;
        std::string digest;
        std::string extra;
        fields >> group_text >> digest;
        if (digest.empty()) throw MalformedBlacklist(lineno, "expected '<group> <sha256>'");
        if (fields >> extra) throw MalformedBlacklist(lineno, "trailing field '" + extra + "'");
        if (!std::all_of(group_text.begin(), group_text.end(), [](unsigned char c) { return std::isdigit(c); }) ||
            group_text.size() > 5)
            throw MalformedBlacklist(lineno, "group code is not a number: '" + group_text + "'");
        const auto group = static_cast<std::uint16_t>(std::stoul(group_text));
        if (!ike::is_modp_group(group)) throw MalformedBlacklist(lineno, "not a MODP group: " + group_text);
        std::transform(digest.begin(), digest.end(), digest.begin(), [](unsigned char c) { return std::tolower(c); });
        if (!is_sha256_hex(digest)) throw MalformedBlacklist(lineno, "digest is not 64 hex characters");
        out.push_back({group, digest, lineno});
    }
    return out;
}

std::vector<BlacklistEntry> load_blacklist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open blacklist " + path);
    return parse_blacklist(in);
}

std::vector<KeyObservation> match_blacklist(const std::vector<KeyObservation>& observations,
                                            const std::vector<BlacklistEntry>& blacklist) {
    std::set<std::pair<std::uint16_t, std::string>> index;
    for (const auto& e : blacklist) index.emplace(e.group, e.digest);
    std::vector<KeyObservation> out;
    for (const auto& o : observations) {
        if (index.count({o.group, o.pubkey_fp})) out.push_back(o);
    }
    return out;
}

ExposureReport cross_group_exposure(const std::vector<KeyObservation>& observations,
                                    const std::optional<std::vector<dh::BigInt>>& known_exponents,
                                    const OperatorAliases& aliases) {
    std::map<std::string, std::map<std::uint16_t, std::set<std::string>>> seen;
    for (const auto& o : observations) seen[operator_of(o, aliases)][o.group].insert(o.pubkey_fp);

    ExposureReport report;
    report.known_exponents = known_exponents.has_value();
    for (const auto& [op, by_group] : seen) {
        if (by_group.size() < 2) continue;
        ExposureEvidence ev;
        ev.op = op;
        for (const auto& [g, fps] : by_group) ev.cardinality[g] = fps.size();

        if (!known_exponents) {
            for (const auto& [g, _] : by_group) ev.groups.push_back(g);
            report.evidence.push_back(std::move(ev));
            continue;
        }
        std::set<std::uint16_t> exposed;
        for (const auto& a : *known_exponents) {
            std::vector<std::uint16_t> hits;
            for (const auto& [g, fps] : by_group) {
                if (!ike::is_modp_group(g)) continue;
                const auto& params = dh::group_params(g);
                if (a <= 1 || a >= params.p - 1) continue;
                const auto pub = dh::keypair_from_exponent(params, a).public_value;
                if (fps.count(dh::pubkey_fingerprint(pub, params))) hits.push_back(g);
            }
            if (hits.size() >= 2) {
                exposed.insert(hits.begin(), hits.end());
                ++ev.exponents_matched;
            }
        }
        if (exposed.empty()) continue;
        ev.groups.assign(exposed.begin(), exposed.end());
        report.evidence.push_back(std::move(ev));
    }
    return report;
}

nlohmann::json to_json(const ReuseReport& r) {
    nlohmann::json matrix = nlohmann::json::object();
    for (const auto& [fp, ops] : r.sharing_matrix) matrix[fp] = std::vector<std::string>(ops.begin(), ops.end());
    nlohmann::json per_op = nlohmann::json::array();
    for (const auto& c : r.per_operator) {
        per_op.push_back({{"operator", c.op}, {"group", c.group}, {"distinct_keys", c.distinct_keys},
                          {"total_obs", c.total_obs}});
    }
    return {{"schema_version", 1},
            {"type", "reuse_report"},
            {"scope", r.scope == ReuseReport::Scope::Inter ? "inter" : "intra"},
            {"groups", std::vector<std::uint16_t>(r.groups.begin(), r.groups.end())},
            {"distinct_keys", r.distinct_keys},
            {"total_obs", r.total_obs},
            {"sharing_matrix", matrix},
            {"nonce_reuse_events", r.nonce_reuse_events},
            {"per_operator", per_op}};
}

nlohmann::json to_json(const ExposureReport& r) {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : r.evidence) {
        nlohmann::json card = nlohmann::json::object();
        for (const auto& [g, n] : e.cardinality) card[std::to_string(g)] = n;
        nlohmann::json item{{"operator", e.op}, {"groups", e.groups}, {"fingerprint_cardinality", card}};
        if (r.known_exponents) item["exponents_matched"] = e.exponents_matched;
        ev.push_back(item);
    }
    return {{"schema_version", 1},
            {"type", "cross_group_exposure"},
            {"mode", r.known_exponents ? "known-exponent" : "cardinality-only"},
            {"evidence", ev}};
}

}  // namespace epdg::analysis
