#include "epdg/analysis/observation.hpp"

#include "epdg/common/bytes.hpp"
#include "epdg/common/errors.hpp"

namespace epdg::analysis {

void KeyObservation::validate() const {
    if (!is_sha256_hex(pubkey_fp)) throw InvariantViolation("pubkey_fp is not a 64-char lowercase hex digest");
    if (!is_sha256_hex(nonce_fp)) throw InvariantViolation("nonce_fp is not a 64-char lowercase hex digest");
}

nlohmann::json to_json(const KeyObservation& o) {
    return {{"schema_version", 1},
            {"type", "key_observation"},
            {"operator", o.op.str()},
            {"endpoint", o.endpoint},
            {"group", o.group},
            {"pubkey_fp", o.pubkey_fp},
            {"nonce_fp", o.nonce_fp},
            {"observed_at", iso8601(o.observed_at)}};
}

KeyObservation observation_from_json(const nlohmann::json& j) {
    KeyObservation o;
    try {
        o.op = discovery::PlmnId::parse(j.at("operator").get<std::string>());
        o.endpoint = j.value("endpoint", "");
        o.group = j.at("group").get<std::uint16_t>();
        o.pubkey_fp = j.at("pubkey_fp").get<std::string>();
        o.nonce_fp = j.at("nonce_fp").get<std::string>();
        if (j.contains("observed_at")) o.observed_at = parse_iso8601(j["observed_at"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad key observation: ") + e.what());
    }
    o.validate();
    return o;
}

}  // namespace epdg::analysis
