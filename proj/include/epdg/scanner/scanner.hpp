// scanner.hpp
//
// Probing methodology against one ePDG target: single-group capability
// probes, the weak-preference tolerance test, and key collection runs.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "epdg/analysis/observation.hpp"
#include "epdg/common/bytes.hpp"
#include "epdg/common/random.hpp"
#include "epdg/common/time.hpp"
#include "epdg/discovery/discovery.hpp"
#include "epdg/scanner/transport.hpp"

namespace epdg::scanner {

struct ProbeConfig {
    std::chrono::milliseconds timeout{5000};
    int retries = 1;  // extra attempts after an Ignored attempt
    std::chrono::milliseconds inter_probe_delay{500};
    bool capture = false;
    bool nat_t = false;  // port 4500 with non-ESP marker
    bool authorized = false;
};

namespace outcome {
struct Accepted {
    std::uint16_t group = 0;
    Bytes server_pubkey;
    Bytes server_nonce;
    std::vector<std::string> flags;  // "unverified-keyshare", "degenerate-public-value"
    bool operator==(const Accepted&) const = default;
};
struct SwitchProposed {
    std::uint16_t from = 0;
    std::uint16_t to = 0;  // != from
    bool operator==(const SwitchProposed&) const = default;
};
struct ErrorNotify {
    std::uint16_t type = 0;
    bool operator==(const ErrorNotify&) const = default;
};
struct Ignored {
    std::int64_t timeout_ms = 0;
    bool operator==(const Ignored&) const = default;
};
struct TransportError {
    std::string detail;
    bool operator==(const TransportError&) const = default;
};
}  // namespace outcome

using ProbeOutcome = std::variant<outcome::Accepted, outcome::SwitchProposed, outcome::ErrorNotify, outcome::Ignored,
                                  outcome::TransportError>;

// "accepted", "switch-proposed", "error-notify", "ignored", "transport-error"
std::string outcome_kind(const ProbeOutcome& o);

// Total over arbitrary octets: every input maps to exactly one outcome.
// `probed_group` is the KE group of the request that elicited the reply.
ProbeOutcome classify_response(ByteView reply, std::uint16_t probed_group);

struct ProbeRecord {
    ProbeOutcome outcome;
    int attempts = 0;
    std::vector<Bytes> requests;  // capture only
    std::optional<Bytes> response;  // capture only
};

struct SurveyResult {
    discovery::EpdgTarget target;
    std::map<std::uint16_t, ProbeOutcome> per_group;
    std::string support_label;
    SystemTime started_at{};
    SystemTime finished_at{};
};

// Supported groups (Accepted only) in canonical order; a run of three or more
// groups adjacent in the requested list collapses to "DHa–DHb", the rest join
// with "+". "none" when nothing was accepted.
std::string support_label(const std::map<std::uint16_t, ProbeOutcome>& per_group);

struct ToleranceResult {
    enum class Kind { Tolerated, UpgradeRequested, DowngradeIndicated, Error };
    Kind kind = Kind::Error;
    std::uint16_t group = 0;  // Upgrade/Downgrade target
    std::string detail;       // Error only
    bool operator==(const ToleranceResult& o) const { return kind == o.kind && group == o.group; }
};

std::string to_string(ToleranceResult::Kind k);

// one collect_keys attempt; observation present iff the attempt was Accepted
struct KeyAttempt {
    int index = 0;
    ProbeOutcome outcome;
    std::optional<analysis::KeyObservation> observation;
};

// Single-owner scanner for one target at a time; not thread-safe. Consecutive
// requests are spaced by at least cfg.inter_probe_delay.
class Scanner {
public:
    Scanner(Transport& transport, RandomSource& rng, ProbeConfig cfg, Clock clock = {});

    // full record including attempts and optional capture
    ProbeRecord probe(const discovery::EpdgTarget& target, std::uint16_t group);
    ProbeOutcome probe_group(const discovery::EpdgTarget& target, std::uint16_t group);

    // throws PreconditionError when groups is empty
    SurveyResult survey(const discovery::EpdgTarget& target, const std::vector<std::uint16_t>& groups);

    // throws TransportFailure when the target is unreachable
    ToleranceResult weak_preference_test(const discovery::EpdgTarget& target);

    // throws PreconditionError unless n >= 1 and group is MODP
    std::vector<KeyAttempt> collect_keys(const discovery::EpdgTarget& target, std::uint16_t group, int n);

    const ProbeConfig& config() const { return cfg_; }

private:
    ProbeRecord send_offer(const discovery::EpdgTarget& target, const std::vector<std::uint16_t>& offered,
                           std::uint16_t ke_group);
    Endpoint endpoint_of(const discovery::EpdgTarget& target) const;
    void pace();

    Transport& transport_;
    RandomSource& rng_;
    ProbeConfig cfg_;
    Clock clock_;
    std::optional<std::chrono::steady_clock::time_point> last_send_;
};

// Runs fn over every index in [0, count) on up to `width` threads; each index
// is handled by exactly one thread.
void for_each_parallel(std::size_t count, std::size_t width, const std::function<void(std::size_t)>& fn);

// ---- JSON (schema_version 1) ----

nlohmann::json to_json(const ProbeOutcome& o);
nlohmann::json to_json(const SurveyResult& r);
nlohmann::json tolerance_to_json(const discovery::EpdgTarget& t, const ToleranceResult& r);
nlohmann::json to_json(const discovery::EpdgTarget& t, const KeyAttempt& a);

}  // namespace epdg::scanner
