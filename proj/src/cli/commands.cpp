#include "epdg/cli/commands.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "epdg/analysis/key_analysis.hpp"
#include "epdg/analysis/observation.hpp"
#include "epdg/audit/config_audit.hpp"
#include "epdg/cli/mock_fleet.hpp"
#include "epdg/common/errors.hpp"
#include "epdg/common/random.hpp"
#include "epdg/discovery/discovery.hpp"
#include "epdg/ike/codec.hpp"
#include "epdg/scanner/scanner.hpp"
#include "epdg/sim/attack.hpp"

namespace epdg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string data_dir() {
    if (const char* env = std::getenv("EPDG_AUDIT_DATA"); env != nullptr && *env != '\0') return env;
    return std::string(EPDG_DATA_DIR) + "/data";
}

std::string data_file(const std::string& name) { return (fs::path(data_dir()) / name).string(); }

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    int timeout_ms = 5000;
    int delay_ms = 500;
    bool authorized = false;
    std::string output;
    std::string fixed_time;

    Clock clock() const { return fixed_time.empty() ? Clock{} : Clock{parse_iso8601(fixed_time)}; }
};

std::unique_ptr<RandomSource> make_rng(const Globals& g, std::uint64_t stream) {
    if (g.seed) return std::make_unique<SeededRandom>(*g.seed * 0x9E3779B97F4A7C15ULL + stream);
    return std::make_unique<SystemRandom>();
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    return in;
}

json read_json_file(const std::string& path) {
    auto in = open_input(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// JSON Lines; blank lines skipped
std::vector<json> read_jsonl(const std::string& path) {
    auto in = open_input(path);
    std::vector<json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::uint16_t> parse_group_list(const std::string& text) {
    std::vector<std::uint16_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.rfind("DH", 0) == 0) item = item.substr(2);
        if (const auto dash = item.find('-'); dash != std::string::npos) {
            const int lo = std::stoi(item.substr(0, dash));
            const int hi = std::stoi(item.substr(dash + 1));
            for (std::uint16_t g : ike::modp_groups())
                if (g >= lo && g <= hi) out.push_back(g);
            for (std::uint16_t g : ike::ecp_groups())
                if (g >= lo && g <= hi) out.push_back(g);
        } else {
            out.push_back(static_cast<std::uint16_t>(std::stoi(item)));
        }
    }
    for (auto g : out)
        if (!ike::is_known_ke_group(g)) throw FormatError("unknown DH group " + std::to_string(g));
    return out;
}

// "mcc,mnc" or "mcc-mnc" rows; '#' comments and a header row are skipped
std::vector<discovery::PlmnId> read_plmn_file(const std::string& path) {
    auto in = open_input(path);
    std::vector<discovery::PlmnId> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto sep = line.find_first_of(",;-");
        if (sep == std::string::npos) throw FormatError("bad PLMN row: " + line);
        std::string mcc = line.substr(0, sep);
        std::string mnc = line.substr(sep + 1);
        if (const auto extra = mnc.find_first_of(",;"); extra != std::string::npos) mnc.resize(extra);
        if (mcc == "mcc" || mcc == "MCC") continue;
        out.emplace_back(mcc, mnc);
    }
    return out;
}

class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) {
        if (!path.empty() && path != "-") {
            file_.open(path);
            if (!file_) throw FormatError("cannot write " + path);
        }
        os_ = file_.is_open() ? &file_ : &fallback;
    }
    void line(const json& j) { *os_ << j.dump() << '\n'; }
    std::ostream& stream() { return *os_; }

private:
    std::ofstream file_;
    std::ostream* os_;
};

// ---- discover ----

struct DiscoverArgs {
    std::string mcc;
    std::string mnc;
    std::string plmn_file;
    std::string stub;
    std::string upstream;
    bool published_only = false;
    int parallel = 8;
};

int cmd_discover(const Globals& g, const DiscoverArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<discovery::PlmnId> plmns;
    if (!a.plmn_file.empty()) plmns = read_plmn_file(a.plmn_file);
    if (!a.mcc.empty()) {
        const auto more = discovery::enumerate_plmns(
            {{discovery::parse_code_range(a.mcc), discovery::parse_code_range(a.mnc.empty() ? "00-999" : a.mnc)}});
        plmns.insert(plmns.end(), more.begin(), more.end());
    }
    if (plmns.empty()) throw FormatError("discover needs --mcc or --plmn-file");

    const Clock clock = g.clock();
    std::vector<discovery::EpdgTarget> targets(plmns.size());
    if (!a.stub.empty()) {
        auto stub = discovery::StubResolver::from_json(read_json_file(a.stub));
        for (std::size_t i = 0; i < plmns.size(); ++i) targets[i] = discovery::resolve(plmns[i], stub, clock);
    } else {
        discovery::SystemResolver::Options opts;
        if (!a.upstream.empty()) opts.upstream = a.upstream;
        opts.timeout_s = std::max(1, g.timeout_ms / 1000);
        scanner::for_each_parallel(plmns.size(), static_cast<std::size_t>(std::max(1, a.parallel)), [&](std::size_t i) {
            discovery::SystemResolver resolver(opts);
            targets[i] = discovery::resolve(plmns[i], resolver, clock);
        });
    }

    Sink sink(g.output, out);
    std::size_t published = 0;
    for (const auto& t : targets) {
        if (!t.addresses.empty()) ++published;
        if (a.published_only && t.addresses.empty()) continue;
        sink.line(discovery::to_json(t));
    }
    err << "queried " << targets.size() << " names, " << published << " published an ePDG\n";
    return exit_code::ok;
}

// ---- scan ----

struct ScanArgs {
    std::string targets;
    std::string mode = "survey";
    std::string groups = "1,2,5,14-18,19,20,21";
    int group = 2;
    int count = 1;
    int parallel = 1;
    int retries = 1;
    bool strict = false;
    bool nat_t = false;
    std::string capture_dir;
};

json unreachable_record(const discovery::EpdgTarget& t, const std::string& mode, const std::string& detail) {
    return {{"schema_version", 1},
            {"type", "unreachable"},
            {"mode", mode},
            {"plmn", t.plmn.str()},
            {"fqdn", t.fqdn},
            {"address", t.addresses.empty() ? json(nullptr) : json(t.addresses.front())},
            {"detail", detail}};
}

void write_capture(const std::string& dir, const discovery::EpdgTarget& t, std::uint16_t group,
                   const scanner::ProbeRecord& rec) {
    fs::create_directories(dir);
    const std::string stem = (fs::path(dir) / (t.plmn.str() + "_DH" + std::to_string(group))).string();
    std::ofstream req(stem + ".req.hex");
    for (const auto& r : rec.requests) req << to_hex(r) << '\n';
    if (rec.response) std::ofstream(stem + ".resp.hex") << to_hex(*rec.response) << '\n';
}

bool all_transport_errors(const scanner::SurveyResult& r) {
    for (const auto& [grp, o] : r.per_group)
        if (!std::holds_alternative<scanner::outcome::TransportError>(o)) return false;
    return true;
}

void survey_summary(const std::vector<scanner::SurveyResult>& results, const std::vector<std::uint16_t>& groups,
                    std::size_t unreachable, std::ostream& err) {
    const std::vector<std::string> kinds{"accepted", "switch-proposed", "error-notify", "ignored", "transport-error"};
    err << std::left << std::setw(8) << "group";
    for (const auto& k : kinds) err << std::right << std::setw(17) << k;
    err << '\n';
    for (auto grp : groups) {
        std::map<std::string, std::size_t> counts;
        for (const auto& r : results) {
            if (auto it = r.per_group.find(grp); it != r.per_group.end()) ++counts[scanner::outcome_kind(it->second)];
        }
        err << std::left << std::setw(8) << ike::group_name(grp);
        for (const auto& k : kinds) err << std::right << std::setw(17) << counts[k];
        err << '\n';
    }
    std::map<std::string, std::size_t> labels;
    for (const auto& r : results) ++labels[r.support_label];
    err << "support combinations:\n";
    for (const auto& [label, n] : labels) err << "  " << label << ": " << n << '\n';
    if (unreachable) err << "unreachable: " << unreachable << '\n';
}

int cmd_scan(const Globals& g, const ScanArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<discovery::EpdgTarget> targets;
    for (const auto& j : read_jsonl(a.targets)) targets.push_back(discovery::target_from_json(j));

    scanner::ProbeConfig cfg;
    cfg.timeout = std::chrono::milliseconds(g.timeout_ms);
    cfg.inter_probe_delay = std::chrono::milliseconds(g.delay_ms);
    cfg.retries = a.retries;
    cfg.nat_t = a.nat_t;
    cfg.authorized = g.authorized;
    cfg.capture = !a.capture_dir.empty();

    // refuse before any packet leaves
    for (const auto& t : targets)
        for (const auto& addr : t.addresses) scanner::check_target_allowed(addr, g.authorized);

    const std::vector<std::uint16_t> groups = parse_group_list(a.groups);
    if (a.mode != "survey" && a.mode != "tolerance" && a.mode != "collect-keys")
        throw FormatError("unknown scan mode " + a.mode);

    std::vector<std::vector<json>> records(targets.size());
    std::vector<std::optional<scanner::SurveyResult>> surveys(targets.size());
    std::vector<std::optional<scanner::ToleranceResult>> tolerance(targets.size());
    std::vector<bool> unreachable(targets.size(), false);
    std::mutex capture_mu;

    scanner::for_each_parallel(targets.size(), static_cast<std::size_t>(std::max(1, a.parallel)), [&](std::size_t i) {
        const auto& t = targets[i];
        if (t.addresses.empty()) {
            unreachable[i] = true;
            records[i].push_back(unreachable_record(t, a.mode, "no published address"));
            return;
        }
        scanner::UdpTransport transport;
        auto rng = make_rng(g, i);
        scanner::Scanner sc(transport, *rng, cfg, g.clock());
        if (a.mode == "survey") {
            scanner::SurveyResult r;
            if (cfg.capture) {
                r.target = t;
                r.started_at = g.clock().now();
                for (auto grp : groups) {
                    auto rec = sc.probe(t, grp);
                    {
                        std::lock_guard lock(capture_mu);
                        write_capture(a.capture_dir, t, grp, rec);
                    }
                    r.per_group[grp] = rec.outcome;
                }
                r.support_label = scanner::support_label(r.per_group);
                r.finished_at = g.clock().now();
            } else {
                r = sc.survey(t, groups);
            }
            unreachable[i] = all_transport_errors(r);
            records[i].push_back(scanner::to_json(r));
            surveys[i] = std::move(r);
        } else if (a.mode == "tolerance") {
            try {
                tolerance[i] = sc.weak_preference_test(t);
                records[i].push_back(scanner::tolerance_to_json(t, *tolerance[i]));
            } catch (const TransportFailure& e) {
                unreachable[i] = true;
                records[i].push_back(unreachable_record(t, a.mode, e.what()));
            }
        } else {
            const auto attempts = sc.collect_keys(t, static_cast<std::uint16_t>(a.group), a.count);
            bool any_reply = false;
            for (const auto& at : attempts) {
                records[i].push_back(scanner::to_json(t, at));
                if (!std::holds_alternative<scanner::outcome::TransportError>(at.outcome)) any_reply = true;
            }
            unreachable[i] = !any_reply;
        }
    });

    Sink sink(g.output, out);
    for (const auto& rs : records)
        for (const auto& r : rs) sink.line(r);

    const std::size_t n_unreachable = static_cast<std::size_t>(std::count(unreachable.begin(), unreachable.end(), true));
    if (a.mode == "survey") {
        std::vector<scanner::SurveyResult> done;
        for (auto& s : surveys)
            if (s) done.push_back(*s);
        survey_summary(done, groups, n_unreachable, err);
    } else if (a.mode == "tolerance") {
        std::map<std::string, std::size_t> counts;
        for (const auto& r : tolerance)
            if (r) ++counts[scanner::to_string(r->kind)];
        const double total = static_cast<double>(targets.size());
        err << std::left << std::setw(22) << "result" << std::right << std::setw(8) << "count" << std::setw(10)
            << "share" << '\n';
        for (const auto& k : {"tolerated", "upgrade-requested", "downgrade-indicated", "error"}) {
            err << std::left << std::setw(22) << k << std::right << std::setw(8) << counts[k] << std::setw(10)
                << std::fixed << std::setprecision(2) << (total > 0 ? counts[k] / total : 0.0) << '\n';
        }
        err << std::left << std::setw(22) << "unreachable" << std::right << std::setw(8) << n_unreachable
            << std::setw(10) << (total > 0 ? n_unreachable / total : 0.0) << '\n';
    } else {
        std::size_t obs = 0;
        for (const auto& rs : records)
            for (const auto& r : rs)
                if (r.value("type", "") == "key_observation") ++obs;
        err << "collected " << obs << " key observations from " << targets.size() - n_unreachable << " of "
            << targets.size() << " targets\n";
    }
    if (a.strict && n_unreachable > 0) return exit_code::unreachable;
    return exit_code::ok;
}

// ---- analyze ----

struct AnalyzeArgs {
    std::string observations;
    std::string blacklist;
    std::string aliases;
    std::string known_exponents;
    bool no_blacklist = false;
};

int cmd_analyze(const Globals& g, const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<analysis::KeyObservation> obs;
    for (const auto& j : read_jsonl(a.observations)) {
        if (j.value("type", "") != "key_observation") continue;
        obs.push_back(analysis::observation_from_json(j));
    }
    analysis::OperatorAliases aliases;
    if (!a.aliases.empty()) aliases = analysis::aliases_from_json(read_json_file(a.aliases));

    const auto report = analysis::census(obs, aliases);
    json j = analysis::to_json(report);

    // coverage per group: probability that the distinct keys seen are the
    // whole pool, assuming uniform draws
    json coverage = json::object();
    std::map<std::uint16_t, std::pair<std::set<std::string>, std::uint64_t>> per_group;
    for (const auto& o : obs) {
        per_group[o.group].first.insert(o.pubkey_fp);
        ++per_group[o.group].second;
    }
    for (const auto& [grp, seen] : per_group) {
        const auto d = seen.first.size();
        const auto n = seen.second;
        coverage[std::to_string(grp)] = {{"distinct", d}, {"draws", n},
                                         {"confidence", analysis::coverage_confidence(d, n)}};
    }
    j["coverage"] = coverage;

    if (!a.no_blacklist) {
        const std::string path = a.blacklist.empty() ? data_file("static_key_blacklist.txt") : a.blacklist;
        const auto entries = analysis::load_blacklist(path);
        json hits = json::array();
        for (const auto& m : analysis::match_blacklist(obs, entries)) hits.push_back(analysis::to_json(m));
        j["blacklist_entries"] = entries.size();
        j["blacklist_matches"] = hits;
    }

    std::optional<std::vector<dh::BigInt>> known;
    if (!a.known_exponents.empty()) {
        known.emplace();
        auto in = open_input(a.known_exponents);
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            known->push_back(dh::from_hex(line));
        }
    }
    j["cross_group_exposure"] = analysis::to_json(analysis::cross_group_exposure(obs, known, aliases));

    Sink sink(g.output, out);
    sink.line(j);
    err << report.total_obs << " observations, " << report.distinct_keys << " distinct keys, "
        << report.sharing_matrix.size() << " shared across operators\n";
    return exit_code::ok;
}

// ---- audit-config ----

struct AuditArgs {
    std::string records;
    std::string rules;
    std::string defaults;
    bool summary_only = false;
};

int cmd_audit(const Globals& g, const AuditArgs& a, std::ostream& out, std::ostream& err) {
    const auto rules = audit::RuleSet::load(a.rules.empty() ? data_file("deprecated_algorithms.json") : a.rules);
    const auto defaults =
        audit::VendorDefaults::load(a.defaults.empty() ? data_file("vendor_defaults.json") : a.defaults);

    std::vector<json> inputs;
    if (a.records.size() >= 5 && a.records.substr(a.records.size() - 5) == ".json") {
        const json doc = read_json_file(a.records);
        if (doc.is_array()) {
            inputs.assign(doc.begin(), doc.end());
        } else {
            inputs.push_back(doc);
        }
    } else {
        inputs = read_jsonl(a.records);
    }

    std::vector<audit::DeprecationReport> reports;
    for (const auto& j : inputs) reports.push_back(audit::audit(defaults.resolve(audit::record_from_json(j)), rules));

    Sink sink(g.output, out);
    if (!a.summary_only)
        for (const auto& r : reports) sink.line(audit::to_json(r));
    const auto summary = audit::aggregate(reports);
    sink.line(audit::to_json(summary));
    err << reports.size() << " records audited\n";
    return exit_code::ok;
}

// ---- simulate ----

struct SimulateArgs {
    std::string scenario;
    bool render = false;
    std::optional<bool> sip_encryption;
    std::optional<double> crack_latency;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    auto scenario = sim::scenario_from_json(read_json_file(a.scenario));
    if (g.seed) scenario.seed = *g.seed;
    if (a.sip_encryption) {
        scenario.ue.sip_encryption_required = *a.sip_encryption;
        scenario.epdg.enforce_sip_encryption = *a.sip_encryption;
    }
    if (a.crack_latency) {
        if (!scenario.attacker) throw FormatError("scenario has no attacker");
        scenario.attacker->crack_latency_s = *a.crack_latency;
    }
    const auto transcript = sim::run_scenario(scenario);
    Sink sink(g.output, out);
    if (a.render) {
        sink.stream() << sim::render_sequence(transcript);
    } else {
        sink.line(sim::to_json(transcript));
        err << sim::render_sequence(transcript);
    }
    return exit_code::ok;
}

// ---- mock-fleet ----

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct FleetArgs {
    std::string spec;
    std::string emit_targets;
    double duration_s = 0;
};

int cmd_mock_fleet(const Globals& g, const FleetArgs& a, std::ostream& out, std::ostream& err) {
    MockFleet fleet(fleet_from_json(read_json_file(a.spec)));
    fleet.start();
    {
        Sink sink(a.emit_targets.empty() ? g.output : a.emit_targets, out);
        const Clock clock = g.clock();
        for (auto t : fleet.targets()) {
            t.resolved_at = clock.now();
            sink.line(discovery::to_json(t));
        }
        sink.stream().flush();
    }
    err << "serving " << fleet.size() << " mock ePDGs\n" << std::flush;

    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration_s);
    while (!g_stop && (a.duration_s <= 0 || std::chrono::steady_clock::now() < until))
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    fleet.stop();
    std::signal(SIGINT, SIG_DFL);
    std::signal(SIGTERM, SIG_DFL);
    err << "mock fleet stopped\n";
    return exit_code::ok;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ePDG IKEv2 configuration audit toolkit", "epdg_audit"};
    app.require_subcommand(1);

    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "seed for all randomness (reproducible runs)");
    app.add_option("--timeout-ms", g.timeout_ms, "probe and resolver timeout")->capture_default_str();
    app.add_option("--delay-ms", g.delay_ms, "minimum spacing between probes to one target")->capture_default_str();
    app.add_flag("--i-am-authorized", g.authorized, "allow probing public addresses");
    app.add_option("--output,-o", g.output, "write records to this file instead of stdout");
    app.add_option("--fixed-time", g.fixed_time, "pin record timestamps (ISO-8601 UTC)");

    DiscoverArgs da;
    auto* discover = app.add_subcommand("discover", "resolve ePDG names for a PLMN range");
    discover->fallthrough();
    discover->add_option("--mcc", da.mcc, "MCC or range, e.g. 232 or 200-799");
    discover->add_option("--mnc", da.mnc, "MNC range, e.g. 00-10 (default 00-999)");
    discover->add_option("--plmn-file", da.plmn_file, "CSV of mcc,mnc rows");
    discover->add_option("--stub-resolver", da.stub, "canned answers instead of DNS");
    discover->add_option("--resolver", da.upstream, "upstream DNS server address");
    discover->add_flag("--published-only", da.published_only, "omit names without addresses");
    discover->add_option("--parallel", da.parallel, "concurrent lookups")->capture_default_str();

    ScanArgs sa;
    auto* scan = app.add_subcommand("scan", "probe ePDG targets");
    scan->fallthrough();
    scan->add_option("--targets", sa.targets, "JSONL of targets")->required();
    scan->add_option("--mode", sa.mode, "survey | tolerance | collect-keys")
        ->check(CLI::IsMember({"survey", "tolerance", "collect-keys"}))
        ->capture_default_str();
    scan->add_option("--groups", sa.groups, "survey groups, e.g. 1,2,14-18")->capture_default_str();
    scan->add_option("--group", sa.group, "collect-keys group")->capture_default_str();
    scan->add_option("-n,--count", sa.count, "collect-keys handshakes per target")->capture_default_str();
    scan->add_option("--parallel", sa.parallel, "targets probed concurrently")->capture_default_str();
    scan->add_option("--retries", sa.retries, "extra attempts after silence")->capture_default_str();
    scan->add_flag("--strict", sa.strict, "exit 3 if any target is unreachable");
    scan->add_flag("--nat-t", sa.nat_t, "port 4500 with the non-ESP marker");
    scan->add_option("--capture-dir", sa.capture_dir, "hex dumps of survey probes");

    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "key reuse census over collected observations");
    analyze->fallthrough();
    analyze->add_option("--observations", aa.observations, "JSONL from scan --mode collect-keys")->required();
    analyze->add_option("--blacklist", aa.blacklist, "static-key blacklist (default: shipped list)");
    analyze->add_flag("--no-blacklist", aa.no_blacklist, "skip the blacklist match");
    analyze->add_option("--aliases", aa.aliases, "PLMN to operator label map");
    analyze->add_option("--known-exponents", aa.known_exponents, "hex exponents, one per line");

    AuditArgs ua;
    auto* audit_cmd = app.add_subcommand("audit-config", "flag deprecated client IKEv2 parameters");
    audit_cmd->fallthrough();
    audit_cmd->add_option("--records", ua.records, "JSONL or JSON array of config records")->required();
    audit_cmd->add_option("--rules", ua.rules, "deprecation rule set (default: shipped)");
    audit_cmd->add_option("--defaults", ua.defaults, "vendor defaults (default: shipped)");
    audit_cmd->add_flag("--summary-only", ua.summary_only, "emit only the aggregate");

    SimulateArgs ma;
    auto* simulate = app.add_subcommand("simulate", "run an attack scenario");
    simulate->fallthrough();
    simulate->add_option("scenario", ma.scenario, "scenario JSON")->required();
    simulate->add_flag("--render", ma.render, "print the sequence diagram instead of JSON");
    bool sip_on = false;
    bool sip_off = false;
    simulate->add_flag("--sip-encryption", sip_on, "both sides require SIP encryption");
    simulate->add_flag("--no-sip-encryption", sip_off, "neither side requires SIP encryption");
    double crack_latency = 0;
    auto* crack_opt = simulate->add_option("--crack-latency", crack_latency, "override attacker crack latency (s)");

    FleetArgs fa;
    auto* fleet = app.add_subcommand("mock-fleet", "serve mock ePDGs on loopback");
    fleet->fallthrough();
    fleet->add_option("spec", fa.spec, "fleet spec JSON")->required();
    fleet->add_option("--emit-targets", fa.emit_targets, "write bound targets as JSONL here");
    fleet->add_option("--duration-s", fa.duration_s, "stop after this long (0: until signal)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*discover) return cmd_discover(g, da, out, err);
        if (*scan) return cmd_scan(g, sa, out, err);
        if (*analyze) return cmd_analyze(g, aa, out, err);
        if (*audit_cmd) return cmd_audit(g, ua, out, err);
        if (*simulate) {
            if (sip_on && sip_off) throw FormatError("--sip-encryption conflicts with --no-sip-encryption");
            if (sip_on) ma.sip_encryption = true;
            if (sip_off) ma.sip_encryption = false;
            if (*crack_opt) ma.crack_latency = crack_latency;
            return cmd_simulate(g, ma, out, err);
        }
        if (*fleet) return cmd_mock_fleet(g, fa, out, err);
    } catch (const ResolverUnavailable& e) {
        err << "error: resolver unavailable: " << e.what() << '\n';
        return exit_code::resolver;
    } catch (const UnauthorizedTarget& e) {
        err << "error: " << e.what() << " (pass --i-am-authorized for authorized tests)\n";
        return exit_code::unauthorized;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::failure;
    }
    return exit_code::failure;
}

}  // namespace epdg::cli
