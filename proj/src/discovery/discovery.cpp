#include "epdg/discovery/discovery.hpp"

#include <arpa/inet.h>
#include <arpa/nameser.h>
#include <netdb.h>
#include <netinet/in.h>
#include <resolv.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <set>

#include "epdg/common/errors.hpp"

namespace epdg::discovery {

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string pad(unsigned value, std::size_t width) {
    std::string s = std::to_string(value);
    if (s.size() < width) s.insert(0, width - s.size(), '0');
    return s;
}

// octets for sorting; v4 maps to 4 octets, v6 to 16
std::vector<std::uint8_t> address_key(const std::string& addr) {
    std::array<std::uint8_t, 16> buf{};
    if (inet_pton(AF_INET, addr.c_str(), buf.data()) == 1) return {buf.begin(), buf.begin() + 4};
    if (inet_pton(AF_INET6, addr.c_str(), buf.data()) == 1) return {buf.begin(), buf.end()};
    throw FormatError("not an IP address: " + addr);
}

}  // namespace

PlmnId::PlmnId(std::string mcc, std::string mnc) : mcc_(std::move(mcc)), mnc_(std::move(mnc)) {
    if (!all_digits(mcc_) || mcc_.size() != 3) throw InvalidPlmn("MCC must be exactly 3 digits: '" + mcc_ + "'");
    if (!all_digits(mnc_) || (mnc_.size() != 2 && mnc_.size() != 3))
        throw InvalidPlmn("MNC must be 2 or 3 digits: '" + mnc_ + "'");
}

PlmnId PlmnId::parse(std::string_view text) {
    auto dash = text.find('-');
    if (dash == std::string_view::npos) throw InvalidPlmn("expected MCC-MNC: '" + std::string(text) + "'");
    return PlmnId(std::string(text.substr(0, dash)), std::string(text.substr(dash + 1)));
}

std::string PlmnId::mnc3() const { return mnc_.size() == 3 ? mnc_ : "0" + mnc_; }

std::string PlmnId::str() const { return mcc_ + "-" + mnc_; }

std::string epdg_fqdn(const PlmnId& plmn) {
    return "epdg.epc.mnc" + plmn.mnc3() + ".mcc" + plmn.mcc() + ".pub.3gppnetwork.org";
}

CodeRange parse_code_range(std::string_view text) {
    auto dash = text.find('-');
    CodeRange r;
    if (dash == std::string_view::npos) {
        r.low = r.high = std::string(text);
    } else {
        r.low = std::string(text.substr(0, dash));
        r.high = std::string(text.substr(dash + 1));
    }
    if (!all_digits(r.low) || !all_digits(r.high))
        throw InvalidPlmn("code range must be digits: '" + std::string(text) + "'");
    return r;
}

namespace {
std::vector<std::string> expand(const CodeRange& r) {
    const unsigned lo = static_cast<unsigned>(std::stoul(r.low));
    const unsigned hi = static_cast<unsigned>(std::stoul(r.high));
    std::vector<std::string> out;
    if (lo > hi) return out;
    const std::size_t wlo = r.low.size();
    const std::size_t whi = r.high.size();
    for (unsigned v = lo; v <= hi; ++v) {
        std::size_t width = wlo;
        if (whi > wlo) {
            // values that fit in the narrower width keep it
            unsigned limit = 1;
            for (std::size_t i = 0; i < wlo; ++i) limit *= 10;
            width = v < limit ? wlo : whi;
        }
        out.push_back(pad(v, width));
    }
    return out;
}
}  // namespace

std::vector<PlmnId> enumerate_plmns(const std::vector<PlmnRange>& ranges) {
    std::set<std::string> seen_fqdn;
    std::vector<PlmnId> out;
    for (const auto& r : ranges) {
        const auto mccs = expand(r.mcc);
        const auto mncs = expand(r.mnc);
        for (const auto& mcc : mccs) {
            for (const auto& mnc : mncs) {
                PlmnId id(mcc, mnc);
                if (seen_fqdn.insert(epdg_fqdn(id)).second) out.push_back(std::move(id));
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const PlmnId& a, const PlmnId& b) {
        if (a.mcc() != b.mcc()) return a.mcc() < b.mcc();
        if (a.mnc3() != b.mnc3()) return a.mnc3() < b.mnc3();
        return a.mnc() < b.mnc();
    });
    return out;
}

// ---- resolvers ----

SystemResolver::SystemResolver() : SystemResolver(Options{}) {}

SystemResolver::SystemResolver(Options opts) : opts_(std::move(opts)) {}

std::vector<std::string> SystemResolver::lookup(const std::string& fqdn, RecordType type) {
    struct __res_state state;
    std::memset(&state, 0, sizeof state);
    if (res_ninit(&state) != 0) throw ResolverUnavailable("res_ninit failed");
    state.retrans = opts_.timeout_s;
    state.retry = opts_.attempts;
    if (opts_.upstream) {
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(53);
        if (inet_pton(AF_INET, opts_.upstream->c_str(), &sa.sin_addr) != 1) {
            res_nclose(&state);
            throw ResolverUnavailable("invalid upstream resolver address " + *opts_.upstream);
        }
        state.nscount = 1;
        state.nsaddr_list[0] = sa;
    }

    std::array<unsigned char, 8192> answer{};
    const int qtype = type == RecordType::A ? ns_t_a : ns_t_aaaa;
    h_errno = 0;
    const int len = res_nquery(&state, fqdn.c_str(), ns_c_in, qtype, answer.data(), static_cast<int>(answer.size()));
    const int err = h_errno;
    res_nclose(&state);
    if (len < 0) {
        if (err == HOST_NOT_FOUND || err == NO_DATA) return {};
        throw ResolverUnavailable("resolution of " + fqdn + " failed: " + hstrerror(err));
    }

    ns_msg msg;
    if (ns_initparse(answer.data(), len, &msg) != 0) throw ResolverUnavailable("unparseable DNS answer");
    std::vector<std::string> out;
    const int count = ns_msg_count(msg, ns_s_an);
    for (int i = 0; i < count; ++i) {
        ns_rr rr;
        if (ns_parserr(&msg, ns_s_an, i, &rr) != 0) continue;
        char buf[INET6_ADDRSTRLEN];
        if (ns_rr_type(rr) == ns_t_a && ns_rr_rdlen(rr) == 4 && type == RecordType::A) {
            inet_ntop(AF_INET, ns_rr_rdata(rr), buf, sizeof buf);
            out.emplace_back(buf);
        } else if (ns_rr_type(rr) == ns_t_aaaa && ns_rr_rdlen(rr) == 16 && type == RecordType::AAAA) {
            inet_ntop(AF_INET6, ns_rr_rdata(rr), buf, sizeof buf);
            out.emplace_back(buf);
        }
    }
    return out;
}

StubResolver StubResolver::from_json(const nlohmann::json& doc) {
    std::map<std::string, Entry> records;
    if (!doc.contains("records") || !doc["records"].is_object())
        throw FormatError("stub resolver document needs a 'records' object");
    for (const auto& [name, value] : doc["records"].items()) {
        Entry e;
        if (value.is_string()) {
            if (value.get<std::string>() != "unavailable")
                throw FormatError("unknown stub record marker for " + name);
            e.unavailable = true;
        } else {
            e.a = value.value("a", std::vector<std::string>{});
            e.aaaa = value.value("aaaa", std::vector<std::string>{});
        }
        records.emplace(name, std::move(e));
    }
    return StubResolver(std::move(records));
}

std::vector<std::string> StubResolver::lookup(const std::string& fqdn, RecordType type) {
    ++queries_;
    auto it = records_.find(fqdn);
    if (it == records_.end()) return {};
    if (it->second.unavailable) throw ResolverUnavailable("stub: resolver timeout for " + fqdn);
    return type == RecordType::A ? it->second.a : it->second.aaaa;
}

// ---- targets ----

std::string normalize_address(const std::string& addr) {
    std::array<std::uint8_t, 16> buf{};
    char out[INET6_ADDRSTRLEN];
    if (inet_pton(AF_INET, addr.c_str(), buf.data()) == 1) {
        inet_ntop(AF_INET, buf.data(), out, sizeof out);
        return out;
    }
    if (inet_pton(AF_INET6, addr.c_str(), buf.data()) == 1) {
        inet_ntop(AF_INET6, buf.data(), out, sizeof out);
        return out;
    }
    throw FormatError("not an IP address: " + addr);
}

bool is_ipv6(const std::string& addr) { return addr.find(':') != std::string::npos; }

std::vector<std::string> order_addresses(std::vector<std::string> addrs) {
    for (auto& a : addrs) a = normalize_address(a);
    std::sort(addrs.begin(), addrs.end(), [](const std::string& x, const std::string& y) {
        const auto kx = address_key(x);
        const auto ky = address_key(y);
        if (kx.size() != ky.size()) return kx.size() < ky.size();
        return kx < ky;
    });
    addrs.erase(std::unique(addrs.begin(), addrs.end()), addrs.end());
    return addrs;
}

EpdgTarget resolve(const PlmnId& plmn, Resolver& resolver, const Clock& clock) {
    EpdgTarget t;
    t.plmn = plmn;
    t.fqdn = epdg_fqdn(plmn);
    auto v4 = resolver.lookup(t.fqdn, RecordType::A);
    auto v6 = resolver.lookup(t.fqdn, RecordType::AAAA);
    v4.insert(v4.end(), v6.begin(), v6.end());
    t.addresses = order_addresses(std::move(v4));
    t.resolved_at = clock.now();
    return t;
}

nlohmann::json to_json(const EpdgTarget& t) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["plmn"] = t.plmn.str();
    j["fqdn"] = t.fqdn;
    j["addresses"] = t.addresses;
    j["resolved_at"] = iso8601(t.resolved_at);
    if (t.port != 500) j["port"] = t.port;
    return j;
}

EpdgTarget target_from_json(const nlohmann::json& j) {
    try {
        EpdgTarget t;
        t.plmn = PlmnId::parse(j.at("plmn").get<std::string>());
        t.fqdn = j.value("fqdn", epdg_fqdn(t.plmn));
        t.addresses = j.value("addresses", std::vector<std::string>{});
        if (j.contains("resolved_at")) t.resolved_at = parse_iso8601(j["resolved_at"].get<std::string>());
        t.port = j.value("port", static_cast<std::uint16_t>(500));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad target record: ") + e.what());
    }
}

}  // namespace epdg::discovery
