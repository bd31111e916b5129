#include "epdg/cli/mock_fleet.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <set>

#include "epdg/common/errors.hpp"
#include "epdg/ike/codec.hpp"
#include "epdg/scanner/transport.hpp"

namespace epdg::cli {

namespace {

std::pair<std::string, std::uint16_t> parse_listen(const std::string& text) {
    std::string host = text;
    std::uint16_t port = 0;
    if (!text.empty() && text.front() == '[') {
        const auto close = text.find(']');
        if (close == std::string::npos) throw FormatError("bad listen address " + text);
        host = text.substr(1, close - 1);
        if (close + 1 < text.size() && text[close + 1] == ':') port = static_cast<std::uint16_t>(std::stoul(text.substr(close + 2)));
    } else if (const auto colon = text.rfind(':'); colon != std::string::npos && text.find(':') == colon) {
        host = text.substr(0, colon);
        port = static_cast<std::uint16_t>(std::stoul(text.substr(colon + 1)));
    }
    return {host, port};
}

}  // namespace

void MockFleetSpec::validate() const {
    std::set<std::pair<std::string, std::uint16_t>> endpoints;
    std::set<discovery::PlmnId> members;
    for (const auto& op : operators) {
        members.insert(op.plmn);
        if (op.listen_port != 0 && !endpoints.emplace(op.listen_address, op.listen_port).second)
            throw InvariantViolation("duplicate listen address " + op.listen_address + ":" +
                                     std::to_string(op.listen_port));
    }
    if (shared_key_pool) {
        if (shared_key_pool->exponents.empty()) throw InvariantViolation("shared key pool is empty");
        for (const auto& p : shared_key_pool->operators) {
            if (!members.count(p)) throw InvariantViolation("pool operator " + p.str() + " is not in the fleet");
        }
    }
}

std::vector<MockOperator> MockFleetSpec::effective_operators() const {
    std::vector<MockOperator> out = operators;
    if (!shared_key_pool) return out;
    for (auto& op : out) {
        const auto& members = shared_key_pool->operators;
        if (std::find(members.begin(), members.end(), op.plmn) == members.end()) continue;
        op.policy.key_mode = sim::KeyMode::StaticPool;
        op.policy.static_pool = shared_key_pool->exponents;
        op.policy.pool_shared_across_groups = shared_key_pool->shared_across_groups;
    }
    return out;
}

MockFleetSpec fleet_from_json(const nlohmann::json& j) {
    try {
        MockFleetSpec spec;
        for (const auto& o : j.at("operators")) {
            MockOperator op;
            op.plmn = discovery::PlmnId::parse(o.at("plmn").get<std::string>());
            std::tie(op.listen_address, op.listen_port) = parse_listen(o.value("listen", std::string("127.0.0.1:0")));
            op.policy = sim::epdg_policy_from_json(o.value("policy", nlohmann::json::object()));
            op.seed = o.value("seed", std::uint64_t{spec.operators.size() + 1});
            op.nat_t = o.value("nat_t", false);
            op.offline = o.value("offline", false);
            spec.operators.push_back(std::move(op));
        }
        if (j.contains("shared_key_pool")) {
            const auto& p = j["shared_key_pool"];
            SharedKeyPool pool;
            for (const auto& e : p.at("exponents")) pool.exponents.push_back(dh::from_hex(e.get<std::string>()));
            for (const auto& m : p.at("operators")) pool.operators.push_back(discovery::PlmnId::parse(m.get<std::string>()));
            pool.shared_across_groups = p.value("shared_across_groups", true);
            spec.shared_key_pool = std::move(pool);
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad fleet spec: ") + e.what());
    }
}

struct MockFleet::Listener {
    MockOperator op;
    int fd = -1;
    std::uint16_t bound_port = 0;
    std::unique_ptr<sim::EpdgResponder> responder;
    std::thread worker;
    mutable std::mutex log_mu;
    std::vector<std::chrono::steady_clock::time_point> log;
};

MockFleet::MockFleet(MockFleetSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

MockFleet::~MockFleet() { stop(); }

void MockFleet::start() {
    if (running_) return;
    std::vector<std::unique_ptr<Listener>> ls;
    auto close_all = [&ls] {
        for (auto& l : ls) {
            if (l->fd >= 0) ::close(l->fd);
        }
    };
    for (const auto& op : spec_.effective_operators()) {
        if (!scanner::is_local_address(op.listen_address)) {
            close_all();
            throw UnauthorizedTarget("mock listeners bind to loopback or private addresses only: " + op.listen_address);
        }
        auto l = std::make_unique<Listener>();
        l->op = op;
        sockaddr_storage ss{};
        socklen_t slen = 0;
        int family = AF_INET;
        auto* v4 = reinterpret_cast<sockaddr_in*>(&ss);
        auto* v6 = reinterpret_cast<sockaddr_in6*>(&ss);
        if (inet_pton(AF_INET, op.listen_address.c_str(), &v4->sin_addr) == 1) {
            v4->sin_family = AF_INET;
            v4->sin_port = htons(op.listen_port);
            slen = sizeof(sockaddr_in);
        } else {
            inet_pton(AF_INET6, op.listen_address.c_str(), &v6->sin6_addr);
            v6->sin6_family = AF_INET6;
            v6->sin6_port = htons(op.listen_port);
            slen = sizeof(sockaddr_in6);
            family = AF_INET6;
        }
        l->fd = ::socket(family, SOCK_DGRAM | SOCK_CLOEXEC, 0);
        if (l->fd < 0 || ::bind(l->fd, reinterpret_cast<sockaddr*>(&ss), slen) != 0) {
            const std::string why = std::strerror(errno);
            ls.push_back(std::move(l));
            close_all();
            throw AddressInUse("cannot bind " + op.listen_address + ":" + std::to_string(op.listen_port) + ": " + why);
        }
        getsockname(l->fd, reinterpret_cast<sockaddr*>(&ss), &slen);
        l->bound_port = ntohs(family == AF_INET ? v4->sin_port : v6->sin6_port);
        if (op.offline) {
            ::close(l->fd);
            l->fd = -1;
        } else {
            l->responder = std::make_unique<sim::EpdgResponder>(op.policy, op.seed);
        }
        ls.push_back(std::move(l));
    }
    listeners_ = std::move(ls);
    running_ = true;
    for (auto& l : listeners_) {
        if (l->fd < 0) continue;
        Listener* raw = l.get();
        l->worker = std::thread([this, raw] { serve(*raw); });
    }
}

void MockFleet::stop() {
    if (!running_) return;
    running_ = false;
    for (auto& l : listeners_) {
        if (l->worker.joinable()) l->worker.join();
        if (l->fd >= 0) ::close(l->fd);
        l->fd = -1;
    }
}

void MockFleet::serve(Listener& l) {
    std::array<std::uint8_t, 65536> buf{};
    while (running_) {
        pollfd pfd{l.fd, POLLIN, 0};
        if (::poll(&pfd, 1, 50) <= 0) continue;
        sockaddr_storage peer{};
        socklen_t plen = sizeof peer;
        const ssize_t n = ::recvfrom(l.fd, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&peer), &plen);
        if (n <= 0) continue;
        {
            std::lock_guard lock(l.log_mu);
            l.log.push_back(std::chrono::steady_clock::now());
        }
        ByteView datagram(buf.data(), static_cast<std::size_t>(n));
        if (l.op.nat_t) {
            auto body = ike::strip_non_esp_marker(datagram);
            if (!body) continue;
            datagram = *body;
        }
        std::optional<ike::IkeMessage> reply;
        try {
            reply = l.responder->handle(ike::decode(datagram));
        } catch (const Error&) {
            continue;  // undecodable requests are dropped
        }
        if (!reply) continue;
        Bytes wire = ike::encode(*reply);
        if (l.op.nat_t) wire = ike::add_non_esp_marker(wire);
        ::sendto(l.fd, wire.data(), wire.size(), 0, reinterpret_cast<sockaddr*>(&peer), plen);
    }
}

std::vector<discovery::EpdgTarget> MockFleet::targets() const {
    std::vector<discovery::EpdgTarget> out;
    for (const auto& l : listeners_) {
        discovery::EpdgTarget t;
        t.plmn = l->op.plmn;
        t.fqdn = discovery::epdg_fqdn(l->op.plmn);
        t.addresses = {l->op.listen_address};
        t.port = l->bound_port;
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::chrono::steady_clock::time_point> MockFleet::request_times(std::size_t i) const {
    std::lock_guard lock(listeners_.at(i)->log_mu);
    return listeners_.at(i)->log;
}

}  // namespace epdg::cli
