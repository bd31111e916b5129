// transport.hpp
//
// Datagram request/response primitive used by the scanner, plus the target
// safety gate.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "epdg/common/bytes.hpp"

namespace epdg::scanner {

struct Endpoint {
    std::string address;
    std::uint16_t port = 500;
};

class Transport {
public:
    virtual ~Transport() = default;

    // Sends one datagram and returns the first reply for which `accept` holds,
    // or nullopt once `timeout` has elapsed. Non-matching replies are skipped.
    // Throws TransportFailure on socket errors (including ICMP unreachable).
    virtual std::optional<Bytes> exchange(const Endpoint& to, ByteView request, std::chrono::milliseconds timeout,
                                          const std::function<bool(ByteView)>& accept) = 0;
};

// One connected UDP socket per exchange; IPv4 and IPv6.
class UdpTransport final : public Transport {
public:
    std::optional<Bytes> exchange(const Endpoint& to, ByteView request, std::chrono::milliseconds timeout,
                                  const std::function<bool(ByteView)>& accept) override;
};

// loopback, RFC 1918, or IPv6 loopback
bool is_local_address(const std::string& address);

// throws UnauthorizedTarget for any other address unless authorized
void check_target_allowed(const std::string& address, bool authorized);

}  // namespace epdg::scanner
