#include "epdg/scanner/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "epdg/common/errors.hpp"

namespace epdg::scanner {

namespace {

class Socket {
public:
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() {
        if (fd_ >= 0) ::close(fd_);
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    int fd() const { return fd_; }

private:
    int fd_;
};

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

std::optional<Bytes> UdpTransport::exchange(const Endpoint& to, ByteView request, std::chrono::milliseconds timeout,
                                            const std::function<bool(ByteView)>& accept) {
    sockaddr_storage ss{};
    socklen_t slen = 0;
    int family = AF_INET;
    if (auto* v4 = reinterpret_cast<sockaddr_in*>(&ss); inet_pton(AF_INET, to.address.c_str(), &v4->sin_addr) == 1) {
        v4->sin_family = AF_INET;
        v4->sin_port = htons(to.port);
        slen = sizeof(sockaddr_in);
    } else if (auto* v6 = reinterpret_cast<sockaddr_in6*>(&ss);
               inet_pton(AF_INET6, to.address.c_str(), &v6->sin6_addr) == 1) {
        v6->sin6_family = AF_INET6;
        v6->sin6_port = htons(to.port);
        slen = sizeof(sockaddr_in6);
        family = AF_INET6;
    } else {
        throw TransportFailure("not an IP address: " + to.address);
    }

    Socket sock(::socket(family, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (sock.fd() < 0) throw TransportFailure(errno_text("socket"));
    if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&ss), slen) != 0) throw TransportFailure(errno_text("connect"));
    if (::send(sock.fd(), request.data(), request.size(), 0) < 0) throw TransportFailure(errno_text("send"));

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::array<std::uint8_t, 65536> buf{};
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        pollfd pfd{sock.fd(), POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportFailure(errno_text("poll"));
        }
        if (rc == 0) return std::nullopt;
        const ssize_t n = ::recv(sock.fd(), buf.data(), buf.size(), 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (errno == ECONNREFUSED) throw TransportFailure("port unreachable");
            throw TransportFailure(errno_text("recv"));
        }
        ByteView reply(buf.data(), static_cast<std::size_t>(n));
        if (accept(reply)) return Bytes(reply.begin(), reply.end());
    }
}

bool is_local_address(const std::string& address) {
    in_addr v4{};
    if (inet_pton(AF_INET, address.c_str(), &v4) == 1) {
        const std::uint32_t a = ntohl(v4.s_addr);
        return (a >> 24) == 127 || (a >> 24) == 10 || (a >> 20) == 0xAC1 || (a >> 16) == 0xC0A8;
    }
    in6_addr v6{};
    if (inet_pton(AF_INET6, address.c_str(), &v6) == 1) return IN6_IS_ADDR_LOOPBACK(&v6);
    return false;
}

void check_target_allowed(const std::string& address, bool authorized) {
    if (authorized || is_local_address(address)) return;
    throw UnauthorizedTarget("refusing to probe " + address +
                             " (not loopback or private); pass --i-am-authorized for permitted targets");
}

}  // namespace epdg::scanner
