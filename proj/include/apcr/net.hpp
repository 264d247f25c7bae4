#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "apcr/channel.hpp"
#include "apcr/errors.hpp"

namespace apcr::net {

struct IoError : Error {
    using Error::Error;
};

/// "host:port" with numeric IPv4 host.
inline sockaddr_in parseEndpoint(const std::string& hostPort) {
    auto colon = hostPort.rfind(':');
    if (colon == std::string::npos)
        throw ArgumentError("endpoint must be host:port");
    std::string host = hostPort.substr(0, colon);
    int port = std::stoi(hostPort.substr(colon + 1));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (host.empty()) host = "0.0.0.0";
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw ArgumentError("bad IPv4 address: " + host);
    return addr;
}

/// UDP datagram channel. One frame per datagram, no reassembly; loss
/// recovery is the relying party's freshness timeout plus a fresh run.
class UdpChannel final : public Channel {
public:
    UdpChannel(UdpChannel&& o) noexcept
        : fd_(o.fd_), peer_(o.peer_), hasPeer_(o.hasPeer_) {
        o.fd_ = -1;
    }
    UdpChannel& operator=(UdpChannel&&) = delete;
    UdpChannel(const UdpChannel&) = delete;

    ~UdpChannel() override {
        if (fd_ >= 0) ::close(fd_);
    }

    /// Server side: bind to an address, reply to whoever talked last.
    static UdpChannel bind(const std::string& hostPort) {
        UdpChannel ch;
        auto addr = parseEndpoint(hostPort);
        if (::bind(ch.fd_, reinterpret_cast<sockaddr*>(&addr),
                   sizeof(addr)) != 0)
            throw IoError("bind failed: " + std::string(strerror(errno)));
        return ch;
    }

    /// Client side: fixed peer, OS-assigned local port.
    static UdpChannel connectTo(const std::string& hostPort) {
        UdpChannel ch;
        ch.peer_ = parseEndpoint(hostPort);
        ch.hasPeer_ = true;
        return ch;
    }

    uint16_t localPort() const {
        sockaddr_in addr{};
        socklen_t len = sizeof(addr);
        if (getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
            throw IoError("getsockname failed");
        return ntohs(addr.sin_port);
    }

    void send(const wire::Frame& frame) override {
        Bytes raw = wire::encodeFrame(frame);
        if (raw.size() > kMaxDatagram)
            throw ArgumentError("frame exceeds datagram budget");
        if (!hasPeer_)
            throw IoError("no peer to send to yet");
        ssize_t n = ::sendto(fd_, raw.data(), raw.size(), 0,
                             reinterpret_cast<const sockaddr*>(&peer_),
                             sizeof(peer_));
        if (n != static_cast<ssize_t>(raw.size()))
            throw IoError("sendto failed: " + std::string(strerror(errno)));
    }

    std::optional<wire::Frame> recv(std::chrono::milliseconds timeout) override {
        pollfd pfd{fd_, POLLIN, 0};
        int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (ready < 0)
            throw IoError("poll failed: " + std::string(strerror(errno)));
        if (ready == 0) return std::nullopt;
        uint8_t buf[kMaxDatagram + 1];
        sockaddr_in from{};
        socklen_t fromLen = sizeof(from);
        ssize_t n = ::recvfrom(fd_, buf, sizeof(buf), 0,
                               reinterpret_cast<sockaddr*>(&from), &fromLen);
        if (n < 0)
            throw IoError("recvfrom failed: " + std::string(strerror(errno)));
        peer_ = from;  // reply-to-sender semantics
        hasPeer_ = true;
        return wire::decodeFrame({buf, static_cast<size_t>(n)});
    }

private:
    UdpChannel() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
        if (fd_ < 0)
            throw IoError("socket failed: " + std::string(strerror(errno)));
    }

    int fd_;
    sockaddr_in peer_{};
    bool hasPeer_ = false;
};

} // namespace apcr::net
