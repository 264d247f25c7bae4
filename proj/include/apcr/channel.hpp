#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>

#include "apcr/errors.hpp"
#include "apcr/wire.hpp"

namespace apcr {

inline constexpr size_t kMaxDatagram = 1024;

/// Datagram channel: whole frames or nothing. Implemented in memory for
/// tests and over UDP sockets for the demo.
class Channel {
public:
    virtual ~Channel() = default;

    /// Throws ArgumentError before transmission when the encoded frame
    /// exceeds the datagram budget.
    virtual void send(const wire::Frame& frame) = 0;

    /// Returns nullopt on timeout; throws FormatError on bad framing.
    virtual std::optional<wire::Frame> recv(
        std::chrono::milliseconds timeout) = 0;
};

/// Pair of in-memory endpoints connected by two datagram queues. Thread-safe
/// so test drivers can run the peers on separate threads.
class InMemoryChannel final : public Channel {
public:
    static std::pair<std::unique_ptr<InMemoryChannel>,
                     std::unique_ptr<InMemoryChannel>>
    makePair() {
        auto a2b = std::make_shared<Queue>();
        auto b2a = std::make_shared<Queue>();
        auto a = std::unique_ptr<InMemoryChannel>(
            new InMemoryChannel(a2b, b2a));
        auto b = std::unique_ptr<InMemoryChannel>(
            new InMemoryChannel(b2a, a2b));
        return {std::move(a), std::move(b)};
    }

    void send(const wire::Frame& frame) override {
        Bytes raw = wire::encodeFrame(frame);
        if (raw.size() > kMaxDatagram)
            throw ArgumentError("frame exceeds datagram budget");
        std::lock_guard lock(out_->mutex);
        out_->datagrams.push_back(std::move(raw));
        out_->cv.notify_one();
    }

    std::optional<wire::Frame> recv(std::chrono::milliseconds timeout) override {
        std::unique_lock lock(in_->mutex);
        if (!in_->cv.wait_for(lock, timeout,
                              [this] { return !in_->datagrams.empty(); }))
            return std::nullopt;
        Bytes raw = std::move(in_->datagrams.front());
        in_->datagrams.pop_front();
        lock.unlock();
        return wire::decodeFrame(raw);
    }

private:
    struct Queue {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<Bytes> datagrams;
    };

    InMemoryChannel(std::shared_ptr<Queue> out, std::shared_ptr<Queue> in)
        : out_(std::move(out)), in_(std::move(in)) {}

    std::shared_ptr<Queue> out_;
    std::shared_ptr<Queue> in_;
};

} // namespace apcr
