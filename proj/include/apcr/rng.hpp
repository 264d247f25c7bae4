#pragma once

#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cstdint>

#include "apcr/bytes.hpp"
#include "apcr/errors.hpp"

namespace apcr {

/// Entropy source. Protocol code draws all randomness through this so test
/// runs can be made fully deterministic.
class Rng {
public:
    virtual ~Rng() = default;
    virtual void fill(uint8_t* out, size_t len) = 0;

    Bytes bytes(size_t len) {
        Bytes out(len);
        if (len > 0) fill(out.data(), len);
        return out;
    }
};

/// CSPRNG backed by the OpenSSL entropy pool.
class SystemRng final : public Rng {
public:
    void fill(uint8_t* out, size_t len) override {
        if (len == 0) return;
        if (RAND_bytes(out, static_cast<int>(len)) != 1)
            throw CryptoBackendError("entropy source unavailable");
    }
};

/// Seeded SHA-256 counter generator for reproducible runs. Block i of the
/// stream is SHA-256("apcr-drbg" || u64be(seed) || u64be(i)). Not for
/// production keys.
class DeterministicRng final : public Rng {
public:
    explicit DeterministicRng(uint64_t seed) : seed_(seed) {}

    void fill(uint8_t* out, size_t len) override {
        while (len > 0) {
            if (pos_ == sizeof(block_)) refill();
            size_t take = std::min(len, sizeof(block_) - pos_);
            std::memcpy(out, block_ + pos_, take);
            pos_ += take;
            out += take;
            len -= take;
        }
    }

    /// Independent substream, for handing each protocol participant its own
    /// generator derived from one scenario seed.
    DeterministicRng fork(uint64_t label) const {
        return DeterministicRng(seed_ ^ (0x9e3779b97f4a7c15ull * (label + 1)));
    }

private:
    void refill() {
        Bytes preimage = to_bytes("apcr-drbg");
        append_u64be(preimage, seed_);
        append_u64be(preimage, counter_++);
        SHA256(preimage.data(), preimage.size(), block_);
        pos_ = 0;
    }

    uint64_t seed_;
    uint64_t counter_ = 0;
    uint8_t block_[32];
    size_t pos_ = sizeof(block_);
};

} // namespace apcr
