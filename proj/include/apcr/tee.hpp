#pragma once

#include "apcr/bytes.hpp"
#include "apcr/crypto.hpp"
#include "apcr/errors.hpp"

namespace apcr::crypto {

namespace detail {
inline constexpr const char kKeyAttestLabel[] = "apcr-key-attest-v1";

inline Bytes keyAttestPreimage(const Digest& h) {
    Bytes m = to_bytes(kKeyAttestLabel);
    append(m, h.view());
    return m;
}
} // namespace detail

/// Statement by the attester's TEE that the key with the given digest lives
/// inside it. Encoded as digest || u16 len || envelope.
struct KeyAttestation {
    Digest attestedDigest;
    Bytes envelope;

    Bytes encode() const {
        Bytes out;
        append(out, attestedDigest.view());
        append_u16be(out, static_cast<uint16_t>(envelope.size()));
        append(out, envelope);
        return out;
    }

    static KeyAttestation decode(BytesView in) {
        if (in.size() < kDigestLen + 2)
            throw FormatError("KeyAttestation: too short");
        KeyAttestation out;
        out.attestedDigest = Digest::fromBytes(in.subspan(0, kDigestLen));
        size_t len = read_u16be(in, kDigestLen);
        if (in.size() != kDigestLen + 2 + len)
            throw FormatError("KeyAttestation: length mismatch");
        out.envelope.assign(in.begin() + kDigestLen + 2, in.end());
        return out;
    }

    bool operator==(const KeyAttestation& o) const = default;
};

/// Software stand-in for the attester's trusted execution environment. Holds
/// the device signing identity (SK_A, PK_A) and produces key attestations
/// with it. Not thread-safe; one caller at a time.
class TeeFacility {
public:
    explicit TeeFacility(SigKeyPair identity) : identity_(std::move(identity)) {}

    static TeeFacility provision(Rng& rng) {
        return TeeFacility(SigKeyPair::generate(rng));
    }

    const SigPublicKey& publicKey() const { return identity_.pub; }

    /// Models evidence-generation failure when the facility is switched off.
    void setAvailable(bool available) { available_ = available; }

    KeyAttestation attestKey(const Digest& h) {
        if (!available_)
            throw AttestationError("tee unavailable");
        calllog::record("attestKey");
        KeyAttestation ak;
        ak.attestedDigest = h;
        ak.envelope = sign(detail::keyAttestPreimage(h), identity_);
        return ak;
    }

    /// Evidence signature under the device identity, protocol step (7).
    Bytes signEvidence(BytesView ev) {
        if (!available_)
            throw AttestationError("tee unavailable");
        return sign(ev, identity_);
    }

private:
    SigKeyPair identity_;
    bool available_ = true;
};

/// Returns the vouched digest; the caller supplies the TEE key it trusts.
inline Digest validateKeyAttestation(const KeyAttestation& ak,
                                     const SigPublicKey& teePk) {
    try {
        checksig(ak.envelope, detail::keyAttestPreimage(ak.attestedDigest),
                 teePk);
    } catch (const SignatureError&) {
        calllog::record("validateKeyAttestation:fail");
        throw AttestationError("key attestation envelope rejected");
    }
    calllog::record("validateKeyAttestation");
    return ak.attestedDigest;
}

} // namespace apcr::crypto
