#pragma once

#include <functional>

#include "apcr/bytes.hpp"
#include "apcr/crypto.hpp"
#include "apcr/ear.hpp"
#include "apcr/errors.hpp"
#include "apcr/metrics.hpp"
#include "apcr/tee.hpp"

namespace apcr::wire {

// ---------------------------------------------------------------------------
// Transport framing: 1-byte message type, 2-byte big-endian length, payload.
// ---------------------------------------------------------------------------

enum MsgType : uint8_t {
    kChallenge = 0xA1,
    kEvidence = 0xA2,
    kResultToAttester = 0xA3,
    kResultToRp = 0xA4,
    kKdcHashAnnounce = 0xB0,
    kKdcChallenge = 0xB1,
    kKdcEvidence = 0xB2,
    kKdcResultToAttester = 0xB3,
    kKdcResultToRp = 0xB4,
    kKeyTransferRequest = 0xC0,
    kKeyMaterial = 0xC1,
};

inline constexpr size_t kFrameHeaderLen = 3;

struct Frame {
    uint8_t type = 0;
    Bytes payload;

    bool operator==(const Frame& o) const = default;
};

inline Bytes encodeFrame(const Frame& f) {
    if (f.payload.size() > 0xffff)
        throw ArgumentError("frame payload too large");
    Bytes out;
    out.reserve(kFrameHeaderLen + f.payload.size());
    out.push_back(f.type);
    append_u16be(out, static_cast<uint16_t>(f.payload.size()));
    append(out, f.payload);
    return out;
}

inline Frame decodeFrame(BytesView in) {
    if (in.size() < kFrameHeaderLen)
        throw FormatError("frame: missing header");
    size_t declared = read_u16be(in, 1);
    if (in.size() != kFrameHeaderLen + declared)
        throw FormatError("frame: declared length does not match payload");
    Frame f;
    f.type = in[0];
    f.payload.assign(in.begin() + kFrameHeaderLen, in.end());
    return f;
}

// ---------------------------------------------------------------------------
// Length-prefixed tuple helpers (2-byte big-endian lengths for variable
// parts, fixed-size fields raw).
// ---------------------------------------------------------------------------

namespace detail {

inline void putVar(Bytes& out, BytesView part) {
    if (part.size() > 0xffff)
        throw ArgumentError("tuple part too large");
    append_u16be(out, static_cast<uint16_t>(part.size()));
    append(out, part);
}

struct TupleReader {
    BytesView in;
    size_t pos = 0;

    Bytes var() {
        size_t len = read_u16(*this);
        if (pos + len > in.size())
            throw FormatError("tuple: truncated variable field");
        Bytes out(in.begin() + pos, in.begin() + pos + len);
        pos += len;
        return out;
    }

    Bytes fixed(size_t len) {
        if (pos + len > in.size())
            throw FormatError("tuple: truncated fixed field");
        Bytes out(in.begin() + pos, in.begin() + pos + len);
        pos += len;
        return out;
    }

    void done() const {
        if (pos != in.size())
            throw FormatError("tuple: trailing octets");
    }

private:
    static size_t read_u16(TupleReader& r) {
        if (r.pos + 2 > r.in.size())
            throw FormatError("tuple: missing length prefix");
        size_t v = read_u16be(r.in, r.pos);
        r.pos += 2;
        return v;
    }
};

} // namespace detail

inline crypto::Id16 signerKeyId(const crypto::SigPublicKey& pk) {
    auto d = crypto::sha256({pk.data(), pk.size()});
    crypto::Id16 id;
    std::memcpy(id.data(), d.d.data(), id.size());
    return id;
}

// ---------------------------------------------------------------------------
// Message (a): challenge Cha = senc(c || id, K_V). 55 bytes on the wire.
// ---------------------------------------------------------------------------

inline constexpr size_t kChallengePlainLen = crypto::kNonceLen + crypto::kIdLen;
inline constexpr size_t kChallengeMsgLen =
    kChallengePlainLen + crypto::kAeadOverhead;  // 55

struct ChallengeMsg {
    crypto::AeadCiphertext cha;

    Bytes bytes() const { return cha.serialize(); }

    static ChallengeMsg parse(BytesView in) {
        if (in.size() != kChallengeMsgLen)
            throw FormatError("ChallengeMsg: must be exactly 55 bytes");
        return ChallengeMsg{crypto::AeadCiphertext::parse(in)};
    }

    bool operator==(const ChallengeMsg& o) const = default;
};

struct ChallengeContent {
    crypto::Nonce128 c;
    crypto::Id16 id{};
};

inline ChallengeMsg encodeChallenge(const crypto::Nonce128& c,
                                    const crypto::Id16& id,
                                    const crypto::SymKey& kV, Rng& rng) {
    Bytes plain = concat({c.view(), {id.data(), id.size()}});
    return ChallengeMsg{crypto::senc(plain, kV, rng)};
}

inline ChallengeContent decodeChallenge(const ChallengeMsg& msg,
                                        const crypto::SymKey& kV) {
    Bytes plain = crypto::sdec(msg.cha, kV);
    if (plain.size() != kChallengePlainLen)
        throw FormatError("ChallengeMsg: plaintext must be 32 bytes");
    ChallengeContent out;
    out.c = crypto::Nonce128::fromBytes({plain.data(), crypto::kNonceLen});
    std::memcpy(out.id.data(), plain.data() + crypto::kNonceLen,
                crypto::kIdLen);
    return out;
}

// ---------------------------------------------------------------------------
// Message (b): evidence Ev = aenc((AK, M_A, Cha), PK_V'), signed with SK_A.
// Framed with the signer key id so the verifier can select PK_A.
// ---------------------------------------------------------------------------

struct EvidenceMsg {
    crypto::Id16 signerKeyId{};
    crypto::HybridCiphertext ev;
    Bytes sig;

    Bytes bytes() const {
        Bytes out;
        append(out, {signerKeyId.data(), signerKeyId.size()});
        detail::putVar(out, ev.serialize());
        detail::putVar(out, sig);
        return out;
    }

    static EvidenceMsg parse(BytesView in) {
        detail::TupleReader r{in};
        EvidenceMsg out;
        Bytes id = r.fixed(crypto::kIdLen);
        std::memcpy(out.signerKeyId.data(), id.data(), id.size());
        out.ev = crypto::HybridCiphertext::parse(r.var());
        out.sig = r.var();
        r.done();
        return out;
    }

    bool operator==(const EvidenceMsg& o) const = default;
};

struct EvidenceContent {
    crypto::KeyAttestation ak;
    Metrics mA;
    ChallengeMsg cha;
};

using EvidenceSigner = std::function<Bytes(BytesView)>;

inline EvidenceMsg encodeEvidence(const crypto::KeyAttestation& ak,
                                  const Metrics& mA, const ChallengeMsg& cha,
                                  const crypto::KemPublicKey& pkV,
                                  const EvidenceSigner& signWith,
                                  const crypto::SigPublicKey& signerPk,
                                  Rng& rng) {
    Bytes plain;
    detail::putVar(plain, ak.encode());
    detail::putVar(plain, mA.encode());
    detail::putVar(plain, cha.bytes());
    EvidenceMsg out;
    out.signerKeyId = signerKeyId(signerPk);
    out.ev = crypto::aenc(plain, pkV, rng);
    out.sig = signWith(out.ev.serialize());
    return out;
}

inline EvidenceMsg encodeEvidence(const crypto::KeyAttestation& ak,
                                  const Metrics& mA, const ChallengeMsg& cha,
                                  const crypto::KemPublicKey& pkV,
                                  const crypto::SigKeyPair& skA, Rng& rng) {
    return encodeEvidence(
        ak, mA, cha, pkV,
        [&skA](BytesView m) { return crypto::sign(m, skA); }, skA.pub, rng);
}

/// Signature check precedes any decryption attempt.
inline EvidenceContent decodeEvidence(const EvidenceMsg& msg,
                                      const crypto::KemKeyPair& skV,
                                      const crypto::SigPublicKey& pkA) {
    crypto::checksig(msg.sig, msg.ev.serialize(), pkA);
    Bytes plain = crypto::adec(msg.ev, skV);
    detail::TupleReader r{plain};
    EvidenceContent out;
    out.ak = crypto::KeyAttestation::decode(r.var());
    out.mA = Metrics::decode(r.var());
    out.cha = ChallengeMsg::parse(r.var());
    r.done();
    return out;
}

// ---------------------------------------------------------------------------
// Messages (c)/(d): Res = senc((R_A, c, id_Cha), K_V), relayed verbatim.
// ---------------------------------------------------------------------------

struct ResultMsg {
    crypto::AeadCiphertext res;

    Bytes bytes() const { return res.serialize(); }

    static ResultMsg parse(BytesView in) {
        return ResultMsg{crypto::AeadCiphertext::parse(in)};
    }

    bool operator==(const ResultMsg& o) const = default;
};

struct ResultContent {
    EarResult r;
    crypto::Nonce128 c;
    crypto::Id16 idCha{};
};

inline ResultMsg encodeResult(const EarResult& r, const crypto::Nonce128& c,
                              const crypto::Id16& idCha,
                              const crypto::SymKey& kV, Rng& rng) {
    Bytes plain;
    detail::putVar(plain, encodeEar(r));
    append(plain, c.view());
    append(plain, {idCha.data(), idCha.size()});
    return ResultMsg{crypto::senc(plain, kV, rng)};
}

inline ResultContent decodeResult(const ResultMsg& msg,
                                  const crypto::SymKey& kV) {
    Bytes plain = crypto::sdec(msg.res, kV);
    detail::TupleReader r{plain};
    ResultContent out;
    out.r = decodeEar(r.var());
    out.c = crypto::Nonce128::fromBytes(r.fixed(crypto::kNonceLen));
    Bytes id = r.fixed(crypto::kIdLen);
    std::memcpy(out.idCha.data(), id.data(), id.size());
    r.done();
    return out;
}

// ---------------------------------------------------------------------------
// Key-distribution variant messages (0xB0..0xB4).
// ---------------------------------------------------------------------------

/// Message (a): hash announce, the raw 32-byte digest of PK_A.
inline Bytes encodeHashAnnounce(const crypto::Digest& h) {
    return Bytes(h.view().begin(), h.view().end());
}

inline crypto::Digest decodeHashAnnounce(BytesView in) {
    if (in.size() != crypto::kDigestLen)
        throw FormatError("hash announce: must be 32 bytes");
    return crypto::Digest::fromBytes(in);
}

/// Message (b): Cha = senc(c || h, K_V). 71 bytes on the wire.
inline constexpr size_t kKdcChallengePlainLen =
    crypto::kNonceLen + crypto::kDigestLen;
inline constexpr size_t kKdcChallengeMsgLen =
    kKdcChallengePlainLen + crypto::kAeadOverhead;  // 71

struct KdcChallengeMsg {
    crypto::AeadCiphertext cha;

    Bytes bytes() const { return cha.serialize(); }

    static KdcChallengeMsg parse(BytesView in) {
        if (in.size() != kKdcChallengeMsgLen)
            throw FormatError("KdcChallengeMsg: must be exactly 71 bytes");
        return KdcChallengeMsg{crypto::AeadCiphertext::parse(in)};
    }

    bool operator==(const KdcChallengeMsg& o) const = default;
};

struct KdcChallengeContent {
    crypto::Nonce128 c;
    crypto::Digest h;
};

inline KdcChallengeMsg encodeKdcChallenge(const crypto::Nonce128& c,
                                          const crypto::Digest& h,
                                          const crypto::SymKey& kV, Rng& rng) {
    Bytes plain = concat({c.view(), h.view()});
    return KdcChallengeMsg{crypto::senc(plain, kV, rng)};
}

inline KdcChallengeContent decodeKdcChallenge(const KdcChallengeMsg& msg,
                                              const crypto::SymKey& kV) {
    Bytes plain = crypto::sdec(msg.cha, kV);
    if (plain.size() != kKdcChallengePlainLen)
        throw FormatError("KdcChallengeMsg: plaintext must be 48 bytes");
    KdcChallengeContent out;
    out.c = crypto::Nonce128::fromBytes({plain.data(), crypto::kNonceLen});
    out.h = crypto::Digest::fromBytes(
        {plain.data() + crypto::kNonceLen, crypto::kDigestLen});
    return out;
}

/// Message (c): Ev = aenc((M_A, h, Cha), PK_V'), signature delta_A alongside.
struct KdcEvidenceMsg {
    crypto::Id16 signerKeyId{};
    crypto::HybridCiphertext ev;
    Bytes sig;

    Bytes bytes() const {
        Bytes out;
        append(out, {signerKeyId.data(), signerKeyId.size()});
        detail::putVar(out, ev.serialize());
        detail::putVar(out, sig);
        return out;
    }

    static KdcEvidenceMsg parse(BytesView in) {
        detail::TupleReader r{in};
        KdcEvidenceMsg out;
        Bytes id = r.fixed(crypto::kIdLen);
        std::memcpy(out.signerKeyId.data(), id.data(), id.size());
        out.ev = crypto::HybridCiphertext::parse(r.var());
        out.sig = r.var();
        r.done();
        return out;
    }

    bool operator==(const KdcEvidenceMsg& o) const = default;
};

struct KdcEvidenceContent {
    Metrics mA;
    crypto::Digest h;
    KdcChallengeMsg cha;
};

inline KdcEvidenceMsg encodeKdcEvidence(const Metrics& mA,
                                        const crypto::Digest& h,
                                        const KdcChallengeMsg& cha,
                                        const crypto::KemPublicKey& pkV,
                                        const EvidenceSigner& signWith,
                                        const crypto::SigPublicKey& signerPk,
                                        Rng& rng) {
    Bytes plain;
    detail::putVar(plain, mA.encode());
    append(plain, h.view());
    detail::putVar(plain, cha.bytes());
    KdcEvidenceMsg out;
    out.signerKeyId = signerKeyId(signerPk);
    out.ev = crypto::aenc(plain, pkV, rng);
    out.sig = signWith(out.ev.serialize());
    return out;
}

inline KdcEvidenceContent decodeKdcEvidence(const KdcEvidenceMsg& msg,
                                            const crypto::KemKeyPair& skV,
                                            const crypto::SigPublicKey& pkA) {
    crypto::checksig(msg.sig, msg.ev.serialize(), pkA);
    Bytes plain = crypto::adec(msg.ev, skV);
    detail::TupleReader r{plain};
    KdcEvidenceContent out;
    out.mA = Metrics::decode(r.var());
    out.h = crypto::Digest::fromBytes(r.fixed(crypto::kDigestLen));
    out.cha = KdcChallengeMsg::parse(r.var());
    r.done();
    return out;
}

/// Message (d): Res_A = aenc((Res_RP, K_S), PK_A'), signature delta_V.
struct KdcResultToAttesterMsg {
    crypto::HybridCiphertext resA;
    Bytes sigV;

    Bytes bytes() const {
        Bytes out;
        detail::putVar(out, resA.serialize());
        detail::putVar(out, sigV);
        return out;
    }

    static KdcResultToAttesterMsg parse(BytesView in) {
        detail::TupleReader r{in};
        KdcResultToAttesterMsg out;
        out.resA = crypto::HybridCiphertext::parse(r.var());
        out.sigV = r.var();
        r.done();
        return out;
    }

    bool operator==(const KdcResultToAttesterMsg& o) const = default;
};

/// Message (e): Res_RP = senc((R_A, c, h_RP, K_S), K_V).
struct KdcResultToRpMsg {
    crypto::AeadCiphertext res;

    Bytes bytes() const { return res.serialize(); }

    static KdcResultToRpMsg parse(BytesView in) {
        return KdcResultToRpMsg{crypto::AeadCiphertext::parse(in)};
    }

    bool operator==(const KdcResultToRpMsg& o) const = default;
};

struct KdcResultContent {
    EarResult r;
    crypto::Nonce128 c;
    crypto::Digest h;
    crypto::SymKey kS;
};

inline KdcResultToRpMsg encodeKdcResultToRp(const EarResult& r,
                                            const crypto::Nonce128& c,
                                            const crypto::Digest& h,
                                            const crypto::SymKey& kS,
                                            const crypto::SymKey& kV,
                                            Rng& rng) {
    Bytes plain;
    detail::putVar(plain, encodeEar(r));
    append(plain, c.view());
    append(plain, h.view());
    append(plain, kS.view());
    return KdcResultToRpMsg{crypto::senc(plain, kV, rng)};
}

inline KdcResultContent decodeKdcResultToRp(const KdcResultToRpMsg& msg,
                                            const crypto::SymKey& kV) {
    Bytes plain = crypto::sdec(msg.res, kV);
    detail::TupleReader r{plain};
    KdcResultContent out;
    out.r = decodeEar(r.var());
    out.c = crypto::Nonce128::fromBytes(r.fixed(crypto::kNonceLen));
    out.h = crypto::Digest::fromBytes(r.fixed(crypto::kDigestLen));
    out.kS = crypto::SymKey::fromBytes(r.fixed(crypto::kSymKeyLen));
    r.done();
    return out;
}

struct KdcResultToAttesterContent {
    KdcResultToRpMsg resRp;
    crypto::SymKey kS;
};

inline KdcResultToAttesterMsg encodeKdcResultToAttester(
    const KdcResultToRpMsg& resRp, const crypto::SymKey& kS,
    const crypto::KemPublicKey& pkA, const crypto::SigKeyPair& skV, Rng& rng) {
    Bytes plain;
    detail::putVar(plain, resRp.bytes());
    append(plain, kS.view());
    KdcResultToAttesterMsg out;
    out.resA = crypto::aenc(plain, pkA, rng);
    out.sigV = crypto::sign(out.resA.serialize(), skV);
    return out;
}

/// Signature check precedes decryption, mirroring the evidence path.
inline KdcResultToAttesterContent decodeKdcResultToAttester(
    const KdcResultToAttesterMsg& msg, const crypto::KemKeyPair& skA,
    const crypto::SigPublicKey& pkV) {
    crypto::checksig(msg.sigV, msg.resA.serialize(), pkV);
    Bytes plain = crypto::adec(msg.resA, skA);
    detail::TupleReader r{plain};
    KdcResultToAttesterContent out;
    out.resRp = KdcResultToRpMsg::parse(r.var());
    out.kS = crypto::SymKey::fromBytes(r.fixed(crypto::kSymKeyLen));
    r.done();
    return out;
}

} // namespace apcr::wire
