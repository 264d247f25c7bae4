#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

#include "apcr/channel.hpp"
#include "apcr/crypto.hpp"
#include "apcr/kdc.hpp"
#include "apcr/policy.hpp"
#include "apcr/roles.hpp"
#include "apcr/wire.hpp"

namespace apcr::demo {

enum class Variant { Lpm, Kdc };

inline Variant variantFromString(std::string_view s) {
    if (s == "lpm") return Variant::Lpm;
    if (s == "kdc") return Variant::Kdc;
    throw ArgumentError("variant must be lpm or kdc");
}

using Logger = std::function<void(const std::string&)>;
inline void nullLogger(const std::string&) {}

// ---------------------------------------------------------------------------
// Demo message formats
// ---------------------------------------------------------------------------

inline constexpr size_t kDoorKeyLen = 96;
/// 13-byte nonce + 96-byte body + 10-byte tag.
inline constexpr size_t kKeyMaterialMsgLen = kDoorKeyLen + crypto::kAeadOverhead;
/// 1-byte app id + 16-byte request nonce.
inline constexpr size_t kKeyRequestPayloadLen = 1 + crypto::kNonceLen;
/// Type byte + 2-byte length + payload: 20 bytes on the wire.
inline constexpr size_t kKeyRequestFrameLen =
    wire::kFrameHeaderLen + kKeyRequestPayloadLen;

struct KeyRequest {
    uint8_t appId = 0;
    crypto::Nonce128 nonce;
};

inline Bytes encodeKeyRequest(const KeyRequest& req) {
    Bytes out{req.appId};
    append(out, req.nonce.view());
    return out;
}

inline KeyRequest decodeKeyRequest(BytesView in) {
    if (in.size() != kKeyRequestPayloadLen)
        throw FormatError("key request: must be 17 bytes");
    KeyRequest out;
    out.appId = in[0];
    out.nonce = crypto::Nonce128::fromBytes(in.subspan(1));
    return out;
}

/// Encrypted door key; approved and denied responses are size-identical.
inline Bytes encodeKeyMaterial(BytesView doorKey, const crypto::SymKey& key,
                               Rng& rng) {
    if (doorKey.size() != kDoorKeyLen)
        throw ArgumentError("door key must be 96 bytes");
    return crypto::senc(doorKey, key, rng).serialize();
}

inline Bytes encodeDummyKeyMaterial(Rng& rng) {
    auto throwaway = crypto::SymKey::random(rng);
    return crypto::senc(rng.bytes(kDoorKeyLen), throwaway, rng).serialize();
}

inline std::optional<Bytes> decodeKeyMaterial(BytesView msg,
                                              const crypto::SymKey& key) {
    if (msg.size() != kKeyMaterialMsgLen) return std::nullopt;
    try {
        return crypto::sdec(crypto::AeadCiphertext::parse(msg), key);
    } catch (const IntegrityError&) {
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Key directory: one hex file per secret, metrics and policy as text.
// ---------------------------------------------------------------------------

inline Bytes readHexFile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open key file: " + path.string());
    std::string hex;
    in >> hex;
    return from_hex(hex);
}

inline std::string readTextFile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void writeHexFile(const std::filesystem::path& path, BytesView data) {
    std::ofstream out(path);
    out << to_hex(data) << "\n";
}

inline Metrics parseMetricsText(std::string_view text) {
    Metrics m;
    std::istringstream stream{std::string(text)};
    std::string line;
    while (std::getline(stream, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string claim, hex;
        if (!(fields >> claim)) continue;
        if (!(fields >> hex))
            throw FormatError("metrics: claim without value: " + claim);
        m.claims[claim] = from_hex(hex);
    }
    return m;
}

/// Writes a mutually consistent set of demo credentials: metrics match the
/// policy, the RP's attester id is derived from the generated keys.
inline void generateKeyDir(const std::filesystem::path& dir, Rng& rng) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    auto kA = crypto::SymKey::random(rng);
    auto kV = crypto::SymKey::random(rng);
    auto attesterSig = crypto::SigKeyPair::generate(rng);
    auto attesterKem = crypto::KemKeyPair::generate(rng);
    auto verifierSig = crypto::SigKeyPair::generate(rng);
    auto verifierKem = crypto::KemKeyPair::generate(rng);

    auto h = crypto::sha256(kA.view());
    auto idA = crypto::attesterId(
        h, {attesterSig.pub.data(), attesterSig.pub.size()});

    writeHexFile(dir / "k_a.hex", kA.view());
    writeHexFile(dir / "k_v.hex", kV.view());
    writeHexFile(dir / "id_a.hex", {idA.data(), idA.size()});
    writeHexFile(dir / "door_key.hex", rng.bytes(kDoorKeyLen));
    writeHexFile(dir / "attester_sig.hex", attesterSig.secretView());
    writeHexFile(dir / "attester_sig.pub",
                 {attesterSig.pub.data(), attesterSig.pub.size()});
    writeHexFile(dir / "attester_kem.hex", attesterKem.secretView());
    writeHexFile(dir / "attester_kem.pub",
                 {attesterKem.pub.data(), attesterKem.pub.size()});
    writeHexFile(dir / "verifier_sig.hex", verifierSig.secretView());
    writeHexFile(dir / "verifier_sig.pub",
                 {verifierSig.pub.data(), verifierSig.pub.size()});
    writeHexFile(dir / "verifier_kem.hex", verifierKem.secretView());
    writeHexFile(dir / "verifier_kem.pub",
                 {verifierKem.pub.data(), verifierKem.pub.size()});

    Bytes bootHash = rng.bytes(32);
    Bytes appHash = rng.bytes(32);
    std::ofstream metrics(dir / "metrics.txt");
    metrics << "boot-hash " << to_hex(bootHash) << "\n";
    metrics << "fw-version " << to_hex(to_bytes("4.2.0")) << "\n";
    metrics << "app-hash " << to_hex(appHash) << "\n";
    std::ofstream policyFile(dir / "policy.txt");
    policyFile << "boot-hash " << to_hex(bootHash) << "\n";
    policyFile << "fw-version " << to_hex(to_bytes("4.2.0")) << "\n";
    policyFile << "app-hash " << to_hex(appHash) << "\n";
}

struct RpKeys {
    crypto::SymKey kA;
    crypto::SymKey kV;
    crypto::Id16 idA{};
    Bytes doorKey;

    static RpKeys load(const std::filesystem::path& dir) {
        RpKeys out;
        out.kA = crypto::SymKey::fromBytes(readHexFile(dir / "k_a.hex"));
        out.kV = crypto::SymKey::fromBytes(readHexFile(dir / "k_v.hex"));
        auto id = readHexFile(dir / "id_a.hex");
        if (id.size() != out.idA.size())
            throw FormatError("id_a.hex must hold 16 bytes");
        std::copy(id.begin(), id.end(), out.idA.begin());
        out.doorKey = readHexFile(dir / "door_key.hex");
        if (out.doorKey.size() != kDoorKeyLen)
            throw FormatError("door_key.hex must hold 96 bytes");
        return out;
    }
};

struct AttesterKeys {
    crypto::SymKey kA;
    crypto::SigKeyPair sig;
    crypto::KemKeyPair kem;           // kdc variant
    crypto::SigPublicKey verifierSigPk{};  // kdc variant
    crypto::KemPublicKey verifierKemPk{};
    Metrics metrics;

    static AttesterKeys load(const std::filesystem::path& dir) {
        AttesterKeys out;
        out.kA = crypto::SymKey::fromBytes(readHexFile(dir / "k_a.hex"));
        out.sig = crypto::SigKeyPair::fromSecret(
            readHexFile(dir / "attester_sig.hex"));
        out.kem = crypto::KemKeyPair::fromSecret(
            readHexFile(dir / "attester_kem.hex"));
        auto vsig = readHexFile(dir / "verifier_sig.pub");
        auto vkem = readHexFile(dir / "verifier_kem.pub");
        if (vsig.size() != 32 || vkem.size() != 32)
            throw FormatError("verifier public keys must hold 32 bytes");
        std::copy(vsig.begin(), vsig.end(), out.verifierSigPk.begin());
        std::copy(vkem.begin(), vkem.end(), out.verifierKemPk.begin());
        out.metrics = parseMetricsText(readTextFile(dir / "metrics.txt"));
        return out;
    }
};

struct VerifierKeys {
    crypto::SymKey kV;
    crypto::SigKeyPair sig;  // kdc variant
    crypto::KemKeyPair kem;
    crypto::SigPublicKey attesterSigPk{};
    crypto::KemPublicKey attesterKemPk{};  // kdc variant
    policy::ReferencePolicy policy;

    static VerifierKeys load(const std::filesystem::path& dir,
                             const std::filesystem::path& policyFile) {
        VerifierKeys out;
        out.kV = crypto::SymKey::fromBytes(readHexFile(dir / "k_v.hex"));
        out.sig = crypto::SigKeyPair::fromSecret(
            readHexFile(dir / "verifier_sig.hex"));
        out.kem = crypto::KemKeyPair::fromSecret(
            readHexFile(dir / "verifier_kem.hex"));
        auto asig = readHexFile(dir / "attester_sig.pub");
        auto akem = readHexFile(dir / "attester_kem.pub");
        if (asig.size() != 32 || akem.size() != 32)
            throw FormatError("attester public keys must hold 32 bytes");
        std::copy(asig.begin(), asig.end(), out.attesterSigPk.begin());
        std::copy(akem.begin(), akem.end(), out.attesterKemPk.begin());
        out.policy = policy::ReferencePolicy::parse(readTextFile(policyFile));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Role drivers. The same functions back the executables, the loopback tests
// and the transport-transparency check.
// ---------------------------------------------------------------------------

using apcr::kDemoVerifierId;

struct RpStats {
    bool accepted = false;
    roles::Decision decision = roles::Decision::NoTrust;
    std::optional<roles::RejectReason> reason;
    bool sentRealKey = false;
    /// Accounting convention: protocol messages count their payload, the
    /// key-transfer request counts its whole 20-byte frame.
    size_t bytesSent = 0;
    size_t bytesReceived = 0;
};

inline std::optional<wire::Frame> recvType(Channel& ch, uint8_t type,
                                           std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) return std::nullopt;
        auto frame = ch.recv(remaining);
        if (!frame) return std::nullopt;
        if (frame->type == type) return frame;
        // Unexpected types are dropped; the freshness timeout recovers.
    }
}

inline RpStats rpServeOnce(Channel& ch, const RpKeys& keys, Variant variant,
                           Rng& rng, std::chrono::milliseconds timeout,
                           const Logger& log = nullLogger) {
    RpStats stats;
    auto request = recvType(ch, wire::kKeyTransferRequest, timeout);
    if (!request) {
        log("no key transfer request before timeout");
        return stats;
    }
    decodeKeyRequest(request->payload);  // validates the 17-byte layout
    stats.bytesReceived += wire::kFrameHeaderLen + request->payload.size();
    log("key transfer request received, starting attestation");

    std::optional<EarResult> result;
    std::optional<crypto::SymKey> transferKey;

    if (variant == Variant::Lpm) {
        roles::RpSession rp({keys.kA, keys.kV, keys.idA, {}});
        auto cha = rp.createChallenge(rng);
        log("(1) nonce generated (2) challenge encrypted under K_V");
        ch.send({wire::kChallenge, cha.bytes()});
        stats.bytesSent += cha.bytes().size();
        log("message (a) sent, " + std::to_string(cha.bytes().size()) +
            " bytes");

        auto res = recvType(ch, wire::kResultToRp, timeout);
        if (!res) {
            log("no result before timeout, aborting run");
            return stats;
        }
        stats.bytesReceived += res->payload.size();
        auto outcome = rp.processResultBytes(res->payload);
        if (std::holds_alternative<roles::Verdict>(outcome)) {
            auto& v = std::get<roles::Verdict>(outcome);
            stats.accepted = true;
            stats.decision = v.decision;
            result = v.result;
            transferKey = keys.kA;
            log("(16) Res decrypted (17) c and id match (18) verdict " +
                std::string(to_string(v.result.verdict)));
        } else {
            stats.reason = std::get<roles::RejectReason>(outcome);
            log(std::string("result rejected: ") +
                roles::to_string(*stats.reason));
        }
    } else {
        auto announce = recvType(ch, wire::kKdcHashAnnounce, timeout);
        if (!announce) {
            log("no hash announce before timeout");
            return stats;
        }
        stats.bytesReceived += announce->payload.size();
        kdc::KdcRpSession rp({keys.kV, {}});
        auto h = wire::decodeHashAnnounce(announce->payload);
        auto cha = rp.createChallenge(h, rng);
        log("(1) nonce generated (2) challenge over (c, h) encrypted");
        ch.send({wire::kKdcChallenge, cha.bytes()});
        stats.bytesSent += cha.bytes().size();

        auto res = recvType(ch, wire::kKdcResultToRp, timeout);
        if (!res) {
            log("no result before timeout, aborting run");
            return stats;
        }
        stats.bytesReceived += res->payload.size();
        auto outcome = rp.finishBytes(res->payload);
        if (std::holds_alternative<kdc::KdcVerdict>(outcome)) {
            auto& v = std::get<kdc::KdcVerdict>(outcome);
            stats.accepted = true;
            stats.decision = v.decision;
            result = v.result;
            transferKey = v.kS;
            log("(17) Res_RP decrypted (18) c and h match (19) verdict " +
                std::string(to_string(v.result.verdict)));
        } else {
            stats.reason = std::get<roles::RejectReason>(outcome);
            log(std::string("result rejected: ") +
                roles::to_string(*stats.reason));
        }
    }

    // Same-size response whether the transfer is approved or denied.
    Bytes keyMsg;
    if (stats.accepted && stats.decision == roles::Decision::Trust) {
        keyMsg = encodeKeyMaterial(keys.doorKey, *transferKey, rng);
        stats.sentRealKey = true;
        log("releasing encrypted key material");
    } else {
        keyMsg = encodeDummyKeyMaterial(rng);
        log("trust not established, sending dummy of equal size");
    }
    ch.send({wire::kKeyMaterial, keyMsg});
    stats.bytesSent += keyMsg.size();
    log("sent " + std::to_string(stats.bytesSent) + " bytes, received " +
        std::to_string(stats.bytesReceived) + " bytes this run");
    return stats;
}

struct AttesterStats {
    bool keyObtained = false;
    Bytes doorKey;
    /// Elapsed request->challenge and forward->key-material, for the
    /// benchmark's protocol-cost experiment.
    std::chrono::microseconds legRequestToChallenge{0};
    std::chrono::microseconds legForwardToKey{0};
};

inline AttesterStats attesterRunOnce(Channel& rpCh, Channel& verCh,
                                     const AttesterKeys& keys, Variant variant,
                                     Rng& rng,
                                     std::chrono::milliseconds timeout,
                                     const Logger& log = nullLogger) {
    using Clock = std::chrono::steady_clock;
    AttesterStats stats;
    crypto::TeeFacility tee(keys.sig);

    KeyRequest request{0x4B, crypto::randNonce(rng)};
    auto collect = [&] { return keys.metrics; };

    auto t0 = Clock::now();
    rpCh.send({wire::kKeyTransferRequest, encodeKeyRequest(request)});
    log("key transfer request sent (" +
        std::to_string(kKeyRequestFrameLen) + " bytes on the wire)");

    std::optional<wire::Frame> resForRp;
    std::optional<crypto::SymKey> sessionKey;

    if (variant == Variant::Lpm) {
        roles::AttesterSession session({keys.kA, keys.verifierKemPk}, tee);
        auto chaFrame = recvType(rpCh, wire::kChallenge, timeout);
        if (!chaFrame) {
            log("no challenge before timeout");
            return stats;
        }
        stats.legRequestToChallenge =
            std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                                  t0);
        auto cha = wire::ChallengeMsg::parse(chaFrame->payload);
        log("(3) challenge received, opaque under K_V");
        auto ev = session.handleChallenge(cha, collect, rng);
        log("(4) key attestation (5) metrics (6) encrypted (7) signed");
        verCh.send({wire::kEvidence, ev.bytes()});

        auto res = recvType(verCh, wire::kResultToAttester, timeout);
        if (!res) {
            log("no verifier result before timeout");
            return stats;
        }
        auto fwd = session.forwardResult(wire::ResultMsg::parse(res->payload));
        resForRp = wire::Frame{wire::kResultToRp, fwd.bytes()};
    } else {
        kdc::KdcAttesterSession session(
            {keys.kem, keys.verifierSigPk, keys.verifierKemPk}, tee);
        auto h = session.announce();
        rpCh.send({wire::kKdcHashAnnounce, wire::encodeHashAnnounce(h)});
        log("(a) hash of PK_A announced");

        auto chaFrame = recvType(rpCh, wire::kKdcChallenge, timeout);
        if (!chaFrame) {
            log("no challenge before timeout");
            return stats;
        }
        stats.legRequestToChallenge =
            std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                                  t0);
        auto cha = wire::KdcChallengeMsg::parse(chaFrame->payload);
        auto ev = session.createEvidence(cha, collect, rng);
        log("(3) metrics (4) evidence encrypted (5) signed");
        verCh.send({wire::kKdcEvidence, ev.bytes()});

        auto res = recvType(verCh, wire::kKdcResultToAttester, timeout);
        if (!res) {
            log("no verifier result before timeout");
            return stats;
        }
        try {
            auto resRp = session.unwrapResult(
                wire::KdcResultToAttesterMsg::parse(res->payload));
            log("(15) delta_V checked (16) Res_A opened, K_S held");
            resForRp = wire::Frame{wire::kKdcResultToRp, resRp.bytes()};
        } catch (const Error& e) {
            log(std::string("result rejected: ") + e.what());
            return stats;
        }
        // Application traffic is secured with the session key from here on.
        sessionKey = session.sessionKey();
    }

    auto t1 = Clock::now();
    rpCh.send(*resForRp);
    log("message (d) forwarded byte-identical, " +
        std::to_string(resForRp->payload.size()) + " bytes");

    auto keyFrame = recvType(rpCh, wire::kKeyMaterial, timeout);
    if (!keyFrame) {
        log("no key material before timeout");
        return stats;
    }
    stats.legForwardToKey =
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t1);

    const crypto::SymKey& unwrapKey =
        variant == Variant::Lpm ? keys.kA : *sessionKey;
    auto doorKey = decodeKeyMaterial(keyFrame->payload, unwrapKey);
    if (doorKey) {
        stats.keyObtained = true;
        stats.doorKey = *doorKey;
        log("door key decrypted, " +
            std::to_string(doorKey->size()) + " bytes");
    } else {
        log("key material not decryptable, transfer was denied");
    }
    return stats;
}

struct VerifierStats {
    bool served = false;
    std::optional<roles::AbortReason> abort;
};

inline VerifierStats verifierServeOnce(Channel& ch, const VerifierKeys& keys,
                                       Variant variant, Rng& rng,
                                       std::chrono::milliseconds timeout,
                                       const Logger& log = nullLogger) {
    VerifierStats stats;
    uint64_t now = static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());

    if (variant == Variant::Lpm) {
        roles::VerifierContext ctx({keys.kem, kDemoVerifierId, "1.0.0",
                                    keys.policy});
        ctx.trustAttester(keys.attesterSigPk);
        ctx.registerRpKey(keys.kV);
        auto frame = recvType(ch, wire::kEvidence, timeout);
        if (!frame) {
            log("no evidence before timeout");
            return stats;
        }
        log("evidence received");
        wire::EvidenceMsg ev;
        try {
            ev = wire::EvidenceMsg::parse(frame->payload);
        } catch (const FormatError&) {
            log("evidence unparseable, dropped");
            return stats;
        }
        auto out = ctx.processEvidence(ev, rng, now);
        if (std::holds_alternative<roles::VerifierContext::Output>(out)) {
            auto& res = std::get<roles::VerifierContext::Output>(out);
            log("(8)-(14) checks passed, verdict " +
                std::string(to_string(res.ear.verdict)) +
                " (15) result encrypted");
            ch.send({wire::kResultToAttester, res.res.bytes()});
            stats.served = true;
        } else {
            stats.abort = std::get<roles::AbortReason>(out);
            log(std::string("aborted at first failing step: ") +
                roles::to_string(*stats.abort));
        }
    } else {
        kdc::KdcVerifierContext ctx({keys.sig, keys.kem, kDemoVerifierId,
                                     "1.0.0", keys.policy});
        ctx.trustAttester(keys.attesterSigPk, keys.attesterKemPk);
        ctx.registerRpKey(keys.kV);
        auto frame = recvType(ch, wire::kKdcEvidence, timeout);
        if (!frame) {
            log("no evidence before timeout");
            return stats;
        }
        wire::KdcEvidenceMsg ev;
        try {
            ev = wire::KdcEvidenceMsg::parse(frame->payload);
        } catch (const FormatError&) {
            log("evidence unparseable, dropped");
            return stats;
        }
        auto out = ctx.processEvidence(ev, rng, now);
        if (std::holds_alternative<kdc::KdcVerifierContext::Output>(out)) {
            auto& res = std::get<kdc::KdcVerifierContext::Output>(out);
            log("(6)-(11) checks passed, session key generated, "
                "(12)-(14) results wrapped and signed");
            ch.send({wire::kKdcResultToAttester, res.resA.bytes()});
            stats.served = true;
        } else {
            stats.abort = std::get<roles::AbortReason>(out);
            log(std::string("aborted at first failing step: ") +
                roles::to_string(*stats.abort));
        }
    }
    return stats;
}

} // namespace apcr::demo
