#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <utility>
#include <variant>
#include <vector>

#include "apcr/bytes.hpp"
#include "apcr/crypto.hpp"
#include "apcr/events.hpp"
#include "apcr/policy.hpp"
#include "apcr/roles.hpp"
#include "apcr/tee.hpp"
#include "apcr/wire.hpp"

namespace apcr::kdc {

using roles::AbortReason;
using roles::Decision;
using roles::MetricsProvider;
using roles::RejectReason;

/// Verdict plus the verifier-generated session key the RP ends up holding.
struct KdcVerdict {
    Decision decision = Decision::NoTrust;
    EarResult result;
    crypto::SymKey kS;
};

// ---------------------------------------------------------------------------
// Relying party, variant flow: challenge carries h = hash(PK_A) instead of a
// provisioned attester id; acceptance yields K_S.
// ---------------------------------------------------------------------------

class KdcRpSession {
public:
    enum class State { Idle, AwaitingResult, Accepted, Rejected };

    struct Config {
        crypto::SymKey kV;
        std::optional<uint64_t> timeoutTicks;
    };

    explicit KdcRpSession(Config cfg, ProtocolEvents* events = nullptr)
        : cfg_(std::move(cfg)), events_(events) {}

    State state() const { return state_; }

    /// Steps (1)-(2): Cha = senc(c || h, K_V), h from the announce message.
    wire::KdcChallengeMsg createChallenge(const crypto::Digest& h, Rng& rng,
                                          uint64_t now = 0) {
        if (state_ != State::Idle)
            throw StateError("KdcRpSession: challenge already outstanding");
        c_ = crypto::randNonce(rng);
        h_ = h;
        auto msg = wire::encodeKdcChallenge(*c_, h, cfg_.kV, rng);
        state_ = State::AwaitingResult;
        if (cfg_.timeoutTicks) deadline_ = now + *cfg_.timeoutTicks;
        if (events_) {
            Bytes octets = msg.bytes();
            events_->kdcRelyingPartyBegins(*c_, h, octets);
        }
        return msg;
    }

    /// Steps (17)-(19): open Res_RP, require c and h to match, keep K_S.
    std::variant<KdcVerdict, RejectReason> finish(
        const wire::KdcResultToRpMsg& msg, uint64_t now = 0) {
        if (state_ != State::AwaitingResult)
            throw StateError("KdcRpSession: no outstanding challenge");
        if (deadline_ && now > *deadline_)
            return reject(RejectReason::Timeout);
        wire::KdcResultContent content;
        try {
            content = wire::decodeKdcResultToRp(msg, cfg_.kV);
        } catch (const IntegrityError&) {
            return reject(RejectReason::TamperOrWrongVerifier);
        } catch (const FormatError&) {
            return reject(RejectReason::TamperOrWrongVerifier);
        }
        if (!(content.c == *c_))
            return reject(RejectReason::Replay);
        if (!(content.h == *h_))
            return reject(RejectReason::HashMismatch);
        KdcVerdict verdict;
        verdict.result = content.r;
        verdict.kS = content.kS;
        verdict.decision = content.r.verdict == EarVerdict::Affirming
                               ? Decision::Trust
                               : Decision::NoTrust;
        state_ = State::Accepted;
        verdict_ = verdict;
        if (events_) events_->kdcRelyingPartyAccepts(content.r, *c_, *h_);
        c_.reset();
        return verdict;
    }

    std::variant<KdcVerdict, RejectReason> finishBytes(BytesView octets,
                                                       uint64_t now = 0) {
        if (state_ != State::AwaitingResult)
            throw StateError("KdcRpSession: no outstanding challenge");
        wire::KdcResultToRpMsg msg;
        try {
            msg = wire::KdcResultToRpMsg::parse(octets);
        } catch (const FormatError&) {
            return reject(RejectReason::TamperOrWrongVerifier);
        }
        return finish(msg, now);
    }

    bool expire(uint64_t now) {
        if (state_ != State::AwaitingResult || !deadline_ || now <= *deadline_)
            return false;
        reject(RejectReason::Timeout);
        return true;
    }

    /// Populated only in Accepted.
    const std::optional<KdcVerdict>& verdict() const { return verdict_; }
    const std::optional<RejectReason>& rejectReason() const { return reason_; }

private:
    RejectReason reject(RejectReason r) {
        state_ = State::Rejected;
        reason_ = r;
        c_.reset();
        return r;
    }

    Config cfg_;
    ProtocolEvents* events_;
    State state_ = State::Idle;
    std::optional<crypto::Nonce128> c_;
    std::optional<crypto::Digest> h_;
    std::optional<uint64_t> deadline_;
    std::optional<KdcVerdict> verdict_;
    std::optional<RejectReason> reason_;
};

// ---------------------------------------------------------------------------
// Attester, variant flow: announces hash(PK_A), later unwraps Res_A to learn
// K_S and forwards Res_RP byte-identical.
// ---------------------------------------------------------------------------

class KdcAttesterSession {
public:
    enum class State { Idle, SentHash, AwaitingVerdict, Done };

    struct Config {
        crypto::KemKeyPair kemPair;  // (SK_A', PK_A')
        crypto::SigPublicKey verifierSigPk{};
        crypto::KemPublicKey verifierKemPk{};
    };

    KdcAttesterSession(Config cfg, crypto::TeeFacility& tee,
                       ProtocolEvents* events = nullptr)
        : cfg_(std::move(cfg)), tee_(tee), events_(events) {}

    State state() const { return state_; }
    const crypto::SigPublicKey& publicKey() const { return tee_.publicKey(); }
    const crypto::KemPublicKey& kemPublicKey() const { return cfg_.kemPair.pub; }

    /// Message (a): h = hash(PK_A).
    crypto::Digest announce() {
        if (state_ != State::Idle)
            throw StateError("KdcAttesterSession: already announced");
        state_ = State::SentHash;
        return keyHash();
    }

    /// Steps (3)-(5): Ev = aenc((M_A, h, Cha), PK_V'), delta_A = sign(Ev).
    wire::KdcEvidenceMsg createEvidence(const wire::KdcChallengeMsg& cha,
                                        const MetricsProvider& collect,
                                        Rng& rng) {
        if (state_ != State::SentHash)
            throw StateError("KdcAttesterSession: announce first");
        auto h = keyHash();
        Metrics mA = collect();
        auto msg = wire::encodeKdcEvidence(
            mA, h, cha, cfg_.verifierKemPk,
            [this](BytesView m) { return tee_.signEvidence(m); },
            tee_.publicKey(), rng);
        state_ = State::AwaitingVerdict;
        if (events_) {
            Bytes octets = cha.bytes();
            events_->kdcAttesterBegins(tee_.publicKey(), h, mA, octets);
        }
        return msg;
    }

    /// Steps (15)-(16): check delta_V, then decrypt Res_A to (Res_RP, K_S).
    /// Returns the Res_RP to forward, byte-identical to what was wrapped.
    wire::KdcResultToRpMsg unwrapResult(const wire::KdcResultToAttesterMsg& msg) {
        if (state_ != State::AwaitingVerdict)
            throw StateError("KdcAttesterSession: nothing to unwrap");
        auto content =
            wire::decodeKdcResultToAttester(msg, cfg_.kemPair, cfg_.verifierSigPk);
        state_ = State::Done;
        kS_ = content.kS;
        return content.resRp;
    }

    /// Populated only in Done.
    const std::optional<crypto::SymKey>& sessionKey() const { return kS_; }

private:
    crypto::Digest keyHash() const {
        const auto& pk = tee_.publicKey();
        return crypto::sha256({pk.data(), pk.size()});
    }

    Config cfg_;
    crypto::TeeFacility& tee_;
    ProtocolEvents* events_;
    State state_ = State::Idle;
    std::optional<crypto::SymKey> kS_;
};

// ---------------------------------------------------------------------------
// Verifier, variant flow: steps (6)-(14), acting as key distribution center.
// ---------------------------------------------------------------------------

class KdcVerifierContext {
public:
    struct Config {
        crypto::SigKeyPair signPair;  // (SK_V, PK_V)
        crypto::KemKeyPair kemPair;   // (SK_V', PK_V')
        std::string verifierId = "demo-verifier";
        std::string earVersion = "1.0.0";
        policy::ReferencePolicy policy;
    };

    explicit KdcVerifierContext(Config cfg, ProtocolEvents* events = nullptr)
        : cfg_(std::move(cfg)), events_(events) {}

    const crypto::SigPublicKey& sigPublicKey() const { return cfg_.signPair.pub; }
    const crypto::KemPublicKey& kemPublicKey() const { return cfg_.kemPair.pub; }

    /// The verifier needs both attester keys: PK_A to check delta_A and
    /// PK_A' to wrap Res_A.
    void trustAttester(const crypto::SigPublicKey& pkA,
                       const crypto::KemPublicKey& pkAEnc) {
        trusted_.push_back({wire::signerKeyId(pkA), pkA, pkAEnc});
    }

    void registerRpKey(const crypto::SymKey& kV) { rpKeys_.push_back(kV); }

    struct Output {
        wire::KdcResultToAttesterMsg resA;
        EarResult ear;
        crypto::SymKey kS;
        crypto::Nonce128 c;
        crypto::Digest h;
    };

    std::variant<Output, AbortReason> processEvidence(
        const wire::KdcEvidenceMsg& msg, Rng& rng, uint64_t now = 0) {
        const TrustedAttester* attester = lookupAttester(msg.signerKeyId);
        if (!attester) return AbortReason::UnknownAttester;

        // (6) delta_A, (7) evidence decryption + inner structure
        wire::KdcEvidenceContent content;
        try {
            content = wire::decodeKdcEvidence(msg, cfg_.kemPair, attester->sigPk);
        } catch (const SignatureError&) {
            return AbortReason::BadSignature;
        } catch (const Error&) {
            return AbortReason::BadEnvelope;
        }

        // (8) open the challenge
        const crypto::SymKey* kV = nullptr;
        wire::KdcChallengeContent cha;
        for (const auto& key : rpKeys_) {
            try {
                cha = wire::decodeKdcChallenge(content.cha, key);
                kV = &key;
                break;
            } catch (const Error&) {
            }
        }
        if (!kV) return AbortReason::BadChallenge;

        // (9) h_RP = h_A = hash(PK_A), all three must agree
        const auto& pk = attester->sigPk;
        auto pkHash = crypto::sha256({pk.data(), pk.size()});
        if (!(cha.h == content.h) || !(content.h == pkHash))
            return AbortReason::HashBindingMismatch;

        if (!recordChallenge(cha.c, cha.h))
            return AbortReason::DuplicateChallenge;

        // (10) appraisal; the result names the attester by its key hash
        policy::EarTemplate tmpl;
        tmpl.earVersion = cfg_.earVersion;
        tmpl.verifierId = cfg_.verifierId;
        tmpl.issuedAt = now;
        std::memcpy(tmpl.attesterId.data(), content.h.d.data(),
                    tmpl.attesterId.size());
        EarResult ear = policy::validateMetrics(cfg_.policy, content.mA, tmpl);

        // (11)-(14) session key, Res_RP, Res_A, delta_V
        Output out;
        out.kS = crypto::SymKey::random(rng);
        auto resRp =
            wire::encodeKdcResultToRp(ear, cha.c, cha.h, out.kS, *kV, rng);
        out.resA = wire::encodeKdcResultToAttester(resRp, out.kS,
                                                   attester->kemPk,
                                                   cfg_.signPair, rng);
        out.ear = ear;
        out.c = cha.c;
        out.h = cha.h;
        if (events_)
            events_->kdcVerifierAccepts(pk, content.mA, cha.h, cha.c, ear);
        return out;
    }

private:
    struct TrustedAttester {
        crypto::Id16 keyId{};
        crypto::SigPublicKey sigPk{};
        crypto::KemPublicKey kemPk{};
    };

    const TrustedAttester* lookupAttester(const crypto::Id16& keyId) const {
        for (const auto& t : trusted_) {
            if (equal({t.keyId.data(), t.keyId.size()},
                      {keyId.data(), keyId.size()}))
                return &t;
        }
        return nullptr;
    }

    bool recordChallenge(const crypto::Nonce128& c, const crypto::Digest& h) {
        Bytes key = concat({c.view(), h.view()});
        std::lock_guard lock(*seenMutex_);
        return seenChallenges_.insert(key).second;
    }

    Config cfg_;
    ProtocolEvents* events_;
    std::vector<TrustedAttester> trusted_;
    std::vector<crypto::SymKey> rpKeys_;
    std::unique_ptr<std::mutex> seenMutex_ = std::make_unique<std::mutex>();
    std::set<Bytes> seenChallenges_;
};

} // namespace apcr::kdc
