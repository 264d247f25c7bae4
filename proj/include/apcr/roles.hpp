#pragma once

#include <functional>
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
#include "apcr/tee.hpp"
#include "apcr/wire.hpp"

namespace apcr::roles {

enum class Decision { Trust, NoTrust };

enum class RejectReason {
    TamperOrWrongVerifier,
    Replay,
    WrongAttester,
    Timeout,
    HashMismatch,  // key-distribution variant only
};

inline const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::TamperOrWrongVerifier: return "TamperOrWrongVerifier";
        case RejectReason::Replay: return "Replay";
        case RejectReason::WrongAttester: return "WrongAttester";
        case RejectReason::Timeout: return "Timeout";
        case RejectReason::HashMismatch: return "HashMismatch";
    }
    return "?";
}

enum class AbortReason {
    UnknownAttester,
    BadSignature,
    BadEnvelope,
    BadChallenge,
    BadKeyAttestation,
    IdBindingMismatch,
    HashBindingMismatch,  // key-distribution variant only
    DuplicateChallenge,
};

inline const char* to_string(AbortReason r) {
    switch (r) {
        case AbortReason::UnknownAttester: return "UnknownAttester";
        case AbortReason::BadSignature: return "BadSignature";
        case AbortReason::BadEnvelope: return "BadEnvelope";
        case AbortReason::BadChallenge: return "BadChallenge";
        case AbortReason::BadKeyAttestation: return "BadKeyAttestation";
        case AbortReason::IdBindingMismatch: return "IdBindingMismatch";
        case AbortReason::HashBindingMismatch: return "HashBindingMismatch";
        case AbortReason::DuplicateChallenge: return "DuplicateChallenge";
    }
    return "?";
}

struct Verdict {
    Decision decision = Decision::NoTrust;
    EarResult result;
};

using MetricsProvider = std::function<Metrics()>;

// ---------------------------------------------------------------------------
// Relying party: steps (1)-(2) and (16)-(18). One protocol run per session.
// ---------------------------------------------------------------------------

class RpSession {
public:
    enum class State { Idle, AwaitingResult, Accepted, Rejected };

    struct Config {
        crypto::SymKey kA;
        crypto::SymKey kV;
        crypto::Id16 idA{};
        /// Optional freshness deadline in caller-defined monotonic ticks.
        std::optional<uint64_t> timeoutTicks;
    };

    explicit RpSession(Config cfg, ProtocolEvents* events = nullptr)
        : cfg_(std::move(cfg)), events_(events) {}

    State state() const { return state_; }

    /// Step (1)-(2): generate c, emit Cha = senc(c || id_A, K_V).
    wire::ChallengeMsg createChallenge(Rng& rng, uint64_t now = 0) {
        if (state_ != State::Idle)
            throw StateError("RpSession: challenge already outstanding");
        c_ = crypto::randNonce(rng);
        auto msg = wire::encodeChallenge(*c_, cfg_.idA, cfg_.kV, rng);
        state_ = State::AwaitingResult;
        if (cfg_.timeoutTicks) deadline_ = now + *cfg_.timeoutTicks;
        if (events_) {
            Bytes octets = msg.bytes();
            events_->relyingPartyBegins(*c_, cfg_.idA, octets);
        }
        return msg;
    }

    /// Steps (16)-(18). Every input drives the session to a terminal state.
    std::variant<Verdict, RejectReason> processResult(
        const wire::ResultMsg& msg, uint64_t now = 0) {
        if (state_ != State::AwaitingResult)
            throw StateError("RpSession: no outstanding challenge");
        if (deadline_ && now > *deadline_)
            return reject(RejectReason::Timeout);
        wire::ResultContent content;
        try {
            content = wire::decodeResult(msg, cfg_.kV);
        } catch (const IntegrityError&) {
            return reject(RejectReason::TamperOrWrongVerifier);
        } catch (const FormatError&) {
            // Decrypted under K_V but not shaped like an honest verifier's
            // result; treated the same as tampering.
            return reject(RejectReason::TamperOrWrongVerifier);
        }
        if (!(content.c == *c_))
            return reject(RejectReason::Replay);
        if (!equal({content.idCha.data(), content.idCha.size()},
                   {cfg_.idA.data(), cfg_.idA.size()}))
            return reject(RejectReason::WrongAttester);
        Verdict verdict;
        verdict.result = content.r;
        verdict.decision = content.r.verdict == EarVerdict::Affirming
                               ? Decision::Trust
                               : Decision::NoTrust;
        state_ = State::Accepted;
        verdict_ = verdict;
        if (events_)
            events_->relyingPartyAccepts(content.r, *c_, content.idCha);
        c_.reset();
        return verdict;
    }

    /// Byte-level entry point for transport drivers; unparseable input is a
    /// rejection, not an exception.
    std::variant<Verdict, RejectReason> processResultBytes(BytesView octets,
                                                           uint64_t now = 0) {
        if (state_ != State::AwaitingResult)
            throw StateError("RpSession: no outstanding challenge");
        wire::ResultMsg msg;
        try {
            msg = wire::ResultMsg::parse(octets);
        } catch (const FormatError&) {
            return reject(RejectReason::TamperOrWrongVerifier);
        }
        return processResult(msg, now);
    }

    /// Drives an expired AwaitingResult session to Rejected(Timeout) without
    /// a message; no-op before the deadline.
    bool expire(uint64_t now) {
        if (state_ != State::AwaitingResult || !deadline_ || now <= *deadline_)
            return false;
        reject(RejectReason::Timeout);
        return true;
    }

    const std::optional<Verdict>& verdict() const { return verdict_; }
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
    std::optional<uint64_t> deadline_;
    std::optional<Verdict> verdict_;
    std::optional<RejectReason> reason_;
};

// ---------------------------------------------------------------------------
// Attester: steps (3)-(7) plus the verbatim relay of Res. The challenge is
// never decrypted here; its octets pass through opaque.
// ---------------------------------------------------------------------------

class AttesterSession {
public:
    enum class State { Idle, AwaitingVerdict, Done };

    struct Config {
        crypto::SymKey kA;
        crypto::KemPublicKey verifierKemPk{};
    };

    AttesterSession(Config cfg, crypto::TeeFacility& tee,
                    ProtocolEvents* events = nullptr)
        : cfg_(std::move(cfg)), tee_(tee), events_(events) {}

    State state() const { return state_; }
    const crypto::SigPublicKey& publicKey() const { return tee_.publicKey(); }

    /// Steps (4)-(7): key attestation over hash(K_A), metrics collection,
    /// hybrid encryption to the verifier, evidence signature.
    wire::EvidenceMsg handleChallenge(const wire::ChallengeMsg& cha,
                                      const MetricsProvider& collect,
                                      Rng& rng) {
        if (state_ != State::Idle)
            throw StateError("AttesterSession: run already in flight");
        auto h = crypto::sha256(cfg_.kA.view());
        auto ak = tee_.attestKey(h);  // throws when the TEE is unavailable
        Metrics mA = collect();
        auto msg = wire::encodeEvidence(
            ak, mA, cha, cfg_.verifierKemPk,
            [this](BytesView m) { return tee_.signEvidence(m); },
            tee_.publicKey(), rng);
        state_ = State::AwaitingVerdict;
        if (events_) {
            Bytes octets = cha.bytes();
            events_->attesterBegins(tee_.publicKey(), h, mA, octets);
        }
        return msg;
    }

    /// Message (d): forward Res untouched. The attester cannot validate it.
    wire::ResultMsg forwardResult(const wire::ResultMsg& res) {
        if (state_ != State::AwaitingVerdict)
            throw StateError("AttesterSession: nothing to forward");
        state_ = State::Done;
        return res;
    }

private:
    Config cfg_;
    crypto::TeeFacility& tee_;
    ProtocolEvents* events_;
    State state_ = State::Idle;
};

// ---------------------------------------------------------------------------
// Verifier: steps (8)-(15). Serves many sessions; keeps registries plus the
// set of already-appraised (c, id) pairs.
// ---------------------------------------------------------------------------

class VerifierContext {
public:
    struct Config {
        crypto::KemKeyPair kemPair;  // (SK_V', PK_V')
        std::string verifierId = "demo-verifier";
        std::string earVersion = "1.0.0";
        policy::ReferencePolicy policy;
    };

    explicit VerifierContext(Config cfg, ProtocolEvents* events = nullptr)
        : cfg_(std::move(cfg)), events_(events) {}

    const crypto::KemPublicKey& kemPublicKey() const { return cfg_.kemPair.pub; }

    void trustAttester(const crypto::SigPublicKey& pkA) {
        trusted_.emplace_back(wire::signerKeyId(pkA), pkA);
    }

    /// Relying parties are provisioned by shared key; the challenge is
    /// trial-decrypted against the registry.
    void registerRpKey(const crypto::SymKey& kV) { rpKeys_.push_back(kV); }

    struct Output {
        wire::ResultMsg res;
        EarResult ear;
        crypto::Nonce128 c;
        crypto::Id16 idCha{};
    };

    /// Steps (8)-(15) in order; the first failing step aborts the run.
    std::variant<Output, AbortReason> processEvidence(
        const wire::EvidenceMsg& msg, Rng& rng, uint64_t now = 0) {
        const crypto::SigPublicKey* pkA = lookupAttester(msg.signerKeyId);
        if (!pkA) return AbortReason::UnknownAttester;

        // (8) signature, (9) evidence decryption + inner structure
        wire::EvidenceContent content;
        try {
            content = wire::decodeEvidence(msg, cfg_.kemPair, *pkA);
        } catch (const SignatureError&) {
            return AbortReason::BadSignature;
        } catch (const Error&) {
            return AbortReason::BadEnvelope;
        }

        // (10) open the challenge with the relying-party key
        const crypto::SymKey* kV = nullptr;
        wire::ChallengeContent cha;
        for (const auto& key : rpKeys_) {
            try {
                cha = wire::decodeChallenge(content.cha, key);
                kV = &key;
                break;
            } catch (const Error&) {
            }
        }
        if (!kV) return AbortReason::BadChallenge;

        // (11) key attestation
        crypto::Digest h;
        try {
            h = crypto::validateKeyAttestation(content.ak, *pkA);
        } catch (const AttestationError&) {
            return AbortReason::BadKeyAttestation;
        }

        // (12)-(13) identity binding
        auto idA = crypto::attesterId(h, {pkA->data(), pkA->size()});
        if (!equal({idA.data(), idA.size()}, {cha.id.data(), cha.id.size()}))
            return AbortReason::IdBindingMismatch;

        if (!recordChallenge(cha.c, cha.id))
            return AbortReason::DuplicateChallenge;

        // (14) appraisal
        policy::EarTemplate tmpl;
        tmpl.earVersion = cfg_.earVersion;
        tmpl.verifierId = cfg_.verifierId;
        tmpl.issuedAt = now;
        tmpl.attesterId = cha.id;
        EarResult ear = policy::validateMetrics(cfg_.policy, content.mA, tmpl);

        // (15) result encryption
        Output out;
        out.res = wire::encodeResult(ear, cha.c, cha.id, *kV, rng);
        out.ear = ear;
        out.c = cha.c;
        out.idCha = cha.id;
        if (events_)
            events_->verifierAccepts(*pkA, content.mA, cha.id, cha.c, ear);
        return out;
    }

private:
    const crypto::SigPublicKey* lookupAttester(const crypto::Id16& keyId) const {
        for (const auto& [id, pk] : trusted_) {
            if (equal({id.data(), id.size()}, {keyId.data(), keyId.size()}))
                return &pk;
        }
        return nullptr;
    }

    /// Atomic check-and-insert; registries are populated before serving and
    /// only read afterwards.
    bool recordChallenge(const crypto::Nonce128& c, const crypto::Id16& id) {
        Bytes key = concat({c.view(), {id.data(), id.size()}});
        std::lock_guard lock(*seenMutex_);
        return seenChallenges_.insert(key).second;
    }

    Config cfg_;
    ProtocolEvents* events_;
    std::vector<std::pair<crypto::Id16, crypto::SigPublicKey>> trusted_;
    std::vector<crypto::SymKey> rpKeys_;
    std::unique_ptr<std::mutex> seenMutex_ = std::make_unique<std::mutex>();
    std::set<Bytes> seenChallenges_;
};

} // namespace apcr::roles
