#pragma once

#include <json.hpp>

#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "apcr/bytes.hpp"
#include "apcr/crypto.hpp"
#include "apcr/events.hpp"
#include "apcr/kdc.hpp"
#include "apcr/roles.hpp"
#include "apcr/tee.hpp"
#include "apcr/wire.hpp"

namespace apcr::harness {

enum class Variant { Lpm, Kdc };

// ---------------------------------------------------------------------------
// Channels of the single-link topology. The relying party talks only to the
// attester; the attester also talks to the verifier. Every frame transits
// the adversary.
// ---------------------------------------------------------------------------

enum class Chan : uint8_t { RpToAtt = 0, AttToRp = 1, AttToVer = 2, VerToAtt = 3 };

inline const char* to_string(Chan c) {
    switch (c) {
        case Chan::RpToAtt: return "rp->att";
        case Chan::AttToRp: return "att->rp";
        case Chan::AttToVer: return "att->ver";
        case Chan::VerToAtt: return "ver->att";
    }
    return "?";
}

inline Chan chanFromString(std::string_view s) {
    if (s == "rp->att") return Chan::RpToAtt;
    if (s == "att->rp") return Chan::AttToRp;
    if (s == "att->ver") return Chan::AttToVer;
    if (s == "ver->att") return Chan::VerToAtt;
    throw FormatError("unknown channel name");
}

// ---------------------------------------------------------------------------
// Transcript: append-only record of every send attempt and what the
// adversary actually let through.
// ---------------------------------------------------------------------------

struct TranscriptEntry {
    uint64_t step = 0;
    Chan chan = Chan::RpToAtt;
    bool delivered = false;
    std::string note;     // adversary action applied
    Bytes frame;          // octets as sent by the origin
    Bytes deliveredFrame; // octets actually delivered (may differ), empty if dropped
};

struct Transcript {
    std::vector<TranscriptEntry> entries;

    crypto::Digest hash() const {
        Bytes acc;
        for (const auto& e : entries) {
            append_u64be(acc, e.step);
            acc.push_back(static_cast<uint8_t>(e.chan));
            acc.push_back(e.delivered ? 1 : 0);
            append_u16be(acc, static_cast<uint16_t>(e.frame.size()));
            append(acc, e.frame);
            append_u16be(acc, static_cast<uint16_t>(e.deliveredFrame.size()));
            append(acc, e.deliveredFrame);
        }
        return crypto::sha256(acc);
    }

    /// Everything the network adversary got to see.
    Bytes adversaryView() const {
        Bytes acc;
        for (const auto& e : entries) {
            append(acc, e.frame);
            acc.push_back(0x00);  // separator so secrets cannot straddle frames
            append(acc, e.deliveredFrame);
            acc.push_back(0x00);
        }
        return acc;
    }
};

// ---------------------------------------------------------------------------
// Adversary: ordered match->action rules plus an optional programmable
// endpoint. The adversary never holds honest secret keys; scenarios that
// model a compromised attester hand it that key explicitly.
// ---------------------------------------------------------------------------

enum class ActionKind { Deliver, Drop, Replay, Modify, Inject, Reroute };

struct Rule {
    uint8_t msgType = 0;
    int occurrence = 1;  // Nth frame of this type, counted across the scenario
    ActionKind kind = ActionKind::Deliver;
    size_t replayIndex = 0;   // Replay: transcript entry whose frame is resent
    size_t byteIndex = 0;     // Modify: payload byte
    uint8_t xorMask = 0;      // Modify
    Bytes injectBytes;        // Inject: raw frame delivered instead
    Chan rerouteTo = Chan::RpToAtt;
};

using Deliveries = std::vector<std::pair<Chan, Bytes>>;

struct AdversaryScript {
    std::vector<Rule> rules;

    /// Programmable adversary endpoint, consulted for frames no rule
    /// claimed. Returning nullopt delivers the frame unchanged; returning a
    /// list (possibly empty) replaces the delivery entirely.
    using Handler = std::function<std::optional<Deliveries>(
        const wire::Frame&, Chan, const Transcript&, Rng&)>;
    Handler handler;

    /// One rule per line: `on <type> <occurrence#>: <action> [args]`.
    ///   on 0xA4 1: drop
    ///   on 0xA1 2: replay 0
    ///   on 0xA4 1: modify 7 0xff
    ///   on 0xA2 1: reroute att->rp
    ///   on 0xA4 1: inject a400...
    static AdversaryScript parse(std::string_view text) {
        AdversaryScript out;
        std::istringstream stream{std::string(text)};
        std::string line;
        while (std::getline(stream, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream fields(line);
            std::string word;
            if (!(fields >> word)) continue;
            if (word != "on") throw FormatError("script: expected 'on'");
            Rule rule;
            std::string typeStr;
            fields >> typeStr;
            rule.msgType = static_cast<uint8_t>(std::stoul(typeStr, nullptr, 0));
            std::string occStr;
            fields >> occStr;
            if (occStr.empty() || occStr.back() != ':')
                throw FormatError("script: expected '<occurrence>:'");
            rule.occurrence = std::stoi(occStr.substr(0, occStr.size() - 1));
            std::string action;
            fields >> action;
            if (action == "deliver") {
                rule.kind = ActionKind::Deliver;
            } else if (action == "drop") {
                rule.kind = ActionKind::Drop;
            } else if (action == "replay") {
                rule.kind = ActionKind::Replay;
                fields >> rule.replayIndex;
            } else if (action == "modify") {
                rule.kind = ActionKind::Modify;
                std::string maskStr;
                fields >> rule.byteIndex >> maskStr;
                rule.xorMask =
                    static_cast<uint8_t>(std::stoul(maskStr, nullptr, 0));
            } else if (action == "inject") {
                rule.kind = ActionKind::Inject;
                std::string hex;
                fields >> hex;
                rule.injectBytes = from_hex(hex);
            } else if (action == "reroute") {
                rule.kind = ActionKind::Reroute;
                std::string chan;
                fields >> chan;
                rule.rerouteTo = chanFromString(chan);
            } else {
                throw FormatError("script: unknown action: " + action);
            }
            out.rules.push_back(std::move(rule));
        }
        return out;
    }

    static AdversaryScript parseFile(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("script file not found: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }
};

// ---------------------------------------------------------------------------
// Run report: protocol events, per-run outcomes, transcript.
// ---------------------------------------------------------------------------

struct Event {
    std::string name;
    std::map<std::string, std::string> params;  // hex or plain text values

    bool operator==(const Event& o) const = default;
};

struct RunOutcome {
    bool rpAccepted = false;
    std::optional<roles::Decision> rpDecision;
    std::optional<roles::RejectReason> rpReject;
    std::vector<roles::AbortReason> verifierAborts;
    std::vector<std::string> attesterErrors;
    std::optional<bool> sessionKeysMatch;  // kdc only
};

struct RunReport {
    Variant variant = Variant::Lpm;
    std::vector<Event> events;
    std::vector<RunOutcome> runs;
    Transcript transcript;
    /// Named material that must never show up in adversary-visible traffic.
    std::vector<std::pair<std::string, Bytes>> secrets;

    int totalRpAccepts() const {
        int n = 0;
        for (const auto& r : runs) n += r.rpAccepted ? 1 : 0;
        return n;
    }

    int countEvents(std::string_view name) const {
        int n = 0;
        for (const auto& e : events) n += e.name == name ? 1 : 0;
        return n;
    }

    nlohmann::json toJson() const {
        nlohmann::json j;
        j["variant"] = variant == Variant::Lpm ? "lpm" : "kdc";
        j["transcript_hash"] = to_hex(transcript.hash().view());
        j["events"] = nlohmann::json::array();
        for (const auto& e : events) {
            nlohmann::json je{{"event", e.name}};
            for (const auto& [k, v] : e.params) je[k] = v;
            j["events"].push_back(je);
        }
        j["runs"] = nlohmann::json::array();
        for (const auto& r : runs) {
            nlohmann::json jr;
            jr["rp_accepted"] = r.rpAccepted;
            if (r.rpReject) jr["rp_reject"] = roles::to_string(*r.rpReject);
            jr["verifier_aborts"] = nlohmann::json::array();
            for (auto a : r.verifierAborts)
                jr["verifier_aborts"].push_back(roles::to_string(a));
            jr["attester_errors"] = r.attesterErrors;
            if (r.sessionKeysMatch)
                jr["session_keys_match"] = *r.sessionKeysMatch;
            j["runs"].push_back(jr);
        }
        return j;
    }

    /// JSON-lines export for CI artifacts: one line per event, then one per
    /// run outcome.
    void writeJsonLines(std::ostream& os) const {
        nlohmann::json j = toJson();
        for (const auto& e : j["events"]) os << e.dump() << '\n';
        for (const auto& r : j["runs"]) os << r.dump() << '\n';
    }
};

// ---------------------------------------------------------------------------
// Scenario configuration and the deterministic scheduler.
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    uint64_t seed = 1;
    Variant variant = Variant::Lpm;
    int runs = 1;
    AdversaryScript script;
    /// The RP is provisioned for a second attester identity while the first
    /// one answers; models a compromised device relaying through an honest
    /// one.
    bool rpPairedWithSecond = false;
    /// Metrics the attester reports; defaults to values matching the policy.
    std::optional<Metrics> attesterMetrics;
    /// Deliberately append the result plaintext to the result frame, to
    /// prove the secrecy scanner catches leaks.
    bool leakResultPlaintext = false;
    /// Step budget for the RP freshness timeout; unset disables the timeout.
    std::optional<uint64_t> rpStepBudget;
};

namespace detail {

/// Records protocol events with hex-encoded parameters.
class Reporter : public ProtocolEvents {
public:
    explicit Reporter(std::string kvFingerprint)
        : kv_(std::move(kvFingerprint)) {}

    std::vector<Event> events;

    void relyingPartyBegins(const crypto::Nonce128& c, const crypto::Id16& id,
                            BytesView cha) override {
        push("relyingPartyBegins", {{"kv", kv_},
                                    {"c", to_hex(c.view())},
                                    {"id", to_hex({id.data(), id.size()})},
                                    {"cha", to_hex(cha)}});
    }
    void attesterBegins(const crypto::SigPublicKey& pkA,
                        const crypto::Digest& h, const Metrics& mA,
                        BytesView cha) override {
        push("attesterBegins", {{"pkA", to_hex({pkA.data(), pkA.size()})},
                                {"h", to_hex(h.view())},
                                {"mA", to_hex(mA.encode())},
                                {"cha", to_hex(cha)}});
    }
    void verifierAccepts(const crypto::SigPublicKey& pkA, const Metrics& mA,
                         const crypto::Id16& id, const crypto::Nonce128& c,
                         const EarResult& rA) override {
        push("verifierAccepts", {{"pkA", to_hex({pkA.data(), pkA.size()})},
                                 {"kv", kv_},
                                 {"mA", to_hex(mA.encode())},
                                 {"id", to_hex({id.data(), id.size()})},
                                 {"c", to_hex(c.view())},
                                 {"rA", to_hex(encodeEar(rA))}});
    }
    void relyingPartyAccepts(const EarResult& rA, const crypto::Nonce128& c,
                             const crypto::Id16& id) override {
        push("relyingPartyAccepts", {{"kv", kv_},
                                     {"rA", to_hex(encodeEar(rA))},
                                     {"c", to_hex(c.view())},
                                     {"id", to_hex({id.data(), id.size()})}});
    }

    void kdcRelyingPartyBegins(const crypto::Nonce128& c,
                               const crypto::Digest& h,
                               BytesView cha) override {
        push("relyingPartyBegins", {{"kv", kv_},
                                    {"c", to_hex(c.view())},
                                    {"id", to_hex(h.view())},
                                    {"cha", to_hex(cha)}});
    }
    void kdcAttesterBegins(const crypto::SigPublicKey& pkA,
                           const crypto::Digest& h, const Metrics& mA,
                           BytesView cha) override {
        push("attesterBegins", {{"pkA", to_hex({pkA.data(), pkA.size()})},
                                {"h", to_hex(h.view())},
                                {"mA", to_hex(mA.encode())},
                                {"cha", to_hex(cha)}});
    }
    void kdcVerifierAccepts(const crypto::SigPublicKey& pkA, const Metrics& mA,
                            const crypto::Digest& h, const crypto::Nonce128& c,
                            const EarResult& rA) override {
        push("verifierAccepts", {{"pkA", to_hex({pkA.data(), pkA.size()})},
                                 {"kv", kv_},
                                 {"mA", to_hex(mA.encode())},
                                 {"id", to_hex(h.view())},
                                 {"c", to_hex(c.view())},
                                 {"rA", to_hex(encodeEar(rA))}});
    }
    void kdcRelyingPartyAccepts(const EarResult& rA, const crypto::Nonce128& c,
                                const crypto::Digest& h) override {
        push("relyingPartyAccepts", {{"kv", kv_},
                                     {"rA", to_hex(encodeEar(rA))},
                                     {"c", to_hex(c.view())},
                                     {"id", to_hex(h.view())}});
    }

private:
    void push(std::string name,
              std::initializer_list<std::pair<std::string, std::string>> kv) {
        Event e;
        e.name = std::move(name);
        for (auto& [k, v] : kv) e.params[k] = v;
        events.push_back(std::move(e));
    }

    std::string kv_;
};

/// Deterministic message queue with the adversary spliced into every send.
class Network {
public:
    Network(const AdversaryScript& script, Rng& advRng, Transcript& transcript)
        : script_(script), advRng_(advRng), transcript_(transcript) {}

    using Sink = std::function<void(Chan, const wire::Frame&)>;
    void bind(Chan chan, Sink sink) { sinks_[chan] = std::move(sink); }

    uint64_t stepNow() const { return transcript_.entries.size(); }

    void send(Chan chan, const wire::Frame& frame) {
        Bytes raw = wire::encodeFrame(frame);
        int occurrence = ++typeCounts_[frame.type];

        TranscriptEntry entry;
        entry.step = stepNow() + 1;
        entry.chan = chan;
        entry.frame = raw;

        const Rule* rule = matchRule(frame.type, occurrence);
        Deliveries deliveries;
        if (rule) {
            entry.note = apply(*rule, chan, raw, deliveries);
        } else if (script_.handler) {
            auto custom = script_.handler(frame, chan, transcript_, advRng_);
            if (custom) {
                deliveries = std::move(*custom);
                entry.note = "handled";
            } else {
                deliveries.emplace_back(chan, raw);
                entry.note = "deliver";
            }
        } else {
            deliveries.emplace_back(chan, raw);
            entry.note = "deliver";
        }

        entry.delivered = !deliveries.empty();
        if (!deliveries.empty()) entry.deliveredFrame = deliveries.front().second;
        transcript_.entries.push_back(std::move(entry));

        for (size_t i = 0; i < deliveries.size(); ++i) {
            if (i > 0) {
                // Extra adversary deliveries get their own transcript entry.
                TranscriptEntry extra;
                extra.step = stepNow() + 1;
                extra.chan = deliveries[i].first;
                extra.frame = deliveries[i].second;
                extra.deliveredFrame = deliveries[i].second;
                extra.delivered = true;
                extra.note = "adversary-extra";
                transcript_.entries.push_back(std::move(extra));
            }
            queue_.push_back(deliveries[i]);
        }
    }

    /// Cooperative dispatch until no messages remain in flight.
    void drain() {
        while (!queue_.empty()) {
            auto [chan, raw] = std::move(queue_.front());
            queue_.pop_front();
            auto it = sinks_.find(chan);
            if (it == sinks_.end()) continue;
            wire::Frame frame;
            try {
                frame = wire::decodeFrame(raw);
            } catch (const FormatError&) {
                continue;  // unframeable bytes die on the floor
            }
            it->second(chan, frame);
        }
    }

private:
    const Rule* matchRule(uint8_t type, int occurrence) {
        for (size_t i = 0; i < script_.rules.size(); ++i) {
            const Rule& r = script_.rules[i];
            if (r.msgType == type && r.occurrence == occurrence &&
                !usedRules_.contains(i)) {
                usedRules_.insert(i);
                return &r;
            }
        }
        return nullptr;
    }

    std::string apply(const Rule& rule, Chan chan, const Bytes& raw,
                      Deliveries& out) {
        switch (rule.kind) {
            case ActionKind::Deliver:
                out.emplace_back(chan, raw);
                return "deliver";
            case ActionKind::Drop:
                return "drop";
            case ActionKind::Replay: {
                if (rule.replayIndex >= transcript_.entries.size())
                    throw ArgumentError(
                        "script: replay references a future transcript entry");
                out.emplace_back(chan,
                                 transcript_.entries[rule.replayIndex].frame);
                return "replay " + std::to_string(rule.replayIndex);
            }
            case ActionKind::Modify: {
                Bytes mutated = raw;
                size_t idx = wire::kFrameHeaderLen + rule.byteIndex;
                if (idx >= mutated.size())
                    throw ArgumentError("script: modify offset past payload");
                mutated[idx] ^= rule.xorMask;
                out.emplace_back(chan, mutated);
                return "modify " + std::to_string(rule.byteIndex);
            }
            case ActionKind::Inject:
                out.emplace_back(chan, rule.injectBytes);
                return "inject";
            case ActionKind::Reroute:
                out.emplace_back(rule.rerouteTo, raw);
                return std::string("reroute ") + to_string(rule.rerouteTo);
        }
        return "?";
    }

    const AdversaryScript& script_;
    Rng& advRng_;
    Transcript& transcript_;
    std::map<Chan, Sink> sinks_;
    std::map<uint8_t, int> typeCounts_;
    std::set<size_t> usedRules_;
    std::deque<std::pair<Chan, Bytes>> queue_;
};

inline std::string kvFingerprint(const crypto::SymKey& kV) {
    auto d = crypto::sha256(kV.view());
    return to_hex({d.d.data(), 8});
}

/// Virtual clock base: step counters are offset into a realistic epoch so
/// issued-at timestamps encode with the same width as live ones.
inline constexpr uint64_t kEpochBase = 1700000000;

} // namespace detail

// ---------------------------------------------------------------------------
// Scenario execution
// ---------------------------------------------------------------------------

/// Fixed demo policy/metrics pair used by scenarios unless overridden.
inline std::pair<policy::ReferencePolicy, Metrics> scenarioReferenceState(
    Rng& rng) {
    Metrics m;
    m.claims["boot-hash"] = rng.bytes(32);
    m.claims["fw-version"] = to_bytes("4.2.0");
    m.claims["app-hash"] = rng.bytes(32);
    policy::ReferencePolicy p;
    for (const auto& [claim, value] : m.claims) p.allowed[claim] = {value};
    return {p, m};
}

/// Replays the topology derivation for a seed far enough to recover the
/// policy table a scenario ran under (for the correspondence checker).
inline policy::ReferencePolicy scenarioPolicy(uint64_t seed) {
    auto topoRng = DeterministicRng(seed).fork(0);
    crypto::SymKey::random(topoRng);         // kA
    crypto::SymKey::random(topoRng);         // kV
    crypto::SigKeyPair::generate(topoRng);   // tee identity
    crypto::KemKeyPair::generate(topoRng);   // kemV
    crypto::KemKeyPair::generate(topoRng);   // kemA
    crypto::SigKeyPair::generate(topoRng);   // signV
    return scenarioReferenceState(topoRng).first;
}

inline RunReport runScenario(const ScenarioConfig& cfg) {
    RunReport report;
    report.variant = cfg.variant;

    DeterministicRng root(cfg.seed);
    auto topoRng = root.fork(0);
    auto verifierRng = root.fork(100);
    auto advRng = root.fork(400);

    // Topology keys
    auto kA = crypto::SymKey::random(topoRng);
    auto kV = crypto::SymKey::random(topoRng);
    crypto::TeeFacility tee(crypto::SigKeyPair::generate(topoRng));
    auto kemV = crypto::KemKeyPair::generate(topoRng);
    auto kemA = crypto::KemKeyPair::generate(topoRng);  // kdc variant
    auto signV = crypto::SigKeyPair::generate(topoRng); // kdc variant
    auto [policyTable, goodMetrics] = scenarioReferenceState(topoRng);
    Metrics mA = cfg.attesterMetrics.value_or(goodMetrics);

    // Optional second attester identity the RP is bound to (relay scenario).
    auto kAB = crypto::SymKey::random(topoRng);
    crypto::TeeFacility teeB(crypto::SigKeyPair::generate(topoRng));

    report.secrets.emplace_back("kA", Bytes(kA.view().begin(), kA.view().end()));
    report.secrets.emplace_back("kV", Bytes(kV.view().begin(), kV.view().end()));
    report.secrets.emplace_back("metrics", mA.encode());

    detail::Reporter reporter(detail::kvFingerprint(kV));

    roles::VerifierContext verifier({kemV, kDemoVerifierId, "1.0.0",
                                     policyTable}, &reporter);
    verifier.trustAttester(tee.publicKey());
    verifier.trustAttester(teeB.publicKey());
    verifier.registerRpKey(kV);

    kdc::KdcVerifierContext kdcVerifier({signV, kemV, kDemoVerifierId,
                                         "1.0.0", policyTable}, &reporter);
    kdcVerifier.trustAttester(tee.publicKey(), kemA.pub);
    kdcVerifier.registerRpKey(kV);

    Transcript& transcript = report.transcript;
    detail::Network net(cfg.script, advRng, transcript);

    crypto::Id16 rpBinding;
    {
        const auto& boundTee = cfg.rpPairedWithSecond ? teeB : tee;
        const auto& boundKey = cfg.rpPairedWithSecond ? kAB : kA;
        auto h = crypto::sha256(boundKey.view());
        const auto& pk = boundTee.publicKey();
        rpBinding = crypto::attesterId(h, {pk.data(), pk.size()});
    }

    for (int run = 0; run < cfg.runs; ++run) {
        RunOutcome outcome;
        auto rpRng = root.fork(200 + static_cast<uint64_t>(run));
        auto attRng = root.fork(300 + static_cast<uint64_t>(run));

        if (cfg.variant == Variant::Lpm) {
            roles::RpSession rp({cfg.rpPairedWithSecond ? kAB : kA, kV,
                                 rpBinding, cfg.rpStepBudget},
                                &reporter);
            roles::AttesterSession attester({kA, kemV.pub}, tee, &reporter);

            net.bind(Chan::AttToRp, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kResultToRp ||
                    rp.state() != roles::RpSession::State::AwaitingResult)
                    return;
                auto out = rp.processResultBytes(f.payload, net.stepNow());
                if (std::holds_alternative<roles::Verdict>(out)) {
                    outcome.rpAccepted = true;
                    outcome.rpDecision =
                        std::get<roles::Verdict>(out).decision;
                } else {
                    outcome.rpReject = std::get<roles::RejectReason>(out);
                }
            });
            net.bind(Chan::RpToAtt, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kChallenge ||
                    attester.state() != roles::AttesterSession::State::Idle)
                    return;
                try {
                    auto cha = wire::ChallengeMsg::parse(f.payload);
                    auto ev = attester.handleChallenge(
                        cha, [&] { return mA; }, attRng);
                    net.send(Chan::AttToVer, {wire::kEvidence, ev.bytes()});
                } catch (const Error& e) {
                    outcome.attesterErrors.emplace_back(e.what());
                }
            });
            net.bind(Chan::VerToAtt, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kResultToAttester ||
                    attester.state() !=
                        roles::AttesterSession::State::AwaitingVerdict)
                    return;
                try {
                    auto res = wire::ResultMsg::parse(f.payload);
                    auto fwd = attester.forwardResult(res);
                    net.send(Chan::AttToRp, {wire::kResultToRp, fwd.bytes()});
                } catch (const Error& e) {
                    outcome.attesterErrors.emplace_back(e.what());
                }
            });
            net.bind(Chan::AttToVer, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kEvidence) return;
                wire::EvidenceMsg ev;
                try {
                    ev = wire::EvidenceMsg::parse(f.payload);
                } catch (const FormatError&) {
                    outcome.verifierAborts.push_back(
                        roles::AbortReason::BadEnvelope);
                    return;
                }
                auto out = verifier.processEvidence(
                    ev, verifierRng, detail::kEpochBase + net.stepNow());
                if (std::holds_alternative<roles::VerifierContext::Output>(out)) {
                    auto& res = std::get<roles::VerifierContext::Output>(out);
                    report.secrets.emplace_back("rA", encodeEar(res.ear));
                    Bytes payload = res.res.bytes();
                    if (cfg.leakResultPlaintext)
                        append(payload, encodeEar(res.ear));
                    net.send(Chan::VerToAtt,
                             {wire::kResultToAttester, payload});
                } else {
                    outcome.verifierAborts.push_back(
                        std::get<roles::AbortReason>(out));
                }
            });

            auto cha = rp.createChallenge(rpRng, net.stepNow());
            net.send(Chan::RpToAtt, {wire::kChallenge, cha.bytes()});
            net.drain();

            if (rp.state() == roles::RpSession::State::AwaitingResult &&
                cfg.rpStepBudget) {
                rp.expire(std::numeric_limits<uint64_t>::max());
                outcome.rpReject = rp.rejectReason();
            }
        } else {
            kdc::KdcRpSession rp({kV, cfg.rpStepBudget}, &reporter);
            kdc::KdcAttesterSession attester({kemA, signV.pub, kemV.pub}, tee,
                                             &reporter);
            std::optional<crypto::SymKey> rpKs;

            net.bind(Chan::AttToRp, [&](Chan, const wire::Frame& f) {
                if (f.type == wire::kKdcHashAnnounce &&
                    rp.state() == kdc::KdcRpSession::State::Idle) {
                    try {
                        auto h = wire::decodeHashAnnounce(f.payload);
                        auto cha = rp.createChallenge(h, rpRng, net.stepNow());
                        net.send(Chan::RpToAtt,
                                 {wire::kKdcChallenge, cha.bytes()});
                    } catch (const Error&) {
                    }
                    return;
                }
                if (f.type == wire::kKdcResultToRp &&
                    rp.state() == kdc::KdcRpSession::State::AwaitingResult) {
                    auto out = rp.finishBytes(f.payload, net.stepNow());
                    if (std::holds_alternative<kdc::KdcVerdict>(out)) {
                        outcome.rpAccepted = true;
                        auto& v = std::get<kdc::KdcVerdict>(out);
                        outcome.rpDecision = v.decision;
                        rpKs = v.kS;
                    } else {
                        outcome.rpReject = std::get<roles::RejectReason>(out);
                    }
                }
            });
            net.bind(Chan::RpToAtt, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kKdcChallenge ||
                    attester.state() !=
                        kdc::KdcAttesterSession::State::SentHash)
                    return;
                try {
                    auto cha = wire::KdcChallengeMsg::parse(f.payload);
                    auto ev = attester.createEvidence(
                        cha, [&] { return mA; }, attRng);
                    net.send(Chan::AttToVer, {wire::kKdcEvidence, ev.bytes()});
                } catch (const Error& e) {
                    outcome.attesterErrors.emplace_back(e.what());
                }
            });
            net.bind(Chan::VerToAtt, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kKdcResultToAttester ||
                    attester.state() !=
                        kdc::KdcAttesterSession::State::AwaitingVerdict)
                    return;
                try {
                    auto resA = wire::KdcResultToAttesterMsg::parse(f.payload);
                    auto resRp = attester.unwrapResult(resA);
                    net.send(Chan::AttToRp,
                             {wire::kKdcResultToRp, resRp.bytes()});
                } catch (const Error& e) {
                    outcome.attesterErrors.emplace_back(e.what());
                }
            });
            net.bind(Chan::AttToVer, [&](Chan, const wire::Frame& f) {
                if (f.type != wire::kKdcEvidence) return;
                wire::KdcEvidenceMsg ev;
                try {
                    ev = wire::KdcEvidenceMsg::parse(f.payload);
                } catch (const FormatError&) {
                    outcome.verifierAborts.push_back(
                        roles::AbortReason::BadEnvelope);
                    return;
                }
                auto out = kdcVerifier.processEvidence(
                    ev, verifierRng, detail::kEpochBase + net.stepNow());
                if (std::holds_alternative<kdc::KdcVerifierContext::Output>(
                        out)) {
                    auto& res =
                        std::get<kdc::KdcVerifierContext::Output>(out);
                    report.secrets.emplace_back(
                        "kS",
                        Bytes(res.kS.view().begin(), res.kS.view().end()));
                    report.secrets.emplace_back("rA", encodeEar(res.ear));
                    Bytes payload = res.resA.bytes();
                    if (cfg.leakResultPlaintext)
                        append(payload, encodeEar(res.ear));
                    net.send(Chan::VerToAtt,
                             {wire::kKdcResultToAttester, payload});
                } else {
                    outcome.verifierAborts.push_back(
                        std::get<roles::AbortReason>(out));
                }
            });

            auto h = attester.announce();
            net.send(Chan::AttToRp,
                     {wire::kKdcHashAnnounce, wire::encodeHashAnnounce(h)});
            net.drain();

            if (rp.state() == kdc::KdcRpSession::State::AwaitingResult &&
                cfg.rpStepBudget) {
                rp.expire(std::numeric_limits<uint64_t>::max());
                outcome.rpReject = rp.rejectReason();
            }
            if (rpKs && attester.sessionKey())
                outcome.sessionKeysMatch = *rpKs == *attester.sessionKey();
        }

        report.runs.push_back(std::move(outcome));
    }

    report.events = std::move(reporter.events);
    return report;
}

// ---------------------------------------------------------------------------
// Property checkers over run reports
// ---------------------------------------------------------------------------

/// Executable form of the injective-correspondence query: every
/// relyingPartyAccepts is matched by exactly one distinct begins event of
/// each role with consistent parameters, and the accepted result equals the
/// policy appraisal of the metrics the attester reported.
inline bool checkCorrespondence(const RunReport& report,
                                const policy::ReferencePolicy& policyTable) {
    std::set<size_t> used;
    auto findUnique = [&](std::string_view name,
                          const std::map<std::string, std::string>& filter)
        -> std::optional<size_t> {
        std::optional<size_t> found;
        for (size_t i = 0; i < report.events.size(); ++i) {
            const Event& e = report.events[i];
            if (e.name != name || used.contains(i)) continue;
            bool match = true;
            for (const auto& [k, v] : filter) {
                auto it = e.params.find(k);
                if (it == e.params.end() || it->second != v) {
                    match = false;
                    break;
                }
            }
            if (!match) continue;
            if (found) return std::nullopt;  // ambiguous match
            found = i;
        }
        if (found) used.insert(*found);
        return found;
    };

    for (size_t i = 0; i < report.events.size(); ++i) {
        const Event& accept = report.events[i];
        if (accept.name != "relyingPartyAccepts") continue;
        const auto& c = accept.params.at("c");
        const auto& id = accept.params.at("id");

        auto begins = findUnique("relyingPartyBegins", {{"c", c}, {"id", id}});
        if (!begins) return false;
        const auto& cha = report.events[*begins].params.at("cha");

        auto attest = findUnique("attesterBegins", {{"cha", cha}});
        if (!attest) return false;

        auto verify = findUnique("verifierAccepts", {{"c", c}, {"id", id}});
        if (!verify) return false;

        const Event& att = report.events[*attest];
        const Event& ver = report.events[*verify];
        if (att.params.at("mA") != ver.params.at("mA")) return false;
        if (ver.params.at("rA") != accept.params.at("rA")) return false;
        if (att.params.at("pkA") != ver.params.at("pkA")) return false;

        // id binding: id = hash((h, PK_A)) for the base variant,
        // id = h = hash(PK_A) for the key-distribution variant.
        Bytes pkABytes = from_hex(att.params.at("pkA"));
        Bytes hBytes = from_hex(att.params.at("h"));
        if (report.variant == Variant::Lpm) {
            auto expectId = crypto::attesterId(
                crypto::Digest::fromBytes(hBytes), pkABytes);
            if (to_hex({expectId.data(), expectId.size()}) != id) return false;
        } else {
            auto expectH = crypto::sha256(pkABytes);
            if (to_hex(expectH.view()) != id) return false;
        }

        // R_A = validateMetrics(M_A): the verdict field is the part derived
        // from the metrics.
        Metrics mA = Metrics::decode(from_hex(att.params.at("mA")));
        EarResult rA = decodeEar(from_hex(accept.params.at("rA")));
        if (rA.verdict != policy::appraise(policyTable, mA)) return false;
    }
    return true;
}

struct SecrecyResult {
    bool pass = true;
    std::vector<std::string> leaked;
};

/// Scans adversary-visible traffic for contiguous occurrences of each
/// secret. An under-approximation of full attacker deduction, but a sharp
/// regression check.
inline SecrecyResult checkSecrecy(
    const RunReport& report,
    const std::vector<std::pair<std::string, Bytes>>& secrets) {
    SecrecyResult out;
    Bytes view = report.transcript.adversaryView();
    for (const auto& [name, value] : secrets) {
        if (value.empty()) continue;
        if (contains(view, value)) {
            out.pass = false;
            out.leaked.push_back(name);
        }
    }
    return out;
}

inline SecrecyResult checkSecrecy(const RunReport& report) {
    return checkSecrecy(report, report.secrets);
}

// ---------------------------------------------------------------------------
// Canonical attack suite
// ---------------------------------------------------------------------------

struct ScenarioResult {
    std::string name;
    int rpAccepts = 0;
    bool defended = false;
    std::string detail;
    RunReport report;
};

struct SuiteSummary {
    std::vector<ScenarioResult> scenarios;
    int attackAccepts = 0;     // accepts across all attack scenarios
    int honestAccepts = 0;     // accepts in the honest control
    bool allDefended = false;
    bool secrecyClean = true;

    const ScenarioResult* find(std::string_view name) const {
        for (const auto& s : scenarios)
            if (s.name == name) return &s;
        return nullptr;
    }
};

namespace detail {

inline bool hasAbort(const RunReport& r, roles::AbortReason reason) {
    for (const auto& run : r.runs)
        for (auto a : run.verifierAborts)
            if (a == reason) return true;
    return false;
}

inline bool hasReject(const RunReport& r, roles::RejectReason reason) {
    for (const auto& run : r.runs)
        if (run.rpReject == reason) return true;
    return false;
}

} // namespace detail

inline SuiteSummary attackSuite(Variant variant, uint64_t seed = 1) {
    SuiteSummary summary;
    bool lpm = variant == Variant::Lpm;
    const uint8_t chaType = lpm ? wire::kChallenge : wire::kKdcChallenge;
    const uint8_t evType = lpm ? wire::kEvidence : wire::kKdcEvidence;
    const uint8_t resAttType =
        lpm ? wire::kResultToAttester : wire::kKdcResultToAttester;
    const uint8_t resRpType = lpm ? wire::kResultToRp : wire::kKdcResultToRp;
    // Transcript entry index of each message within the first honest run.
    // The base variant starts at the challenge; the variant run starts with
    // the hash announce.
    const size_t idxCha = lpm ? 0 : 1;
    const size_t idxEv = lpm ? 1 : 2;
    const size_t idxResRp = lpm ? 3 : 4;

    auto runCase = [&](std::string name, ScenarioConfig cfg,
                       std::function<bool(const RunReport&, std::string&)>
                           expectation,
                       bool honest = false) {
        cfg.variant = variant;
        cfg.seed = seed;
        ScenarioResult result;
        result.name = std::move(name);
        result.report = runScenario(cfg);
        result.rpAccepts = result.report.totalRpAccepts();
        std::string detail;
        bool ok = expectation(result.report, detail);
        if (honest) {
            summary.honestAccepts += result.rpAccepts;
            result.defended = ok;
        } else {
            summary.attackAccepts += result.rpAccepts;
            result.defended = ok && result.rpAccepts == 0;
        }
        result.detail = detail;
        if (!checkSecrecy(result.report).pass) summary.secrecyClean = false;
        summary.scenarios.push_back(std::move(result));
    };

    auto fmtRule = [](uint8_t type, int occ, const std::string& action) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "on 0x%02X %d: %s\n", type, occ,
                      action.c_str());
        return std::string(buf);
    };

    // Honest control: exactly one accept, matching session keys in the
    // key-distribution variant.
    {
        ScenarioConfig cfg;
        runCase(
            "honest-control", cfg,
            [&](const RunReport& r, std::string& detail) {
                detail = "accepts=" + std::to_string(r.totalRpAccepts());
                bool keysOk = lpm || (r.runs.size() == 1 &&
                                      r.runs[0].sessionKeysMatch == true);
                return r.totalRpAccepts() == 1 && keysOk;
            },
            /*honest=*/true);
    }

    // Replay the challenge from run 1 into run 2. Run 1's final message is
    // dropped so no run ever accepts; the verifier sees the same (c, id)
    // twice and refuses the second.
    {
        ScenarioConfig cfg;
        cfg.runs = 2;
        cfg.script = AdversaryScript::parse(
            fmtRule(resRpType, 1, "drop") +
            fmtRule(chaType, 2, "replay " + std::to_string(idxCha)));
        runCase("replay-challenge", cfg,
                [&](const RunReport& r, std::string& detail) {
                    detail = "duplicate-abort";
                    return detail::hasAbort(
                        r, roles::AbortReason::DuplicateChallenge);
                });
    }

    // Replay the evidence message: the verifier's seen-challenge set stops
    // the second appraisal.
    {
        ScenarioConfig cfg;
        cfg.runs = 2;
        cfg.script = AdversaryScript::parse(
            fmtRule(resAttType, 1, "drop") +
            fmtRule(evType, 2, "replay " + std::to_string(idxEv)));
        runCase("replay-evidence", cfg,
                [&](const RunReport& r, std::string& detail) {
                    detail = "duplicate-abort";
                    return detail::hasAbort(
                        r, roles::AbortReason::DuplicateChallenge);
                });
    }

    // Replay the result from run 1 as run 2's result: nonce check fires.
    {
        ScenarioConfig cfg;
        cfg.runs = 2;
        cfg.script = AdversaryScript::parse(
            fmtRule(resRpType, 1, "drop") +
            fmtRule(resRpType, 2, "replay " + std::to_string(idxResRp)));
        runCase("replay-result", cfg,
                [&](const RunReport& r, std::string& detail) {
                    detail = "rp-replay-reject";
                    return detail::hasReject(r, roles::RejectReason::Replay);
                });
    }

    // Single-byte modification of each protocol message.
    {
        ScenarioConfig cfg;
        cfg.script =
            AdversaryScript::parse(fmtRule(chaType, 1, "modify 20 0x40"));
        runCase("modify-challenge", cfg,
                [&](const RunReport& r, std::string& detail) {
                    detail = "verifier-bad-challenge";
                    return detail::hasAbort(r,
                                            roles::AbortReason::BadChallenge);
                });
    }
    {
        ScenarioConfig cfg;
        cfg.script =
            AdversaryScript::parse(fmtRule(evType, 1, "modify 40 0x40"));
        runCase("modify-evidence", cfg,
                [&](const RunReport& r, std::string& detail) {
                    detail = "verifier-bad-signature";
                    return detail::hasAbort(r,
                                            roles::AbortReason::BadSignature);
                });
    }
    {
        ScenarioConfig cfg;
        cfg.script =
            AdversaryScript::parse(fmtRule(resAttType, 1, "modify 30 0x40"));
        runCase("modify-result-to-attester", cfg,
                [&](const RunReport& r, std::string& detail) {
                    if (lpm) {
                        detail = "rp-tamper-reject";
                        return detail::hasReject(
                            r, roles::RejectReason::TamperOrWrongVerifier);
                    }
                    // Variant: the attester validates delta_V and aborts
                    // without forwarding anything.
                    detail = "attester-abort";
                    return !r.runs.empty() &&
                           !r.runs[0].attesterErrors.empty();
                });
    }
    {
        ScenarioConfig cfg;
        cfg.script =
            AdversaryScript::parse(fmtRule(resRpType, 1, "modify 10 0x40"));
        runCase("modify-result-to-rp", cfg,
                [&](const RunReport& r, std::string& detail) {
                    detail = "rp-tamper-reject";
                    return detail::hasReject(
                        r, roles::RejectReason::TamperOrWrongVerifier);
                });
    }

    if (lpm) {
        // Relay (cuckoo): the RP is bound to compromised device B, whose
        // traffic is answered by honest attester A. The verifier must abort
        // at the identity-binding step.
        {
            ScenarioConfig cfg;
            cfg.rpPairedWithSecond = true;
            runCase("cuckoo-relay", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "id-binding-abort";
                        return detail::hasAbort(
                            r, roles::AbortReason::IdBindingMismatch);
                    });
        }

        // Wrong verifier: a forged result under adversary-known keys
        // (including the compromised attester's K_A) replaces message (d).
        {
            ScenarioConfig cfg;
            DeterministicRng peek(seed);
            auto topo = peek.fork(0);
            auto kA = crypto::SymKey::random(topo);  // compromised-attester key
            cfg.script.handler =
                [kA](const wire::Frame& f, Chan chan, const Transcript&,
                     Rng& rng) -> std::optional<Deliveries> {
                if (f.type != wire::kResultToRp) return std::nullopt;
                EarResult fake;
                fake.earVersion = "1.0.0";
                fake.issuedAt = 1;
                fake.verifierId = "adversary";
                fake.verdict = EarVerdict::Affirming;
                auto forged = wire::encodeResult(
                    fake, crypto::randNonce(rng), crypto::Id16{}, kA, rng);
                Deliveries out;
                out.emplace_back(chan, wire::encodeFrame({wire::kResultToRp,
                                                          forged.bytes()}));
                return out;
            };
            runCase("wrong-verifier", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "rp-tamper-reject";
                        return detail::hasReject(
                            r, roles::RejectReason::TamperOrWrongVerifier);
                    });
        }

        // Reflection: deliver the RP's own challenge back as message (d).
        {
            ScenarioConfig cfg;
            cfg.script.handler =
                [](const wire::Frame& f, Chan, const Transcript&,
                   Rng&) -> std::optional<Deliveries> {
                if (f.type != wire::kChallenge) return std::nullopt;
                Deliveries out;
                out.emplace_back(
                    Chan::AttToRp,
                    wire::encodeFrame({wire::kResultToRp, f.payload}));
                return out;
            };
            runCase("reflect-challenge-as-result", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "rp-tamper-reject";
                        return detail::hasReject(
                            r, roles::RejectReason::TamperOrWrongVerifier);
                    });
        }

        // Oracle use of the honest attester: adversary substitutes its own
        // well-formed random challenge; the attester answers, the verifier
        // cannot open it.
        {
            ScenarioConfig cfg;
            cfg.script.handler =
                [](const wire::Frame& f, Chan chan, const Transcript&,
                   Rng& rng) -> std::optional<Deliveries> {
                if (f.type != wire::kChallenge) return std::nullopt;
                Bytes garbage(wire::kChallengeMsgLen);
                rng.fill(garbage.data(), garbage.size());
                Deliveries out;
                out.emplace_back(chan,
                                 wire::encodeFrame({wire::kChallenge, garbage}));
                return out;
            };
            runCase("oracle-adversary-challenge", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "verifier-bad-challenge";
                        return detail::hasAbort(
                            r, roles::AbortReason::BadChallenge);
                    });
        }

        // Message (d) never arrives; the RP's step budget expires the run.
        {
            ScenarioConfig cfg;
            cfg.rpStepBudget = 16;
            cfg.script =
                AdversaryScript::parse(fmtRule(resRpType, 1, "drop"));
            runCase("drop-result-timeout", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "rp-timeout";
                        return detail::hasReject(r,
                                                 roles::RejectReason::Timeout);
                    });
        }
    } else {
        // Announce swap: the unauthenticated hash announce is corrupted, so
        // the challenge names a key the evidence signer does not hold.
        {
            ScenarioConfig cfg;
            cfg.script = AdversaryScript::parse(
                fmtRule(wire::kKdcHashAnnounce, 1, "modify 4 0x01"));
            runCase("announce-swap", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "hash-binding-abort";
                        return detail::hasAbort(
                            r, roles::AbortReason::HashBindingMismatch);
                    });
        }

        // Forged Res_RP under an adversary key.
        {
            ScenarioConfig cfg;
            cfg.script.handler =
                [](const wire::Frame& f, Chan chan, const Transcript&,
                   Rng& rng) -> std::optional<Deliveries> {
                if (f.type != wire::kKdcResultToRp) return std::nullopt;
                EarResult fake;
                fake.earVersion = "1.0.0";
                fake.issuedAt = 1;
                fake.verifierId = "adversary";
                fake.verdict = EarVerdict::Affirming;
                auto advKey = crypto::SymKey::random(rng);
                auto forged = wire::encodeKdcResultToRp(
                    fake, crypto::randNonce(rng), crypto::Digest{},
                    crypto::SymKey::random(rng), advKey, rng);
                Deliveries out;
                out.emplace_back(chan,
                                 wire::encodeFrame({wire::kKdcResultToRp,
                                                    forged.bytes()}));
                return out;
            };
            runCase("wrong-verifier", cfg,
                    [&](const RunReport& r, std::string& detail) {
                        detail = "rp-tamper-reject";
                        return detail::hasReject(
                            r, roles::RejectReason::TamperOrWrongVerifier);
                    });
        }
    }

    summary.allDefended = summary.attackAccepts == 0;
    for (const auto& s : summary.scenarios)
        if (!s.defended) summary.allDefended = false;
    return summary;
}

} // namespace apcr::harness
