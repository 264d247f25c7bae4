#pragma once

#include <chrono>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "apcr/demo.hpp"
#include "apcr/net.hpp"
#include "apcr/rng.hpp"

namespace apcr::bench {

/// Three timing experiments on loopback sockets, measured on the attester
/// side like the prototype measurements:
///   1. baseline: key request -> key response, no attestation, no crypto
///   2. protocol: sum of (request -> challenge) and (forward -> key) legs
///   3. communication-only: same message count and sizes as (2), peers
///      reply with canned bytes and nobody decodes or decrypts
/// Derived processing overhead = mean(2) - mean(3).
struct Report {
    int reps = 0;
    double baselineMs = 0;       // experiment 1
    double protocolMs = 0;       // experiment 2
    double communicationMs = 0;  // experiment 3
    double overheadMs = 0;
    /// Attester-side frame payload sizes, in order, one run each.
    std::vector<size_t> protocolMsgSizes;
    std::vector<size_t> communicationMsgSizes;

    std::string summary() const {
        std::ostringstream os;
        os << "benchmark over " << reps << " repetitions\n";
        os << "  (1) baseline request/response : " << baselineMs << " ms\n";
        os << "  (2) full protocol             : " << protocolMs << " ms\n";
        os << "  (3) communication only        : " << communicationMs
           << " ms\n";
        os << "  derived processing overhead   : " << overheadMs << " ms\n";
        os << "  messages per run              : " << protocolMsgSizes.size()
           << "\n  sizes: ";
        for (size_t s : protocolMsgSizes) os << s << " ";
        os << "\n";
        return os.str();
    }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double toMs(Clock::duration d) {
    return std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(
               d)
        .count();
}

/// One exchange pattern entry seen from the attester.
struct PatternEntry {
    bool outgoing = false;
    bool viaVerifier = false;
    uint8_t type = 0;
    size_t payloadLen = 0;
};

inline std::vector<PatternEntry> protocolPattern(size_t evidenceLen,
                                                 size_t resultLen) {
    using namespace apcr::wire;
    return {
        {true, false, kKeyTransferRequest, demo::kKeyRequestPayloadLen},
        {false, false, kChallenge, kChallengeMsgLen},
        {true, true, kEvidence, evidenceLen},
        {false, true, kResultToAttester, resultLen},
        {true, false, kResultToRp, resultLen},
        {false, false, kKeyMaterial, demo::kKeyMaterialMsgLen},
    };
}

} // namespace detail

inline Report benchRun(const std::filesystem::path& keysDir,
                       const std::filesystem::path& policyFile, int reps,
                       std::chrono::milliseconds timeout =
                           std::chrono::milliseconds(2000)) {
    using detail::Clock;
    Report report;
    report.reps = reps;

    auto rpKeys = demo::RpKeys::load(keysDir);
    auto attKeys = demo::AttesterKeys::load(keysDir);
    auto verKeys = demo::VerifierKeys::load(keysDir, policyFile);

    // ---- experiment 2: full protocol, also records the message pattern ----
    {
        auto rpCh = net::UdpChannel::bind("127.0.0.1:0");
        auto verCh = net::UdpChannel::bind("127.0.0.1:0");
        std::string rpAddr = "127.0.0.1:" + std::to_string(rpCh.localPort());
        std::string verAddr = "127.0.0.1:" + std::to_string(verCh.localPort());

        std::thread rpThread([&] {
            SystemRng rng;
            for (int i = 0; i < reps; ++i)
                demo::rpServeOnce(rpCh, rpKeys, demo::Variant::Lpm, rng,
                                  timeout);
        });
        std::thread verThread([&] {
            SystemRng rng;
            for (int i = 0; i < reps; ++i)
                demo::verifierServeOnce(verCh, verKeys, demo::Variant::Lpm,
                                        rng, timeout);
        });

        SystemRng rng;
        std::vector<double> samples;
        for (int i = 0; i < reps; ++i) {
            auto toRp = net::UdpChannel::connectTo(rpAddr);
            auto toVer = net::UdpChannel::connectTo(verAddr);
            auto stats = demo::attesterRunOnce(toRp, toVer, attKeys,
                                               demo::Variant::Lpm, rng,
                                               timeout);
            if (!stats.keyObtained)
                throw Error("benchmark protocol run failed");
            samples.push_back(
                detail::toMs(stats.legRequestToChallenge +
                             stats.legForwardToKey));
        }
        rpThread.join();
        verThread.join();
        report.protocolMs =
            std::accumulate(samples.begin(), samples.end(), 0.0) /
            samples.size();
    }

    // Reconstruct the attester-side pattern for the canned experiments. The
    // evidence and result sizes depend on the key material, so compute them
    // with one offline exchange.
    size_t evidenceLen = 0;
    size_t resultLen = 0;
    {
        SystemRng rng;
        crypto::TeeFacility tee(attKeys.sig);
        roles::RpSession rp({rpKeys.kA, rpKeys.kV, rpKeys.idA, {}});
        roles::AttesterSession att({attKeys.kA, attKeys.verifierKemPk}, tee);
        roles::VerifierContext ver({verKeys.kem, demo::kDemoVerifierId,
                                    "1.0.0", verKeys.policy});
        ver.trustAttester(verKeys.attesterSigPk);
        ver.registerRpKey(verKeys.kV);
        auto cha = rp.createChallenge(rng);
        auto ev = att.handleChallenge(cha, [&] { return attKeys.metrics; },
                                      rng);
        evidenceLen = ev.bytes().size();
        auto out = ver.processEvidence(ev, rng, 1700000000);
        resultLen = std::get<roles::VerifierContext::Output>(out)
                        .res.bytes()
                        .size();
    }
    auto pattern = detail::protocolPattern(evidenceLen, resultLen);
    for (const auto& p : pattern) report.protocolMsgSizes.push_back(p.payloadLen);

    // ---- experiment 1: baseline request/response without attestation ----
    {
        auto rpCh = net::UdpChannel::bind("127.0.0.1:0");
        std::string rpAddr = "127.0.0.1:" + std::to_string(rpCh.localPort());
        std::thread rpThread([&] {
            SystemRng rng;
            for (int i = 0; i < reps; ++i) {
                auto frame = demo::recvType(rpCh, wire::kKeyTransferRequest,
                                            timeout);
                if (!frame) return;
                // No attestation and no RP crypto: canned key response.
                rpCh.send({wire::kKeyMaterial,
                           Bytes(demo::kKeyMaterialMsgLen, 0x5A)});
            }
        });

        SystemRng rng;
        std::vector<double> samples;
        for (int i = 0; i < reps; ++i) {
            auto toRp = net::UdpChannel::connectTo(rpAddr);
            auto t0 = Clock::now();
            toRp.send({wire::kKeyTransferRequest,
                       demo::encodeKeyRequest({0x4B, crypto::randNonce(rng)})});
            auto key = demo::recvType(toRp, wire::kKeyMaterial, timeout);
            if (!key) throw Error("benchmark baseline run failed");
            samples.push_back(detail::toMs(Clock::now() - t0));
        }
        rpThread.join();
        report.baselineMs =
            std::accumulate(samples.begin(), samples.end(), 0.0) /
            samples.size();
    }

    // ---- experiment 3: identical message pattern, canned bytes ----
    {
        auto rpCh = net::UdpChannel::bind("127.0.0.1:0");
        auto verCh = net::UdpChannel::bind("127.0.0.1:0");
        std::string rpAddr = "127.0.0.1:" + std::to_string(rpCh.localPort());
        std::string verAddr = "127.0.0.1:" + std::to_string(verCh.localPort());

        auto peerLoop = [&pattern, timeout](net::UdpChannel& ch, bool verifier,
                                            int reps) {
            for (int i = 0; i < reps; ++i) {
                for (const auto& p : pattern) {
                    if (p.viaVerifier != verifier) continue;
                    if (p.outgoing) {
                        if (!demo::recvType(ch, p.type, timeout)) return;
                    } else {
                        ch.send({p.type, Bytes(p.payloadLen, 0x5A)});
                    }
                }
            }
        };
        std::thread rpThread([&] { peerLoop(rpCh, false, reps); });
        std::thread verThread([&] { peerLoop(verCh, true, reps); });

        std::vector<double> samples;
        for (int i = 0; i < reps; ++i) {
            auto toRp = net::UdpChannel::connectTo(rpAddr);
            auto toVer = net::UdpChannel::connectTo(verAddr);
            Clock::duration legs{0};
            Clock::time_point t0;
            std::vector<size_t> sizes;
            for (size_t pi = 0; pi < pattern.size(); ++pi) {
                const auto& p = pattern[pi];
                auto& ch = p.viaVerifier ? toVer : toRp;
                if (p.outgoing) {
                    if (p.type == wire::kKeyTransferRequest ||
                        p.type == wire::kResultToRp)
                        t0 = Clock::now();
                    ch.send({p.type, Bytes(p.payloadLen, 0x5A)});
                    sizes.push_back(p.payloadLen);
                } else {
                    auto frame = demo::recvType(ch, p.type, timeout);
                    if (!frame)
                        throw Error("benchmark communication run failed");
                    sizes.push_back(frame->payload.size());
                    if (p.type == wire::kChallenge ||
                        p.type == wire::kKeyMaterial)
                        legs += Clock::now() - t0;
                }
            }
            samples.push_back(detail::toMs(legs));
            if (i == 0) report.communicationMsgSizes = sizes;
        }
        rpThread.join();
        verThread.join();
        report.communicationMs =
            std::accumulate(samples.begin(), samples.end(), 0.0) /
            samples.size();
    }

    report.overheadMs = report.protocolMs - report.communicationMs;
    return report;
}

} // namespace apcr::bench
