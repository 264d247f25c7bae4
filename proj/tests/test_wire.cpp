#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "apcr/ear.hpp"
#include "apcr/metrics.hpp"
#include "apcr/wire.hpp"
#include "support.hpp"

using namespace apcr;
using namespace apcr::wire;
using testsupport::fixtureBytes;
using testsupport::loadFixture;

namespace {

crypto::Id16 id16(uint8_t fill) {
    crypto::Id16 id;
    id.fill(fill);
    return id;
}

EarResult sampleEar() {
    EarResult r;
    r.earVersion = "1.0.0";
    r.issuedAt = 1700000000;
    r.verifierId = "demo-verifier";
    for (size_t i = 0; i < r.attesterId.size(); ++i)
        r.attesterId[i] = static_cast<uint8_t>(i);
    r.verdict = EarVerdict::Affirming;
    return r;
}

Metrics sampleMetrics(Rng& rng) {
    Metrics m;
    m.claims["boot-hash"] = rng.bytes(32);
    m.claims["fw-version"] = to_bytes("1.2.3");
    return m;
}

} // namespace

TEST_CASE("frame encoding", "[wire]") {
    Frame f{kChallenge, {1, 2, 3}};
    Bytes raw = encodeFrame(f);
    CHECK(raw.size() == 6);
    CHECK(raw[0] == 0xA1);
    CHECK(decodeFrame(raw) == f);

    SECTION("declared length must match") {
        Bytes bad = raw;
        bad[2] = 9;
        CHECK_THROWS_AS(decodeFrame(bad), FormatError);
        bad = raw;
        bad.pop_back();
        CHECK_THROWS_AS(decodeFrame(bad), FormatError);
    }
    SECTION("empty payload is legal") {
        Bytes raw2 = encodeFrame({kKeyMaterial, {}});
        CHECK(raw2.size() == 3);
        CHECK(decodeFrame(raw2).payload.empty());
    }
}

TEST_CASE("challenge message is 55 bytes and roundtrips", "[wire]") {
    DeterministicRng rng(21);
    auto kV = crypto::SymKey::random(rng);

    for (int i = 0; i < 32; ++i) {
        auto c = crypto::randNonce(rng);
        auto id = crypto::Id16{};
        rng.fill(id.data(), id.size());
        auto msg = encodeChallenge(c, id, kV, rng);
        REQUIRE(msg.bytes().size() == kChallengeMsgLen);
        auto content = decodeChallenge(ChallengeMsg::parse(msg.bytes()), kV);
        CHECK(content.c == c);
        CHECK(content.id == id);
    }
}

TEST_CASE("challenge rejects truncation at every length", "[wire]") {
    DeterministicRng rng(22);
    auto kV = crypto::SymKey::random(rng);
    auto msg = encodeChallenge(crypto::randNonce(rng), id16(0x42), kV, rng);
    Bytes raw = msg.bytes();
    for (size_t len = 0; len < raw.size(); ++len) {
        Bytes cut(raw.begin(), raw.begin() + len);
        CHECK_THROWS_AS(ChallengeMsg::parse(cut), FormatError);
    }
}

TEST_CASE("challenge decode failures", "[wire]") {
    DeterministicRng rng(23);
    auto kV = crypto::SymKey::random(rng);
    auto kA = crypto::SymKey::random(rng);
    auto msg = encodeChallenge(crypto::randNonce(rng), id16(1), kV, rng);

    SECTION("wrong key") {
        CHECK_THROWS_AS(decodeChallenge(msg, kA), IntegrityError);
    }
    SECTION("tampered byte") {
        Bytes raw = msg.bytes();
        raw[20] ^= 0x10;
        CHECK_THROWS_AS(decodeChallenge(ChallengeMsg::parse(raw), kV),
                        IntegrityError);
    }
}

TEST_CASE("evidence roundtrip and failure ordering", "[wire]") {
    DeterministicRng rng(24);
    auto kA = crypto::SymKey::random(rng);
    auto kV = crypto::SymKey::random(rng);
    auto tee = crypto::TeeFacility::provision(rng);
    auto kemV = crypto::KemKeyPair::generate(rng);
    auto skA = crypto::SigKeyPair::generate(rng);

    auto cha = encodeChallenge(crypto::randNonce(rng), id16(7), kV, rng);
    auto ak = tee.attestKey(crypto::sha256(kA.view()));
    Metrics mA = sampleMetrics(rng);

    auto msg = encodeEvidence(ak, mA, cha, kemV.pub, skA, rng);

    SECTION("roundtrip") {
        auto parsed = EvidenceMsg::parse(msg.bytes());
        CHECK(parsed == msg);
        auto content = decodeEvidence(parsed, kemV, skA.pub);
        CHECK(content.ak == ak);
        CHECK(content.mA == mA);
        CHECK(content.cha.bytes() == cha.bytes());
    }
    SECTION("signature from a different attester fails before decryption") {
        auto impostor = crypto::SigKeyPair::generate(rng);
        std::vector<std::string> log;
        {
            crypto::calllog::Scope scope(log);
            CHECK_THROWS_AS(decodeEvidence(msg, kemV, impostor.pub),
                            SignatureError);
        }
        CHECK(log == std::vector<std::string>{"checksig:fail"});
    }
    SECTION("valid signature over flipped ciphertext byte fails integrity") {
        // Re-sign the mutated evidence so only the AEAD catches the change.
        for (size_t i = 0; i < msg.ev.serialize().size(); i += 7) {
            EvidenceMsg mutated = msg;
            Bytes evRaw = msg.ev.serialize();
            evRaw[i] ^= 0x01;
            mutated.ev = crypto::HybridCiphertext::parse(evRaw);
            mutated.sig = crypto::sign(evRaw, skA);
            CHECK_THROWS_AS(decodeEvidence(mutated, kemV, skA.pub),
                            IntegrityError);
        }
    }
}

TEST_CASE("ear golden vector and roundtrip", "[wire][ear]") {
    static const auto fx = loadFixture("ear_golden.txt");
    EarResult r = sampleEar();

    Bytes encoded = encodeEar(r);
    CHECK(to_hex(encoded) == to_hex(fixtureBytes(fx, "ear_golden")));
    CHECK(encodeEar(r) == encoded);  // deterministic
    CHECK(decodeEar(encoded) == r);
}

TEST_CASE("ear rejects malformed objects", "[wire][ear]") {
    EarResult r = sampleEar();
    Bytes good = encodeEar(r);

    SECTION("unknown verdict string") {
        nlohmann::json j = nlohmann::json::from_cbor(good);
        j["verdict"] = "undecided";
        CHECK_THROWS_AS(decodeEar(nlohmann::json::to_cbor(j)), FormatError);
    }
    SECTION("missing required field") {
        nlohmann::json j = nlohmann::json::from_cbor(good);
        j.erase("iat");
        CHECK_THROWS_AS(decodeEar(nlohmann::json::to_cbor(j)), FormatError);
    }
    SECTION("attester id of wrong size") {
        nlohmann::json j = nlohmann::json::from_cbor(good);
        j["attester"] = nlohmann::json::binary({1, 2, 3});
        CHECK_THROWS_AS(decodeEar(nlohmann::json::to_cbor(j)), FormatError);
    }
    SECTION("not CBOR at all") {
        CHECK_THROWS_AS(decodeEar(to_bytes("hello")), FormatError);
    }
}

TEST_CASE("result message size law and roundtrip", "[wire]") {
    DeterministicRng rng(25);
    auto kV = crypto::SymKey::random(rng);
    auto kA = crypto::SymKey::random(rng);
    EarResult r = sampleEar();
    auto c = crypto::randNonce(rng);
    auto id = id16(0x11);

    auto msg = encodeResult(r, c, id, kV, rng);
    CHECK(msg.bytes().size() == encodeEar(r).size() + 2 + 32 + 23);

    auto content = decodeResult(ResultMsg::parse(msg.bytes()), kV);
    CHECK(content.r == r);
    CHECK(content.c == c);
    CHECK(content.idCha == id);

    SECTION("demo result object hits the 174-byte budget") {
        EarResult demo = r;
        demo.verifierId = "https://verifier.example.com/apcr/v1.0";
        CHECK(encodeEar(demo).size() == 117);
        auto res = encodeResult(demo, c, id, kV, rng);
        CHECK(res.bytes().size() == 174);
    }
    SECTION("decrypting with K_A instead of K_V fails") {
        CHECK_THROWS_AS(decodeResult(msg, kA), IntegrityError);
    }
}

TEST_CASE("metrics canonical encoding", "[wire]") {
    Metrics m;
    m.claims["zeta"] = {9, 9};
    m.claims["alpha"] = {1};
    m.claims["midway"] = {};

    Bytes once = m.encode();
    CHECK(once == m.encode());
    CHECK(Metrics::decode(once) == m);

    // Insertion order cannot change the encoding.
    Metrics reordered;
    reordered.claims["midway"] = {};
    reordered.claims["alpha"] = {1};
    reordered.claims["zeta"] = {9, 9};
    CHECK(reordered.encode() == once);

    SECTION("empty metrics encode to nothing and decode back") {
        Metrics empty;
        CHECK(empty.encode().empty());
        CHECK(Metrics::decode({}) == empty);
    }
    SECTION("truncation is rejected unless it lands on a claim boundary") {
        // Boundaries between whole claims are themselves valid encodings of
        // fewer claims; every other cut must fail.
        std::set<size_t> boundaries;
        size_t pos = 0;
        for (const auto& [name, value] : m.claims) {
            pos += 2 + name.size() + 2 + value.size();
            boundaries.insert(pos);
        }
        for (size_t len = 1; len < once.size(); ++len) {
            Bytes cut(once.begin(), once.begin() + len);
            if (boundaries.contains(len)) {
                auto partial = Metrics::decode(cut);
                CHECK(partial.encode() == cut);
            } else {
                CHECK_THROWS_AS(Metrics::decode(cut), FormatError);
            }
        }
    }
}

TEST_CASE("kdc challenge is 71 bytes and roundtrips", "[wire][kdc]") {
    DeterministicRng rng(26);
    auto kV = crypto::SymKey::random(rng);
    auto c = crypto::randNonce(rng);
    auto h = crypto::sha256(rng.bytes(32));

    auto msg = encodeKdcChallenge(c, h, kV, rng);
    CHECK(msg.bytes().size() == kKdcChallengeMsgLen);
    CHECK(kKdcChallengeMsgLen == 71);

    auto content = decodeKdcChallenge(KdcChallengeMsg::parse(msg.bytes()), kV);
    CHECK(content.c == c);
    CHECK(content.h == h);
}

TEST_CASE("kdc evidence and result messages roundtrip", "[wire][kdc]") {
    DeterministicRng rng(27);
    auto kV = crypto::SymKey::random(rng);
    auto tee = crypto::TeeFacility::provision(rng);
    auto kemV = crypto::KemKeyPair::generate(rng);
    auto kemA = crypto::KemKeyPair::generate(rng);
    auto signV = crypto::SigKeyPair::generate(rng);
    auto skA = crypto::SigKeyPair::generate(rng);

    auto h = crypto::sha256({skA.pub.data(), skA.pub.size()});
    auto cha = encodeKdcChallenge(crypto::randNonce(rng), h, kV, rng);
    Metrics mA = sampleMetrics(rng);

    auto ev = encodeKdcEvidence(
        mA, h, cha, kemV.pub,
        [&](BytesView m) { return crypto::sign(m, skA); }, skA.pub, rng);
    auto evContent = decodeKdcEvidence(KdcEvidenceMsg::parse(ev.bytes()),
                                       kemV, skA.pub);
    CHECK(evContent.mA == mA);
    CHECK(evContent.h == h);
    CHECK(evContent.cha.bytes() == cha.bytes());

    EarResult r = sampleEar();
    auto c = crypto::randNonce(rng);
    auto kS = crypto::SymKey::random(rng);
    auto resRp = encodeKdcResultToRp(r, c, h, kS, kV, rng);
    auto resA = encodeKdcResultToAttester(resRp, kS, kemA.pub, signV, rng);

    auto unwrapped = decodeKdcResultToAttester(
        KdcResultToAttesterMsg::parse(resA.bytes()), kemA, signV.pub);
    CHECK(unwrapped.resRp.bytes() == resRp.bytes());
    CHECK(unwrapped.kS == kS);

    auto rpContent = decodeKdcResultToRp(unwrapped.resRp, kV);
    CHECK(rpContent.r == r);
    CHECK(rpContent.c == c);
    CHECK(rpContent.h == h);
    CHECK(rpContent.kS == kS);

    SECTION("wrong verifier signature rejected before decryption") {
        auto impostor = crypto::SigKeyPair::generate(rng);
        std::vector<std::string> log;
        {
            crypto::calllog::Scope scope(log);
            CHECK_THROWS_AS(
                decodeKdcResultToAttester(resA, kemA, impostor.pub),
                SignatureError);
        }
        CHECK(log == std::vector<std::string>{"checksig:fail"});
    }
}

TEST_CASE("hash announce encoding", "[wire][kdc]") {
    auto h = crypto::sha256(to_bytes("pk"));
    CHECK(decodeHashAnnounce(encodeHashAnnounce(h)) == h);
    CHECK_THROWS_AS(decodeHashAnnounce(Bytes(31, 0)), FormatError);
}

TEST_CASE("golden message vectors are stable", "[wire][golden]") {
    static const auto fx = loadFixture("golden_msgs.txt");
    DeterministicRng rng(2024);

    auto kA = crypto::SymKey::random(rng);
    auto kV = crypto::SymKey::random(rng);
    auto tee = crypto::TeeFacility(crypto::SigKeyPair::generate(rng));
    auto kemV = crypto::KemKeyPair::generate(rng);
    auto kemA = crypto::KemKeyPair::generate(rng);
    auto signV = crypto::SigKeyPair::generate(rng);

    auto h = crypto::sha256(kA.view());
    auto id = crypto::attesterId(h, {tee.publicKey().data(),
                                     tee.publicKey().size()});
    auto c = crypto::randNonce(rng);

    Metrics mA;
    mA.claims["boot-hash"] = Bytes(32, 0xAA);
    mA.claims["fw-version"] = to_bytes("1.2.3");

    auto cha = encodeChallenge(c, id, kV, rng);
    CHECK(to_hex(cha.bytes()) == to_hex(fixtureBytes(fx, "msg_challenge")));

    auto ak = tee.attestKey(h);
    auto ev = encodeEvidence(
        ak, mA, cha, kemV.pub,
        [&](BytesView m) { return tee.signEvidence(m); }, tee.publicKey(),
        rng);
    CHECK(to_hex(ev.bytes()) == to_hex(fixtureBytes(fx, "msg_evidence")));

    EarResult r = sampleEar();
    r.attesterId = id;
    auto res = encodeResult(r, c, id, kV, rng);
    CHECK(to_hex(res.bytes()) == to_hex(fixtureBytes(fx, "msg_result")));

    auto hPk = crypto::sha256({tee.publicKey().data(), tee.publicKey().size()});
    auto kdcCha = encodeKdcChallenge(c, hPk, kV, rng);
    CHECK(to_hex(kdcCha.bytes()) == to_hex(fixtureBytes(fx, "msg_kdc_challenge")));

    auto kdcEv = encodeKdcEvidence(
        mA, hPk, kdcCha, kemV.pub,
        [&](BytesView m) { return tee.signEvidence(m); }, tee.publicKey(),
        rng);
    CHECK(to_hex(kdcEv.bytes()) == to_hex(fixtureBytes(fx, "msg_kdc_evidence")));

    auto kS = crypto::SymKey::random(rng);
    auto resRp = encodeKdcResultToRp(r, c, hPk, kS, kV, rng);
    CHECK(to_hex(resRp.bytes()) == to_hex(fixtureBytes(fx, "msg_kdc_result_rp")));

    auto resA = encodeKdcResultToAttester(resRp, kS, kemA.pub, signV, rng);
    CHECK(to_hex(resA.bytes()) == to_hex(fixtureBytes(fx, "msg_kdc_result_att")));
}

TEST_CASE("decode-encode identity over random inputs", "[wire][property]") {
    DeterministicRng rng(28);
    auto kV = crypto::SymKey::random(rng);

    for (int i = 0; i < 200; ++i) {
        auto c = crypto::randNonce(rng);
        crypto::Id16 id;
        rng.fill(id.data(), id.size());
        auto cha = encodeChallenge(c, id, kV, rng);
        auto content = decodeChallenge(cha, kV);
        CHECK((content.c == c && content.id == id));

        EarResult r;
        r.earVersion = std::to_string(i);
        r.issuedAt = static_cast<uint64_t>(i) * 977;
        r.verifierId = std::string(static_cast<size_t>(i % 40), 'v');
        rng.fill(r.attesterId.data(), r.attesterId.size());
        r.verdict = static_cast<EarVerdict>(i % 3);
        CHECK(decodeEar(encodeEar(r)) == r);

        auto res = encodeResult(r, c, id, kV, rng);
        auto rc = decodeResult(res, kV);
        CHECK((rc.r == r && rc.c == c && rc.idCha == id));
    }
}

TEST_CASE("plaintext fields never appear inside encodings", "[wire][property]") {
    DeterministicRng rng(29);
    auto kV = crypto::SymKey::random(rng);
    auto kemV = crypto::KemKeyPair::generate(rng);
    auto skA = crypto::SigKeyPair::generate(rng);
    auto tee = crypto::TeeFacility(crypto::SigKeyPair::generate(rng));

    for (int i = 0; i < 50; ++i) {
        auto c = crypto::randNonce(rng);
        crypto::Id16 id;
        rng.fill(id.data(), id.size());
        auto cha = encodeChallenge(c, id, kV, rng);
        CHECK_FALSE(contains(cha.bytes(), c.view()));
        CHECK_FALSE(contains(cha.bytes(), {id.data(), id.size()}));

        Metrics mA;
        mA.claims["m"] = rng.bytes(24);
        auto ak = tee.attestKey(crypto::sha256(rng.bytes(16)));
        auto ev = encodeEvidence(ak, mA, cha, kemV.pub, skA, rng);
        CHECK_FALSE(contains(ev.bytes(), mA.encode()));

        EarResult r;
        r.earVersion = "1.0.0";
        r.issuedAt = 1;
        r.verifierId = "v";
        r.attesterId = id;
        r.verdict = EarVerdict::Affirming;
        auto res = encodeResult(r, c, id, kV, rng);
        CHECK_FALSE(contains(res.bytes(), encodeEar(r)));
        CHECK_FALSE(contains(res.bytes(), c.view()));
    }
}
