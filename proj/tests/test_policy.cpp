#include <catch2/catch_amalgamated.hpp>

#include "apcr/policy.hpp"

using namespace apcr;
using namespace apcr::policy;

namespace {

ReferencePolicy threeClaimPolicy() {
    ReferencePolicy p;
    p.allowed["boot-hash"] = {Bytes{1, 1}, Bytes{1, 2}};
    p.allowed["fw-version"] = {Bytes{2}};
    p.allowed["app-hash"] = {Bytes{3, 3, 3}};
    return p;
}

} // namespace

TEST_CASE("policy file parsing", "[policy]") {
    auto p = ReferencePolicy::parse(
        "# reference values\n"
        "boot-hash 0101 0102\n"
        "\n"
        "fw-version 02   # current release\n"
        "app-hash 030303\n");
    CHECK(p.allowed == threeClaimPolicy().allowed);

    CHECK_THROWS_AS(ReferencePolicy::parse("orphan-claim\n"), FormatError);
    CHECK_THROWS_AS(ReferencePolicy::parse("claim 0x\n"), std::exception);
}

TEST_CASE("appraisal basics", "[policy]") {
    auto policy = threeClaimPolicy();

    Metrics exact;
    exact.claims["boot-hash"] = {1, 2};
    exact.claims["fw-version"] = {2};
    exact.claims["app-hash"] = {3, 3, 3};
    CHECK(appraise(policy, exact) == EarVerdict::Affirming);

    SECTION("one digest differing") {
        Metrics m = exact;
        m.claims["fw-version"] = {9};
        CHECK(appraise(policy, m) == EarVerdict::Contraindicated);
    }
    SECTION("extra unknown claim") {
        Metrics m = exact;
        m.claims["vendor-blob"] = {7};
        CHECK(appraise(policy, m) == EarVerdict::Warning);
    }
    SECTION("empty metrics") {
        CHECK(appraise(policy, Metrics{}) == EarVerdict::Contraindicated);
    }
    SECTION("any allowed digest of the set is accepted") {
        Metrics m = exact;
        m.claims["boot-hash"] = {1, 1};
        CHECK(appraise(policy, m) == EarVerdict::Affirming);
    }
}

// Exhaustive enumeration over the 3-claim policy: each claim in state
// match / mismatch / missing, with and without an extra unknown claim. The
// expected verdict is recomputed here from the stated contract, not from
// the implementation.
TEST_CASE("appraisal truth table", "[policy]") {
    auto policy = threeClaimPolicy();
    const std::array<std::string, 3> names{"boot-hash", "fw-version",
                                           "app-hash"};
    const std::array<Bytes, 3> good{Bytes{1, 1}, Bytes{2}, Bytes{3, 3, 3}};

    enum ClaimState { Match = 0, Mismatch = 1, Missing = 2 };

    int checked = 0;
    for (int s0 = 0; s0 < 3; ++s0)
        for (int s1 = 0; s1 < 3; ++s1)
            for (int s2 = 0; s2 < 3; ++s2)
                for (int extra = 0; extra < 2; ++extra) {
                    std::array<int, 3> states{s0, s1, s2};
                    Metrics m;
                    for (size_t i = 0; i < 3; ++i) {
                        if (states[i] == Match)
                            m.claims[names[i]] = good[i];
                        else if (states[i] == Mismatch)
                            m.claims[names[i]] = Bytes{0xde, 0xad};
                    }
                    if (extra) m.claims["unknown-extra"] = Bytes{0x55};

                    bool anyBad = s0 != Match || s1 != Match || s2 != Match;
                    EarVerdict expected =
                        anyBad ? EarVerdict::Contraindicated
                               : (extra ? EarVerdict::Warning
                                        : EarVerdict::Affirming);
                    INFO("states " << s0 << s1 << s2 << " extra " << extra);
                    CHECK(appraise(policy, m) == expected);
                    ++checked;
                }
    CHECK(checked == 54);
}

TEST_CASE("validateMetrics fills the result object", "[policy]") {
    auto policy = threeClaimPolicy();
    Metrics m;
    m.claims["boot-hash"] = {1, 1};
    m.claims["fw-version"] = {2};
    m.claims["app-hash"] = {3, 3, 3};

    EarTemplate tmpl;
    tmpl.verifierId = "unit-verifier";
    tmpl.issuedAt = 123456;
    tmpl.attesterId.fill(0xCD);

    EarResult r = validateMetrics(policy, m, tmpl);
    CHECK(r.verdict == EarVerdict::Affirming);
    CHECK(r.verifierId == "unit-verifier");
    CHECK(r.issuedAt == 123456);
    CHECK(r.attesterId == tmpl.attesterId);
    CHECK(r.earVersion == "1.0.0");

    // Deterministic: same inputs, same object.
    CHECK(validateMetrics(policy, m, tmpl) == r);
}
