#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>

#include "apcr/bytes.hpp"
#include "apcr/ear.hpp"
#include "apcr/errors.hpp"
#include "apcr/metrics.hpp"

namespace apcr::policy {

/// Reference values: claim name -> set of acceptable measurements.
struct ReferencePolicy {
    std::map<std::string, std::set<Bytes>> allowed;

    /// One claim per line: `<claim-name> <hex> [<hex>...]`. Blank lines and
    /// `#` comments ignored.
    static ReferencePolicy parse(std::string_view text) {
        ReferencePolicy out;
        std::istringstream stream{std::string(text)};
        std::string line;
        while (std::getline(stream, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream fields(line);
            std::string claim;
            if (!(fields >> claim)) continue;
            auto& values = out.allowed[claim];
            std::string hex;
            while (fields >> hex) values.insert(from_hex(hex));
            if (values.empty())
                throw FormatError("policy: claim without reference value: " +
                                  claim);
        }
        return out;
    }
};

/// Appraisal contract: affirming when every policy claim is present with an
/// allowed value and nothing else was reported; warning when all policy
/// claims match but unknown extra claims exist; contraindicated when any
/// policy claim is missing or mismatched.
inline EarVerdict appraise(const ReferencePolicy& policy, const Metrics& mA) {
    for (const auto& [claim, values] : policy.allowed) {
        auto it = mA.claims.find(claim);
        if (it == mA.claims.end()) return EarVerdict::Contraindicated;
        if (!values.contains(it->second)) return EarVerdict::Contraindicated;
    }
    for (const auto& [claim, value] : mA.claims) {
        if (!policy.allowed.contains(claim)) return EarVerdict::Warning;
    }
    return EarVerdict::Affirming;
}

struct EarTemplate {
    std::string earVersion = "1.0.0";
    std::string verifierId;
    uint64_t issuedAt = 0;
    crypto::Id16 attesterId{};
};

inline EarResult validateMetrics(const ReferencePolicy& policy,
                                 const Metrics& mA, const EarTemplate& tmpl) {
    EarResult r;
    r.earVersion = tmpl.earVersion;
    r.issuedAt = tmpl.issuedAt;
    r.verifierId = tmpl.verifierId;
    r.attesterId = tmpl.attesterId;
    r.verdict = appraise(policy, mA);
    return r;
}

} // namespace apcr::policy
