#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

#include "apcr/bytes.hpp"
#include "apcr/crypto.hpp"
#include "apcr/errors.hpp"

namespace apcr {

enum class EarVerdict { Affirming, Warning, Contraindicated };

/// Verifier identity used by the demo profile. Sized so an affirming result
/// object encodes to 117 bytes and the encrypted result message to 174.
inline constexpr const char kDemoVerifierId[] =
    "https://verifier.example.com/apcr/v1.0";

inline const char* to_string(EarVerdict v) {
    switch (v) {
        case EarVerdict::Affirming: return "affirming";
        case EarVerdict::Warning: return "warning";
        case EarVerdict::Contraindicated: return "contraindicated";
    }
    return "?";
}

inline EarVerdict verdictFromString(std::string_view s) {
    if (s == "affirming") return EarVerdict::Affirming;
    if (s == "warning") return EarVerdict::Warning;
    if (s == "contraindicated") return EarVerdict::Contraindicated;
    throw FormatError("EarResult: unknown verdict");
}

/// Verifier's attestation-result object. Encoded on the wire as a CBOR map
/// with the five keys in lexicographic order:
///   attester (bstr .size 16), iat (uint), verdict / verifier / version (tstr)
struct EarResult {
    std::string earVersion;
    uint64_t issuedAt = 0;
    std::string verifierId;
    crypto::Id16 attesterId{};
    EarVerdict verdict = EarVerdict::Contraindicated;

    bool operator==(const EarResult& o) const = default;
};

inline Bytes encodeEar(const EarResult& r) {
    nlohmann::json j;
    j["attester"] = nlohmann::json::binary(
        {r.attesterId.begin(), r.attesterId.end()});
    j["iat"] = r.issuedAt;
    j["verdict"] = to_string(r.verdict);
    j["verifier"] = r.verifierId;
    j["version"] = r.earVersion;
    return nlohmann::json::to_cbor(j);
}

inline EarResult decodeEar(BytesView in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::from_cbor(in);
    } catch (const nlohmann::json::exception&) {
        throw FormatError("EarResult: bad CBOR");
    }
    if (!j.is_object() || j.size() != 5)
        throw FormatError("EarResult: expected 5-entry map");
    if (!j.contains("attester") || !j["attester"].is_binary() ||
        j["attester"].get_binary().size() != crypto::kIdLen)
        throw FormatError("EarResult: bad attester field");
    if (!j.contains("iat") || !j["iat"].is_number_unsigned())
        throw FormatError("EarResult: bad iat field");
    if (!j.contains("verdict") || !j["verdict"].is_string())
        throw FormatError("EarResult: bad verdict field");
    if (!j.contains("verifier") || !j["verifier"].is_string())
        throw FormatError("EarResult: bad verifier field");
    if (!j.contains("version") || !j["version"].is_string())
        throw FormatError("EarResult: bad version field");
    EarResult out;
    const auto& bin = j["attester"].get_binary();
    std::copy(bin.begin(), bin.end(), out.attesterId.begin());
    out.issuedAt = j["iat"].get<uint64_t>();
    out.verdict = verdictFromString(j["verdict"].get<std::string>());
    out.verifierId = j["verifier"].get<std::string>();
    out.earVersion = j["version"].get<std::string>();
    return out;
}

} // namespace apcr
