#pragma once

#include <map>
#include <string>

#include "apcr/bytes.hpp"
#include "apcr/errors.hpp"

namespace apcr {

/// Attestation metrics: claim name -> measurement octets. The map keeps
/// claims sorted, so the encoding is canonical by construction.
struct Metrics {
    std::map<std::string, Bytes> claims;

    /// Per claim: u16 name length || name || u16 value length || value.
    Bytes encode() const {
        Bytes out;
        for (const auto& [name, value] : claims) {
            if (name.size() > 0xffff || value.size() > 0xffff)
                throw ArgumentError("Metrics: claim too large");
            append_u16be(out, static_cast<uint16_t>(name.size()));
            append(out, to_bytes(name));
            append_u16be(out, static_cast<uint16_t>(value.size()));
            append(out, value);
        }
        return out;
    }

    static Metrics decode(BytesView in) {
        Metrics out;
        size_t pos = 0;
        while (pos < in.size()) {
            size_t nameLen = read_u16be(in, pos);
            pos += 2;
            if (pos + nameLen > in.size())
                throw FormatError("Metrics: truncated claim name");
            std::string name(in.begin() + pos, in.begin() + pos + nameLen);
            pos += nameLen;
            if (pos + 2 > in.size())
                throw FormatError("Metrics: missing value length");
            size_t valueLen = read_u16be(in, pos);
            pos += 2;
            if (pos + valueLen > in.size())
                throw FormatError("Metrics: truncated value");
            Bytes value(in.begin() + pos, in.begin() + pos + valueLen);
            pos += valueLen;
            if (!out.claims.emplace(std::move(name), std::move(value)).second)
                throw FormatError("Metrics: duplicate claim");
        }
        return out;
    }

    bool operator==(const Metrics& o) const = default;
};

} // namespace apcr
