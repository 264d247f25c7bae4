#pragma once

#include "apcr/bytes.hpp"
#include "apcr/crypto.hpp"
#include "apcr/ear.hpp"
#include "apcr/metrics.hpp"

namespace apcr {

/// Observer for protocol landmark events, one callback per state transition
/// the security queries reason about. Sessions call these synchronously;
/// default implementations do nothing.
struct ProtocolEvents {
    virtual ~ProtocolEvents() = default;

    virtual void relyingPartyBegins(const crypto::Nonce128& /*c*/,
                                    const crypto::Id16& /*id*/,
                                    BytesView /*chaOctets*/) {}
    virtual void attesterBegins(const crypto::SigPublicKey& /*pkA*/,
                                const crypto::Digest& /*h*/,
                                const Metrics& /*mA*/,
                                BytesView /*chaOctets*/) {}
    virtual void verifierAccepts(const crypto::SigPublicKey& /*pkA*/,
                                 const Metrics& /*mA*/,
                                 const crypto::Id16& /*id*/,
                                 const crypto::Nonce128& /*c*/,
                                 const EarResult& /*rA*/) {}
    virtual void relyingPartyAccepts(const EarResult& /*rA*/,
                                     const crypto::Nonce128& /*c*/,
                                     const crypto::Id16& /*id*/) {}

    virtual void kdcRelyingPartyBegins(const crypto::Nonce128& /*c*/,
                                       const crypto::Digest& /*h*/,
                                       BytesView /*chaOctets*/) {}
    virtual void kdcAttesterBegins(const crypto::SigPublicKey& /*pkA*/,
                                   const crypto::Digest& /*h*/,
                                   const Metrics& /*mA*/,
                                   BytesView /*chaOctets*/) {}
    virtual void kdcVerifierAccepts(const crypto::SigPublicKey& /*pkA*/,
                                    const Metrics& /*mA*/,
                                    const crypto::Digest& /*h*/,
                                    const crypto::Nonce128& /*c*/,
                                    const EarResult& /*rA*/) {}
    virtual void kdcRelyingPartyAccepts(const EarResult& /*rA*/,
                                        const crypto::Nonce128& /*c*/,
                                        const crypto::Digest& /*h*/) {}
};

} // namespace apcr
