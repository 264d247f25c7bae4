#pragma once

#include <stdexcept>
#include <string>

namespace apcr {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Authenticated decryption failed: wrong key or tampered ciphertext.
struct IntegrityError : Error {
    using Error::Error;
};

/// Signature does not verify over the presented message.
struct SignatureError : Error {
    using Error::Error;
};

/// Key-attestation envelope is forged or damaged.
struct AttestationError : Error {
    using Error::Error;
};

/// Message bytes do not parse as the expected structure.
struct FormatError : Error {
    using Error::Error;
};

/// Bad argument to a primitive (wrong nonce or key length, etc).
struct ArgumentError : Error {
    using Error::Error;
};

/// Entropy source or crypto backend failure.
struct CryptoBackendError : Error {
    using Error::Error;
};

/// Session used in a state that does not allow the operation.
struct StateError : Error {
    using Error::Error;
};

} // namespace apcr
