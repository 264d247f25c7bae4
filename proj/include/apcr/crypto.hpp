#pragma once

#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/sha.h>

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "apcr/bytes.hpp"
#include "apcr/errors.hpp"
#include "apcr/rng.hpp"

namespace apcr::crypto {

inline constexpr size_t kSymKeyLen = 16;
inline constexpr size_t kNonceLen = 16;
inline constexpr size_t kDigestLen = 32;
inline constexpr size_t kAeadNonceLen = 13;
inline constexpr size_t kAeadTagLen = 10;
inline constexpr size_t kAeadOverhead = kAeadNonceLen + kAeadTagLen;
inline constexpr size_t kSigKeyLen = 32;
inline constexpr size_t kSigLen = 64;
inline constexpr size_t kKemKeyLen = 32;
inline constexpr size_t kIdLen = 16;
/// Encapsulated key + AEAD nonce + tag.
inline constexpr size_t kHybridOverhead = kKemKeyLen + kAeadOverhead;

using Id16 = std::array<uint8_t, kIdLen>;
using SigPublicKey = std::array<uint8_t, kSigKeyLen>;
using KemPublicKey = std::array<uint8_t, kKemKeyLen>;

// ---------------------------------------------------------------------------
// Instrumentation: optional primitive call log, used by tests to observe
// operation ordering (e.g. signature check before evidence decryption).
// ---------------------------------------------------------------------------

namespace calllog {

inline std::vector<std::string>*& sink() {
    static std::vector<std::string>* s = nullptr;
    return s;
}

inline void record(const char* op) {
    if (sink()) sink()->emplace_back(op);
}

struct Scope {
    explicit Scope(std::vector<std::string>& log) { sink() = &log; }
    ~Scope() { sink() = nullptr; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
};

} // namespace calllog

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// 128-bit shared symmetric key. Never appears in plaintext on the wire.
struct SymKey {
    std::array<uint8_t, kSymKeyLen> k{};

    static SymKey random(Rng& rng) {
        SymKey out;
        rng.fill(out.k.data(), out.k.size());
        return out;
    }

    static SymKey fromBytes(BytesView in) {
        if (in.size() != kSymKeyLen)
            throw ArgumentError("SymKey: need exactly 16 bytes");
        SymKey out;
        std::memcpy(out.k.data(), in.data(), kSymKeyLen);
        return out;
    }

    BytesView view() const { return {k.data(), k.size()}; }
    bool operator==(const SymKey& o) const { return ct_equal(view(), o.view()); }
};

/// 128-bit pseudorandom value, fresh per protocol run.
struct Nonce128 {
    std::array<uint8_t, kNonceLen> n{};

    static Nonce128 fromBytes(BytesView in) {
        if (in.size() != kNonceLen)
            throw ArgumentError("Nonce128: need exactly 16 bytes");
        Nonce128 out;
        std::memcpy(out.n.data(), in.data(), kNonceLen);
        return out;
    }

    BytesView view() const { return {n.data(), n.size()}; }
    bool operator==(const Nonce128& o) const = default;
};

/// SHA-256 output.
struct Digest {
    std::array<uint8_t, kDigestLen> d{};

    static Digest fromBytes(BytesView in) {
        if (in.size() != kDigestLen)
            throw ArgumentError("Digest: need exactly 32 bytes");
        Digest out;
        std::memcpy(out.d.data(), in.data(), kDigestLen);
        return out;
    }

    BytesView view() const { return {d.data(), d.size()}; }
    bool operator==(const Digest& o) const = default;
};

/// Random AEAD nonce, ciphertext body and authentication tag. Serialized as
/// nonce || body || tag with no framing.
struct AeadCiphertext {
    std::array<uint8_t, kAeadNonceLen> nonce{};
    Bytes body;
    std::array<uint8_t, kAeadTagLen> tag{};

    Bytes serialize() const {
        Bytes out;
        out.reserve(kAeadOverhead + body.size());
        append(out, {nonce.data(), nonce.size()});
        append(out, body);
        append(out, {tag.data(), tag.size()});
        return out;
    }

    static AeadCiphertext parse(BytesView in) {
        if (in.size() < kAeadOverhead)
            throw FormatError("AeadCiphertext: shorter than nonce+tag");
        AeadCiphertext out;
        std::memcpy(out.nonce.data(), in.data(), kAeadNonceLen);
        out.body.assign(in.begin() + kAeadNonceLen, in.end() - kAeadTagLen);
        std::memcpy(out.tag.data(), in.data() + in.size() - kAeadTagLen,
                    kAeadTagLen);
        return out;
    }

    bool operator==(const AeadCiphertext& o) const = default;
};

/// Ephemeral KEM public key plus AEAD ciphertext of the payload.
struct HybridCiphertext {
    KemPublicKey encapKey{};
    AeadCiphertext ct;

    Bytes serialize() const {
        Bytes out;
        append(out, {encapKey.data(), encapKey.size()});
        append(out, ct.serialize());
        return out;
    }

    static HybridCiphertext parse(BytesView in) {
        if (in.size() < kHybridOverhead)
            throw FormatError("HybridCiphertext: too short");
        HybridCiphertext out;
        std::memcpy(out.encapKey.data(), in.data(), kKemKeyLen);
        out.ct = AeadCiphertext::parse(in.subspan(kKemKeyLen));
        return out;
    }

    bool operator==(const HybridCiphertext& o) const = default;
};

// ---------------------------------------------------------------------------
// OpenSSL plumbing
// ---------------------------------------------------------------------------

namespace detail {

struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxDeleter {
    void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

inline PkeyPtr rawPrivateKey(int type, BytesView raw) {
    PkeyPtr p(EVP_PKEY_new_raw_private_key(type, nullptr, raw.data(),
                                           raw.size()));
    if (!p) throw CryptoBackendError("raw private key import failed");
    return p;
}

inline PkeyPtr rawPublicKey(int type, BytesView raw) {
    PkeyPtr p(EVP_PKEY_new_raw_public_key(type, nullptr, raw.data(),
                                          raw.size()));
    if (!p) throw CryptoBackendError("raw public key import failed");
    return p;
}

inline std::array<uint8_t, 32> publicFromPrivate(int type, BytesView secret) {
    auto pkey = rawPrivateKey(type, secret);
    std::array<uint8_t, 32> pub{};
    size_t len = pub.size();
    if (EVP_PKEY_get_raw_public_key(pkey.get(), pub.data(), &len) != 1 ||
        len != pub.size())
        throw CryptoBackendError("public key derivation failed");
    return pub;
}

/// AES-128-CCM seal with caller-chosen tag length and associated data.
/// senc/sdec use the protocol configuration (10-byte tag, no AD); the raw
/// entry point exists so standard test vectors with AD remain checkable.
inline Bytes ccmSeal(BytesView key, BytesView nonce, BytesView plaintext,
                     BytesView aad, size_t tagLen, uint8_t* tagOut) {
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw CryptoBackendError("cipher ctx alloc failed");
    int outl = 0;
    Bytes body(plaintext.size());
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ccm(), nullptr, nullptr,
                           nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN,
                            static_cast<int>(nonce.size()), nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG,
                            static_cast<int>(tagLen), nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(),
                           nonce.data()) != 1)
        throw CryptoBackendError("ccm encrypt init failed");
    // CCM requires the total plaintext length before any data is processed.
    if (EVP_EncryptUpdate(ctx.get(), nullptr, &outl, nullptr,
                          static_cast<int>(plaintext.size())) != 1)
        throw CryptoBackendError("ccm length announcement failed");
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &outl, aad.data(),
                          static_cast<int>(aad.size())) != 1)
        throw CryptoBackendError("ccm aad failed");
    // The data-phase update must run even for empty input or no tag is
    // computed; the pointers just have to be non-null.
    uint8_t dummy = 0;
    if (EVP_EncryptUpdate(ctx.get(),
                          plaintext.empty() ? &dummy : body.data(), &outl,
                          plaintext.empty() ? &dummy : plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        throw CryptoBackendError("ccm encrypt failed");
    if (EVP_EncryptFinal_ex(ctx.get(), nullptr, &outl) != 1)
        throw CryptoBackendError("ccm finalize failed");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG,
                            static_cast<int>(tagLen), tagOut) != 1)
        throw CryptoBackendError("ccm tag extraction failed");
    return body;
}

inline std::optional<Bytes> ccmOpen(BytesView key, BytesView nonce,
                                    BytesView body, BytesView aad,
                                    BytesView tag) {
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw CryptoBackendError("cipher ctx alloc failed");
    int outl = 0;
    Bytes plaintext(body.size());
    if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_ccm(), nullptr, nullptr,
                           nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN,
                            static_cast<int>(nonce.size()), nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG,
                            static_cast<int>(tag.size()),
                            const_cast<uint8_t*>(tag.data())) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(),
                           nonce.data()) != 1)
        throw CryptoBackendError("ccm decrypt init failed");
    if (EVP_DecryptUpdate(ctx.get(), nullptr, &outl, nullptr,
                          static_cast<int>(body.size())) != 1)
        return std::nullopt;
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &outl, aad.data(),
                          static_cast<int>(aad.size())) != 1)
        return std::nullopt;
    // Tag verification happens here; no final call for CCM.
    uint8_t dummy = 0;
    if (EVP_DecryptUpdate(ctx.get(),
                          body.empty() ? &dummy : plaintext.data(), &outl,
                          body.empty() ? &dummy : body.data(),
                          static_cast<int>(body.size())) != 1)
        return std::nullopt;
    return plaintext;
}

inline Bytes hkdfSha256(BytesView ikm, BytesView info, size_t outLen) {
    PkeyCtxPtr ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
    if (!ctx) throw CryptoBackendError("hkdf ctx alloc failed");
    Bytes out(outLen);
    size_t len = outLen;
    if (EVP_PKEY_derive_init(ctx.get()) != 1 ||
        EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()) != 1 ||
        EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), ikm.data(),
                                   static_cast<int>(ikm.size())) != 1 ||
        EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.data(),
                                    static_cast<int>(info.size())) != 1 ||
        EVP_PKEY_derive(ctx.get(), out.data(), &len) != 1 || len != outLen)
        throw CryptoBackendError("hkdf derive failed");
    return out;
}

inline std::optional<Bytes> x25519Derive(BytesView secret, BytesView peerPub) {
    auto sk = rawPrivateKey(EVP_PKEY_X25519, secret);
    auto pk = rawPublicKey(EVP_PKEY_X25519, peerPub);
    PkeyCtxPtr ctx(EVP_PKEY_CTX_new(sk.get(), nullptr));
    if (!ctx) throw CryptoBackendError("derive ctx alloc failed");
    Bytes shared(32);
    size_t len = shared.size();
    if (EVP_PKEY_derive_init(ctx.get()) != 1 ||
        EVP_PKEY_derive_set_peer(ctx.get(), pk.get()) != 1 ||
        EVP_PKEY_derive(ctx.get(), shared.data(), &len) != 1 || len != 32)
        return std::nullopt;  // low-order peer point and similar rejections
    return shared;
}

inline constexpr const char kHybridInfo[] = "apcr-hybrid-v1";

} // namespace detail

// ---------------------------------------------------------------------------
// Key pairs
// ---------------------------------------------------------------------------

/// Ed25519 signing pair; secret is the 32-byte seed, public the raw key.
struct SigKeyPair {
    std::array<uint8_t, kSigKeyLen> secret{};
    SigPublicKey pub{};

    static SigKeyPair generate(Rng& rng) {
        SigKeyPair kp;
        rng.fill(kp.secret.data(), kp.secret.size());
        kp.pub = detail::publicFromPrivate(EVP_PKEY_ED25519, kp.secretView());
        return kp;
    }

    static SigKeyPair fromSecret(BytesView secret) {
        if (secret.size() != kSigKeyLen)
            throw ArgumentError("SigKeyPair: need 32-byte secret");
        SigKeyPair kp;
        std::memcpy(kp.secret.data(), secret.data(), kSigKeyLen);
        kp.pub = detail::publicFromPrivate(EVP_PKEY_ED25519, kp.secretView());
        return kp;
    }

    BytesView secretView() const { return {secret.data(), secret.size()}; }
};

/// X25519 encryption pair for the hybrid scheme.
struct KemKeyPair {
    std::array<uint8_t, kKemKeyLen> secret{};
    KemPublicKey pub{};

    static KemKeyPair generate(Rng& rng) {
        KemKeyPair kp;
        rng.fill(kp.secret.data(), kp.secret.size());
        kp.pub = detail::publicFromPrivate(EVP_PKEY_X25519, kp.secretView());
        return kp;
    }

    static KemKeyPair fromSecret(BytesView secret) {
        if (secret.size() != kKemKeyLen)
            throw ArgumentError("KemKeyPair: need 32-byte secret");
        KemKeyPair kp;
        std::memcpy(kp.secret.data(), secret.data(), kKemKeyLen);
        kp.pub = detail::publicFromPrivate(EVP_PKEY_X25519, kp.secretView());
        return kp;
    }

    BytesView secretView() const { return {secret.data(), secret.size()}; }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline Nonce128 randNonce(Rng& rng) {
    Nonce128 out;
    rng.fill(out.n.data(), out.n.size());
    return out;
}

inline Digest sha256(BytesView m) {
    Digest out;
    SHA256(m.data(), m.size(), out.d.data());
    return out;
}

inline AeadCiphertext senc(BytesView plaintext, const SymKey& key,
                           BytesView nonce) {
    if (nonce.size() != kAeadNonceLen)
        throw ArgumentError("senc: nonce must be 13 bytes");
    calllog::record("senc");
    AeadCiphertext out;
    std::memcpy(out.nonce.data(), nonce.data(), kAeadNonceLen);
    out.body = detail::ccmSeal(key.view(), nonce, plaintext, {}, kAeadTagLen,
                               out.tag.data());
    return out;
}

/// senc with a fresh random nonce, the normal protocol path.
inline AeadCiphertext senc(BytesView plaintext, const SymKey& key, Rng& rng) {
    std::array<uint8_t, kAeadNonceLen> nonce{};
    rng.fill(nonce.data(), nonce.size());
    return senc(plaintext, key, {nonce.data(), nonce.size()});
}

inline Bytes sdec(const AeadCiphertext& ct, const SymKey& key) {
    auto pt = detail::ccmOpen(key.view(), {ct.nonce.data(), ct.nonce.size()},
                              ct.body, {}, {ct.tag.data(), ct.tag.size()});
    if (!pt) {
        calllog::record("sdec:fail");
        throw IntegrityError("sdec: authentication failed");
    }
    calllog::record("sdec");
    return *pt;
}

inline HybridCiphertext aenc(BytesView plaintext, const KemPublicKey& pk,
                             Rng& rng) {
    calllog::record("aenc");
    auto eph = KemKeyPair::generate(rng);
    auto shared = detail::x25519Derive(eph.secretView(), {pk.data(), pk.size()});
    if (!shared) throw CryptoBackendError("aenc: key agreement failed");
    Bytes info = to_bytes(detail::kHybridInfo);
    append(info, {eph.pub.data(), eph.pub.size()});
    append(info, {pk.data(), pk.size()});
    auto key = SymKey::fromBytes(detail::hkdfSha256(*shared, info, kSymKeyLen));
    HybridCiphertext out;
    out.encapKey = eph.pub;
    out.ct = senc(plaintext, key, rng);
    return out;
}

inline Bytes adec(const HybridCiphertext& ct, const KemKeyPair& sk) {
    calllog::record("adec");
    auto shared = detail::x25519Derive(
        sk.secretView(), {ct.encapKey.data(), ct.encapKey.size()});
    if (!shared) {
        calllog::record("adec:fail");
        throw IntegrityError("adec: key agreement failed");
    }
    Bytes info = to_bytes(detail::kHybridInfo);
    append(info, {ct.encapKey.data(), ct.encapKey.size()});
    append(info, {sk.pub.data(), sk.pub.size()});
    auto key = SymKey::fromBytes(detail::hkdfSha256(*shared, info, kSymKeyLen));
    try {
        return sdec(ct.ct, key);
    } catch (const IntegrityError&) {
        calllog::record("adec:fail");
        throw IntegrityError("adec: authentication failed");
    }
}

inline Bytes sign(BytesView m, const SigKeyPair& kp) {
    calllog::record("sign");
    auto pkey = detail::rawPrivateKey(EVP_PKEY_ED25519, kp.secretView());
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx) throw CryptoBackendError("md ctx alloc failed");
    Bytes sig(kSigLen);
    size_t len = sig.size();
    if (EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr,
                           pkey.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &len, m.data(), m.size()) != 1 ||
        len != kSigLen)
        throw CryptoBackendError("signing failed");
    return sig;
}

/// Returns the signed message when the signature verifies, per the protocol
/// convention that checksig yields m or an error.
inline Bytes checksig(BytesView sig, BytesView m, const SigPublicKey& pk) {
    auto pkey = detail::rawPublicKey(EVP_PKEY_ED25519, {pk.data(), pk.size()});
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx) throw CryptoBackendError("md ctx alloc failed");
    if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr,
                             pkey.get()) != 1)
        throw CryptoBackendError("verify init failed");
    if (EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), m.data(),
                         m.size()) != 1) {
        calllog::record("checksig:fail");
        throw SignatureError("checksig: signature mismatch");
    }
    calllog::record("checksig");
    return Bytes(m.begin(), m.end());
}

/// id = first 16 bytes of SHA-256(h || canonical pk encoding).
inline Id16 attesterId(const Digest& h, BytesView pk) {
    Bytes preimage = concat({h.view(), pk});
    auto digest = sha256(preimage);
    Id16 id;
    std::memcpy(id.data(), digest.d.data(), kIdLen);
    return id;
}

} // namespace apcr::crypto
