#pragma once

// Data-path primitives: equal-size chunking, authenticated per-chunk
// encryption and a content-addressed object store.
//
// A dataset travels as: chunk_data -> encrypt each chunk -> put each
// serialized envelope into a ContentStore. The resulting ordered address list
// is what a source registers with a campaign. Every stored object of one
// campaign has the same size, so the store leaks nothing about how much data
// an individual source produced beyond its chunk count.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crowdsense::storage {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view s);

enum class StorageErrc {
    InvalidParameter,
    Corruption,
    AuthenticationFailure,
    NotFound,
    Unavailable,
};

class StorageError : public std::runtime_error {
public:
    StorageError(StorageErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    StorageErrc code() const noexcept { return code_; }

private:
    StorageErrc code_;
};

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

struct Chunk {
    Bytes payload;
    friend bool operator==(const Chunk&, const Chunk&) = default;
};

inline constexpr std::uint8_t kPaddingMarker = 0x80;

// Splits data into chunk_size pieces. The input is always extended by one
// marker byte followed by zero fill up to the next chunk boundary, so an input
// of n bytes yields ceil((n + 1) / chunk_size) chunks and unchunk_data needs
// no external length. Requires chunk_size >= 2.
std::vector<Chunk> chunk_data(ByteView data, std::size_t chunk_size);

// Inverse of chunk_data. Throws Corruption on empty input, non-uniform chunk
// lengths, or a final chunk without a valid marker.
Bytes unchunk_data(std::span<const Chunk> chunks);

// ---------------------------------------------------------------------------
// Content addressing
// ---------------------------------------------------------------------------

struct ContentAddress {
    std::array<std::uint8_t, 32> digest{};

    std::string hex() const;
    static ContentAddress from_hex(std::string_view hex);

    friend auto operator<=>(const ContentAddress&, const ContentAddress&) = default;
};

// SHA-256 of the bytes.
ContentAddress content_address(ByteView bytes);

// ---------------------------------------------------------------------------
// Encryption
// ---------------------------------------------------------------------------

using SymmetricKey = std::array<std::uint8_t, 32>;

// Derives a campaign key from a seed. Same seed, same key.
SymmetricKey derive_key(std::uint64_t seed);

// Identifies one chunk within the whole system. The nonce is a hash of these
// three values, so it is unique per (campaign, source, chunk index).
struct NonceSeed {
    std::uint64_t campaign = 0;
    std::string_view source;
    std::uint64_t chunk_index = 0;
};

struct CipherEnvelope {
    Bytes nonce;
    Bytes ciphertext;
    Bytes tag;

    // Wire layout: u8 nonce_len | nonce | u8 tag_len | tag | ciphertext
    Bytes serialize() const;
    static CipherEnvelope parse(ByteView wire);

    friend bool operator==(const CipherEnvelope&, const CipherEnvelope&) = default;
};

class Cipher {
public:
    virtual ~Cipher() = default;
    virtual std::string_view name() const = 0;
    virtual CipherEnvelope encrypt(const SymmetricKey& key, const Chunk& chunk,
                                   const NonceSeed& seed) const = 0;
    // Throws AuthenticationFailure on wrong key or any tampering.
    virtual Chunk decrypt(const SymmetricKey& key, const CipherEnvelope& env) const = 0;
};

// XChaCha20-Poly1305 (libsodium).
class AeadCipher final : public Cipher {
public:
    AeadCipher();
    std::string_view name() const override { return "xchacha20poly1305"; }
    CipherEnvelope encrypt(const SymmetricKey& key, const Chunk& chunk,
                           const NonceSeed& seed) const override;
    Chunk decrypt(const SymmetricKey& key, const CipherEnvelope& env) const override;
};

// Keyed splitmix64 stream plus a keyed FNV-1a checksum. Not secure; it exists
// so fixtures can be reproduced by hand in other languages.
class TestCipher final : public Cipher {
public:
    std::string_view name() const override { return "test-stream"; }
    CipherEnvelope encrypt(const SymmetricKey& key, const Chunk& chunk,
                           const NonceSeed& seed) const override;
    Chunk decrypt(const SymmetricKey& key, const CipherEnvelope& env) const override;
};

const Cipher& default_cipher();

CipherEnvelope encrypt_chunk(const SymmetricKey& key, const Chunk& chunk, const NonceSeed& seed,
                             const Cipher& cipher = default_cipher());
Chunk decrypt_chunk(const SymmetricKey& key, const CipherEnvelope& env,
                    const Cipher& cipher = default_cipher());

// ---------------------------------------------------------------------------
// Content-addressed store
// ---------------------------------------------------------------------------

// Reads may run concurrently; writes are serialized internally.
class ContentStore {
public:
    virtual ~ContentStore() = default;
    // Idempotent: storing identical bytes returns the same address and keeps
    // one copy.
    virtual ContentAddress put(ByteView bytes) = 0;
    // Throws NotFound for unknown addresses, Unavailable if the backend
    // itself cannot be reached.
    virtual Bytes get(const ContentAddress& addr) const = 0;
    virtual bool contains(const ContentAddress& addr) const = 0;
    virtual std::size_t stored_size(const ContentAddress& addr) const = 0;
    virtual std::size_t object_count() const = 0;
};

class MemoryStore final : public ContentStore {
public:
    ContentAddress put(ByteView bytes) override;
    Bytes get(const ContentAddress& addr) const override;
    bool contains(const ContentAddress& addr) const override;
    std::size_t stored_size(const ContentAddress& addr) const override;
    std::size_t object_count() const override;

private:
    mutable std::shared_mutex mu_;
    std::map<ContentAddress, Bytes> objects_;
};

// One file per object at <root>/objects/<first-2-hex>/<full-hex>, holding the
// raw bytes that were put (serialized envelopes in practice).
class DirectoryStore final : public ContentStore {
public:
    // Creates <root>/objects if missing.
    explicit DirectoryStore(std::filesystem::path root);

    ContentAddress put(ByteView bytes) override;
    Bytes get(const ContentAddress& addr) const override;
    bool contains(const ContentAddress& addr) const override;
    std::size_t stored_size(const ContentAddress& addr) const override;
    std::size_t object_count() const override;

    std::filesystem::path object_path(const ContentAddress& addr) const;
    const std::filesystem::path& root() const { return root_; }

private:
    void check_available() const;

    std::filesystem::path root_;
    std::mutex write_mu_;
};

inline ContentAddress dfs_put(ContentStore& store, ByteView bytes) { return store.put(bytes); }
inline Bytes dfs_get(const ContentStore& store, const ContentAddress& addr) { return store.get(addr); }

// ---------------------------------------------------------------------------
// Source and verifier helpers
// ---------------------------------------------------------------------------

// Chunks, encrypts and uploads a dataset; returns the ordered locations.
std::vector<ContentAddress> upload_dataset(ContentStore& store, const SymmetricKey& key,
                                           ByteView data, std::size_t chunk_size,
                                           std::uint64_t campaign, std::string_view source,
                                           const Cipher& cipher = default_cipher());

using FormatCheck = std::function<bool(ByteView)>;

// Fetches, decrypts and reassembles a dataset and applies format_check.
// Missing objects, authentication failures, bad padding and a failing format
// check all yield false. Only Unavailable propagates as an exception.
bool verify_dataset(const ContentStore& store, std::span<const ContentAddress> locations,
                    const SymmetricKey& key, const FormatCheck& format_check,
                    const Cipher& cipher = default_cipher());

}  // namespace crowdsense::storage
