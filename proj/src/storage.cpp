#include "crowdsense/storage.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <system_error>

namespace fs = std::filesystem;

namespace crowdsense::storage {

namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) {
        throw StorageError(StorageErrc::Unavailable, "libsodium initialization failed");
    }
}

void append_u64_le(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::array<std::uint8_t, 32> sha256(ByteView bytes) {
    ensure_sodium();
    std::array<std::uint8_t, 32> out{};
    crypto_hash_sha256(out.data(), bytes.data(), bytes.size());
    return out;
}

Bytes derive_nonce(const NonceSeed& seed, std::size_t len) {
    Bytes material = to_bytes("crowdsense/nonce/v1");
    append_u64_le(material, seed.campaign);
    append_u64_le(material, seed.source.size());
    material.insert(material.end(), seed.source.begin(), seed.source.end());
    append_u64_le(material, seed.chunk_index);
    const auto digest = sha256(material);
    return Bytes(digest.begin(), digest.begin() + static_cast<std::ptrdiff_t>(len));
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

// --- test cipher primitives ---

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv1a(std::uint64_t h, ByteView bytes) {
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

void apply_test_stream(const SymmetricKey& key, ByteView nonce, Bytes& data) {
    std::uint64_t state = fnv1a(fnv1a(kFnvOffset, key), nonce);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (i % 8 == 0) word = splitmix64(state);
        data[i] ^= static_cast<std::uint8_t>(word >> (8 * (i % 8)));
    }
}

Bytes test_tag(const SymmetricKey& key, ByteView nonce, ByteView ciphertext) {
    Bytes out;
    for (std::uint64_t lane : {0x1ull, 0x2ull}) {
        std::uint64_t h = fnv1a(kFnvOffset ^ lane, key);
        h = fnv1a(h, nonce);
        h = fnv1a(h, ciphertext);
        Bytes len;
        append_u64_le(len, ciphertext.size());
        h = fnv1a(h, len);
        append_u64_le(out, h);
    }
    return out;
}

}  // namespace

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

std::vector<Chunk> chunk_data(ByteView data, std::size_t chunk_size) {
    if (chunk_size < 2) {
        throw StorageError(StorageErrc::InvalidParameter, "chunk_size must be >= 2");
    }
    const std::size_t count = (data.size() + 1 + chunk_size - 1) / chunk_size;
    std::vector<Chunk> chunks;
    chunks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Chunk c;
        c.payload.assign(chunk_size, 0);
        const std::size_t begin = i * chunk_size;
        const std::size_t end = std::min(data.size(), begin + chunk_size);
        if (begin < end) {
            std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin),
                      data.begin() + static_cast<std::ptrdiff_t>(end), c.payload.begin());
        }
        if (data.size() >= begin && data.size() < begin + chunk_size) {
            c.payload[data.size() - begin] = kPaddingMarker;
        }
        chunks.push_back(std::move(c));
    }
    return chunks;
}

Bytes unchunk_data(std::span<const Chunk> chunks) {
    if (chunks.empty()) {
        throw StorageError(StorageErrc::Corruption, "no chunks");
    }
    const std::size_t size = chunks.front().payload.size();
    if (size < 2) {
        throw StorageError(StorageErrc::Corruption, "chunk shorter than 2 bytes");
    }
    for (const auto& c : chunks) {
        if (c.payload.size() != size) {
            throw StorageError(StorageErrc::Corruption, "chunks have inconsistent lengths");
        }
    }
    const Bytes& last = chunks.back().payload;
    auto it = std::find_if(last.rbegin(), last.rend(), [](std::uint8_t b) { return b != 0; });
    if (it == last.rend() || *it != kPaddingMarker) {
        throw StorageError(StorageErrc::Corruption, "final chunk has no padding marker");
    }
    const std::size_t tail = static_cast<std::size_t>(std::distance(it, last.rend())) - 1;

    Bytes out;
    out.reserve((chunks.size() - 1) * size + tail);
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) {
        out.insert(out.end(), chunks[i].payload.begin(), chunks[i].payload.end());
    }
    out.insert(out.end(), last.begin(), last.begin() + static_cast<std::ptrdiff_t>(tail));
    return out;
}

// ---------------------------------------------------------------------------
// Content addressing
// ---------------------------------------------------------------------------

std::string ContentAddress::hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (std::uint8_t b : digest) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xf]);
    }
    return out;
}

ContentAddress ContentAddress::from_hex(std::string_view hex) {
    ContentAddress addr;
    if (hex.size() != addr.digest.size() * 2) {
        throw StorageError(StorageErrc::InvalidParameter, "content address must be 64 hex digits");
    }
    for (std::size_t i = 0; i < addr.digest.size(); ++i) {
        const int hi = hex_value(hex[2 * i]);
        const int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            throw StorageError(StorageErrc::InvalidParameter, "content address is not hex");
        }
        addr.digest[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return addr;
}

ContentAddress content_address(ByteView bytes) { return ContentAddress{sha256(bytes)}; }

// ---------------------------------------------------------------------------
// Encryption
// ---------------------------------------------------------------------------

SymmetricKey derive_key(std::uint64_t seed) {
    Bytes material = to_bytes("crowdsense/campaign-key/v1");
    append_u64_le(material, seed);
    return sha256(material);
}

Bytes CipherEnvelope::serialize() const {
    if (nonce.size() > 255 || tag.size() > 255) {
        throw StorageError(StorageErrc::InvalidParameter, "nonce or tag too long");
    }
    Bytes out;
    out.reserve(2 + nonce.size() + tag.size() + ciphertext.size());
    out.push_back(static_cast<std::uint8_t>(nonce.size()));
    out.insert(out.end(), nonce.begin(), nonce.end());
    out.push_back(static_cast<std::uint8_t>(tag.size()));
    out.insert(out.end(), tag.begin(), tag.end());
    out.insert(out.end(), ciphertext.begin(), ciphertext.end());
    return out;
}

CipherEnvelope CipherEnvelope::parse(ByteView wire) {
    auto fail = [] { return StorageError(StorageErrc::Corruption, "malformed envelope"); };
    std::size_t pos = 0;
    auto take = [&](std::size_t n) {
        if (wire.size() - pos < n) throw fail();
        Bytes out(wire.begin() + static_cast<std::ptrdiff_t>(pos),
                  wire.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return out;
    };
    CipherEnvelope env;
    env.nonce = take(take(1)[0]);
    env.tag = take(take(1)[0]);
    env.ciphertext = take(wire.size() - pos);
    return env;
}

AeadCipher::AeadCipher() { ensure_sodium(); }

CipherEnvelope AeadCipher::encrypt(const SymmetricKey& key, const Chunk& chunk,
                                   const NonceSeed& seed) const {
    CipherEnvelope env;
    env.nonce = derive_nonce(seed, crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
    env.ciphertext.resize(chunk.payload.size());
    env.tag.resize(crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long tag_len = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt_detached(
        env.ciphertext.data(), env.tag.data(), &tag_len, chunk.payload.data(),
        chunk.payload.size(), nullptr, 0, nullptr, env.nonce.data(), key.data());
    return env;
}

Chunk AeadCipher::decrypt(const SymmetricKey& key, const CipherEnvelope& env) const {
    if (env.nonce.size() != crypto_aead_xchacha20poly1305_ietf_NPUBBYTES ||
        env.tag.size() != crypto_aead_xchacha20poly1305_ietf_ABYTES) {
        throw StorageError(StorageErrc::AuthenticationFailure, "envelope shape mismatch");
    }
    Chunk out;
    out.payload.resize(env.ciphertext.size());
    if (crypto_aead_xchacha20poly1305_ietf_decrypt_detached(
            out.payload.data(), nullptr, env.ciphertext.data(), env.ciphertext.size(),
            env.tag.data(), nullptr, 0, env.nonce.data(), key.data()) != 0) {
        throw StorageError(StorageErrc::AuthenticationFailure, "authentication failed");
    }
    return out;
}

CipherEnvelope TestCipher::encrypt(const SymmetricKey& key, const Chunk& chunk,
                                   const NonceSeed& seed) const {
    CipherEnvelope env;
    env.nonce = derive_nonce(seed, 16);
    env.ciphertext = chunk.payload;
    apply_test_stream(key, env.nonce, env.ciphertext);
    env.tag = test_tag(key, env.nonce, env.ciphertext);
    return env;
}

Chunk TestCipher::decrypt(const SymmetricKey& key, const CipherEnvelope& env) const {
    const Bytes expected = test_tag(key, env.nonce, env.ciphertext);
    if (env.tag.size() != expected.size() ||
        sodium_memcmp(env.tag.data(), expected.data(), expected.size()) != 0) {
        throw StorageError(StorageErrc::AuthenticationFailure, "checksum mismatch");
    }
    Chunk out{env.ciphertext};
    apply_test_stream(key, env.nonce, out.payload);
    return out;
}

const Cipher& default_cipher() {
    static const AeadCipher cipher;
    return cipher;
}

CipherEnvelope encrypt_chunk(const SymmetricKey& key, const Chunk& chunk, const NonceSeed& seed,
                             const Cipher& cipher) {
    return cipher.encrypt(key, chunk, seed);
}

Chunk decrypt_chunk(const SymmetricKey& key, const CipherEnvelope& env, const Cipher& cipher) {
    return cipher.decrypt(key, env);
}

// ---------------------------------------------------------------------------
// Stores
// ---------------------------------------------------------------------------

ContentAddress MemoryStore::put(ByteView bytes) {
    ContentAddress addr = content_address(bytes);
    std::unique_lock lock(mu_);
    objects_.try_emplace(addr, bytes.begin(), bytes.end());
    return addr;
}

Bytes MemoryStore::get(const ContentAddress& addr) const {
    std::shared_lock lock(mu_);
    auto it = objects_.find(addr);
    if (it == objects_.end()) {
        throw StorageError(StorageErrc::NotFound, "no object " + addr.hex());
    }
    return it->second;
}

bool MemoryStore::contains(const ContentAddress& addr) const {
    std::shared_lock lock(mu_);
    return objects_.contains(addr);
}

std::size_t MemoryStore::stored_size(const ContentAddress& addr) const {
    std::shared_lock lock(mu_);
    auto it = objects_.find(addr);
    if (it == objects_.end()) {
        throw StorageError(StorageErrc::NotFound, "no object " + addr.hex());
    }
    return it->second.size();
}

std::size_t MemoryStore::object_count() const {
    std::shared_lock lock(mu_);
    return objects_.size();
}

DirectoryStore::DirectoryStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_ / "objects", ec);
    if (ec) {
        throw StorageError(StorageErrc::Unavailable,
                           "cannot create " + (root_ / "objects").string() + ": " + ec.message());
    }
}

fs::path DirectoryStore::object_path(const ContentAddress& addr) const {
    const std::string hex = addr.hex();
    return root_ / "objects" / hex.substr(0, 2) / hex;
}

void DirectoryStore::check_available() const {
    std::error_code ec;
    if (!fs::is_directory(root_ / "objects", ec)) {
        throw StorageError(StorageErrc::Unavailable, "store root missing: " + root_.string());
    }
}

ContentAddress DirectoryStore::put(ByteView bytes) {
    check_available();
    const ContentAddress addr = content_address(bytes);
    const fs::path path = object_path(addr);
    std::lock_guard lock(write_mu_);
    std::error_code ec;
    if (fs::exists(path, ec)) return addr;
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
        throw StorageError(StorageErrc::Unavailable, "cannot create " + path.parent_path().string());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw StorageError(StorageErrc::Unavailable, "write failed: " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw StorageError(StorageErrc::Unavailable, "rename failed: " + path.string());
    return addr;
}

Bytes DirectoryStore::get(const ContentAddress& addr) const {
    check_available();
    const fs::path path = object_path(addr);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError(StorageErrc::NotFound, "no object " + addr.hex());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool DirectoryStore::contains(const ContentAddress& addr) const {
    check_available();
    std::error_code ec;
    return fs::is_regular_file(object_path(addr), ec);
}

std::size_t DirectoryStore::stored_size(const ContentAddress& addr) const {
    check_available();
    std::error_code ec;
    const auto size = fs::file_size(object_path(addr), ec);
    if (ec) throw StorageError(StorageErrc::NotFound, "no object " + addr.hex());
    return static_cast<std::size_t>(size);
}

std::size_t DirectoryStore::object_count() const {
    check_available();
    std::size_t n = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root_ / "objects")) {
        if (entry.is_regular_file() && entry.path().extension() != ".tmp") ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

std::vector<ContentAddress> upload_dataset(ContentStore& store, const SymmetricKey& key,
                                           ByteView data, std::size_t chunk_size,
                                           std::uint64_t campaign, std::string_view source,
                                           const Cipher& cipher) {
    const auto chunks = chunk_data(data, chunk_size);
    std::vector<ContentAddress> locations;
    locations.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto env = cipher.encrypt(key, chunks[i], NonceSeed{campaign, source, i});
        locations.push_back(store.put(env.serialize()));
    }
    return locations;
}

bool verify_dataset(const ContentStore& store, std::span<const ContentAddress> locations,
                    const SymmetricKey& key, const FormatCheck& format_check,
                    const Cipher& cipher) {
    if (locations.empty()) return false;
    std::vector<Chunk> chunks;
    chunks.reserve(locations.size());
    try {
        for (const auto& addr : locations) {
            chunks.push_back(cipher.decrypt(key, CipherEnvelope::parse(store.get(addr))));
        }
        const Bytes payload = unchunk_data(chunks);
        return format_check ? format_check(payload) : true;
    } catch (const StorageError& e) {
        if (e.code() == StorageErrc::Unavailable) throw;
        return false;
    }
}

}  // namespace crowdsense::storage
