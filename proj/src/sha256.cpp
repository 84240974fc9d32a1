#include "qmark/sha256.hpp"

#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

#include "qmark/error.hpp"

namespace qmark {

Digest sha256(std::span<const std::uint8_t> bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    Digest out{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
        throw std::runtime_error("sha256: digest computation failed");
    }
    return out;
}

std::string to_hex(const Digest& digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(digest.size() * 2);
    for (std::uint8_t b : digest) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

std::optional<Digest> digest_from_hex(std::string_view hex) {
    if (hex.size() != 64) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Digest d{};
    for (std::size_t i = 0; i < d.size(); ++i) {
        const int hi = nibble(hex[2 * i]);
        const int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        d[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return d;
}

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::degenerate_tensor: return "degenerate_tensor";
        case Errc::degenerate_activation_profile: return "degenerate_activation_profile";
        case Errc::pool_shortfall: return "pool_shortfall";
        case Errc::signature_length: return "signature_length";
        case Errc::bad_magic: return "bad_magic";
        case Errc::unsupported_version: return "unsupported_version";
        case Errc::bad_header: return "bad_header";
        case Errc::truncated_payload: return "truncated_payload";
        case Errc::shape_mismatch: return "shape_mismatch";
        case Errc::hash_mismatch: return "hash_mismatch";
        case Errc::wrong_original_bundle: return "wrong_original_bundle";
        case Errc::malformed_key: return "malformed_key";
        case Errc::io_error: return "io_error";
    }
    return "unknown";
}

}  // namespace qmark
