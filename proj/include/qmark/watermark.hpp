#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qmark/bundle.hpp"
#include "qmark/scoring.hpp"
#include "qmark/sha256.hpp"

namespace qmark {

/// Owner signature: a non-empty sequence of +1/-1 values.
class Signature {
public:
    Signature() = default;
    explicit Signature(std::vector<int> bits);

    /// Rademacher bits from a splitmix64 stream started at `seed`: the low bit
    /// of each draw, 1 -> +1 and 0 -> -1.
    static Signature from_seed(std::uint64_t seed, std::size_t length);

    std::span<const int> bits() const noexcept { return bits_; }
    std::size_t size() const noexcept { return bits_.size(); }
    int operator[](std::size_t i) const { return bits_[i]; }

    friend bool operator==(const Signature&, const Signature&) = default;

private:
    std::vector<int> bits_;
};

/// Everything besides the signature that location derivation depends on.
struct LocationParams {
    std::uint64_t seed = 100;
    double alpha = 0.5;
    double beta = 0.5;
    std::size_t pool_size = 0;       // |B_c| per layer
    std::size_t bits_per_layer = 0;  // |B| / n

    friend bool operator==(const LocationParams&, const LocationParams&) = default;
};

struct WatermarkKey {
    int version = 1;
    LocationParams params;
    Signature signature;
    Digest original_bundle_hash{};
    std::string created_at;  // RFC-3339

    friend bool operator==(const WatermarkKey&, const WatermarkKey&) = default;
};

struct LayerLocations {
    std::string layer_name;
    std::vector<Position> positions;
    std::vector<int> bits;  // signature bit carried by each position
};

struct WatermarkLocations {
    std::vector<LayerLocations> layers;

    std::size_t total() const noexcept;
};

struct LayerVerification {
    std::string layer_name;
    std::size_t inserted = 0;
    std::size_t matched = 0;
};

struct VerificationReport {
    std::size_t total_bits = 0;
    std::size_t matched_bits = 0;
    double wer = 0.0;  // percent
    double log10_p_value = 0.0;
    std::vector<LayerVerification> per_layer;
};

/// Selection order inside one layer's sorted pool: indices picked by a partial
/// Fisher-Yates shuffle driven by splitmix64 seeded with
/// splitmix64(seed ^ (layer_index * 0x9E3779B97F4A7C15)).
std::vector<std::size_t> select_pool_indices(std::uint64_t seed, std::size_t layer_index,
                                             std::size_t pool_size, std::size_t count);

/// Scores each layer, builds its candidate pool and selects bits_per_layer
/// positions from it. `signature` assigns bits in global order: layer 0 takes
/// the first bits_per_layer, layer 1 the next, and so on.
WatermarkLocations derive_locations(const ModelBundle& bundle, const LocationParams& params,
                                    const Signature& signature, unsigned threads = 1);

/// Same, but refuses to run unless the bundle hashes to `key.original_bundle_hash`.
WatermarkLocations derive_locations(const ModelBundle& original, const WatermarkKey& key,
                                    unsigned threads = 1);

struct InsertParams {
    std::uint64_t seed = 100;
    double alpha = 0.5;
    double beta = 0.5;
    std::size_t pool_size = 0;
    std::string created_at;
};

struct InsertResult {
    ModelBundle bundle;
    WatermarkKey key;
    WatermarkLocations locations;
};

/// W'[L_i] = W[L_i] + b_i. |B| must be a multiple of the layer count.
InsertResult insert(const ModelBundle& bundle, const Signature& signature,
                    const InsertParams& params, unsigned threads = 1);

/// Bit i matches iff W'[L_i] - W[L_i] == b_i exactly.
VerificationReport extract(const ModelBundle& suspect, const ModelBundle& original,
                           const WatermarkKey& key, unsigned threads = 1);

/// Compares at already-derived locations (no hash check, no re-derivation).
VerificationReport extract_at(const ModelBundle& suspect, const ModelBundle& original,
                              const WatermarkLocations& locations);

/// Structural consistency of a key against a bundle layer count. Throws Error
/// with Errc::malformed_key.
void validate_key(const WatermarkKey& key, std::size_t layer_count);

// Key and report files (JSON).
std::string key_to_json(const WatermarkKey& key);
WatermarkKey key_from_json(std::string_view text);
void save_key(const WatermarkKey& key, const std::filesystem::path& path);
WatermarkKey load_key(const std::filesystem::path& path);

std::string report_to_json(const VerificationReport& report);
VerificationReport report_from_json(std::string_view text);

/// Current UTC time as RFC-3339 (seconds precision, 'Z' suffix).
std::string rfc3339_now();

}  // namespace qmark
