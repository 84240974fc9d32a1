#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qmark/sha256.hpp"

namespace qmark {

/// Largest representable level for symmetric N-bit quantization, 2^(N-1) - 1.
constexpr int max_level(int bit_width) noexcept { return (1 << (bit_width - 1)) - 1; }

constexpr bool supported_bit_width(int bit_width) noexcept {
    return bit_width == 4 || bit_width == 8;
}

/// One quantized weight matrix, row-major. INT4 levels are stored widened to
/// one signed byte.
struct QuantLayer {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bit_width = 8;
    double step = 1.0;
    std::vector<std::int8_t> weights;

    std::size_t size() const noexcept { return rows * cols; }
    int max_level() const noexcept { return qmark::max_level(bit_width); }
    std::int8_t at(std::size_t row, std::size_t col) const { return weights[row * cols + col]; }
    std::int8_t& at(std::size_t row, std::size_t col) { return weights[row * cols + col]; }

    friend bool operator==(const QuantLayer&, const QuantLayer&) = default;
};

/// Per-input-channel magnitude of the full-precision activations feeding a
/// layer; one entry per weight column.
struct ActivationProfile {
    std::string layer_name;
    std::vector<float> magnitudes;

    friend bool operator==(const ActivationProfile&, const ActivationProfile&) = default;
};

struct ModelBundle {
    std::vector<QuantLayer> layers;
    std::vector<ActivationProfile> activations;

    std::size_t size() const noexcept { return layers.size(); }

    friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

/// Checks every structural invariant (shapes, level ranges, unique names,
/// finite non-negative activations, layer/profile pairing). Throws Error.
void validate(const ModelBundle& bundle);

/// True when the two bundles have the same layer names, dims and bit widths.
bool same_shape(const ModelBundle& a, const ModelBundle& b) noexcept;

struct QuantizedTensor {
    std::vector<std::int8_t> levels;
    double step = 0.0;
};

/// Symmetric per-tensor quantization: step = max|x| / (2^(N-1) - 1),
/// level = round(x / step) with halves rounded away from zero.
QuantizedTensor quantize_tensor(std::span<const double> values, int bit_width);

struct SyntheticSpec {
    std::size_t layers = 1;
    std::size_t rows = 1;
    std::size_t cols = 1;
    int bit_width = 4;
    std::uint64_t seed = 0;
};

/// Full-precision stand-in for a checkpoint: Laplace-distributed weights
/// (row-major per layer) and activation magnitudes with ~1% outlier channels.
/// Column weight scale grows mildly with channel activation.
struct SyntheticFloatModel {
    SyntheticSpec spec;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<float>> activations;
};

SyntheticFloatModel generate_float_model(const SyntheticSpec& spec);

/// Quantizes every layer of a float model with quantize_tensor.
ModelBundle quantize_model(const SyntheticFloatModel& model);

/// Deterministic in its arguments: generate_float_model then quantize_model.
ModelBundle generate_synthetic_bundle(const SyntheticSpec& spec);

/// Canonical payload: all weight bytes layer by layer, then all activations as
/// little-endian float32, layer by layer.
std::vector<std::uint8_t> payload_bytes(const ModelBundle& bundle);

/// SHA-256 over payload_bytes.
Digest content_hash(const ModelBundle& bundle);

inline constexpr std::uint16_t kBundleFormatVersion = 1;

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle);
ModelBundle parse_bundle(std::span<const std::uint8_t> bytes);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace qmark
