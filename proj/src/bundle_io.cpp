#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

#include "json.hpp"

#include "qmark/bundle.hpp"
#include "qmark/error.hpp"

// File layout (all integers little-endian):
//   "EMQB" | u16 version | u32 header_len | header_len bytes UTF-8 JSON | payload
// The payload is canonical: every layer's weights as int8 row-major in layer
// order, then every layer's activations as float32. content_hash is SHA-256
// over the payload only.

namespace qmark {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'E', 'M', 'Q', 'B'};
constexpr std::size_t kPreambleSize = 4 + 2 + 4;

std::string format_step(double step) {
    char buf[64];
    // Shortest representation that parses back to the same double.
    const auto res = std::to_chars(buf, buf + sizeof(buf), step);
    return std::string(buf, res.ptr);
}

double parse_step(const std::string& text, const std::string& layer) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw Error(Errc::bad_header, "layer '" + layer + "': step '" + text + "' is not a decimal number");
    }
    return value;
}

struct LayerExtent {
    std::size_t weight_offset = 0;
    std::size_t activation_offset = 0;
};

std::vector<LayerExtent> canonical_extents(const ModelBundle& bundle) {
    std::vector<LayerExtent> out(bundle.layers.size());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        out[i].weight_offset = offset;
        offset += bundle.layers[i].size();
    }
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        out[i].activation_offset = offset;
        offset += 4 * bundle.layers[i].cols;
    }
    return out;
}

Digest layer_digest(std::span<const std::uint8_t> payload, const QuantLayer& layer,
                    const LayerExtent& extent) {
    std::vector<std::uint8_t> bytes;
    const std::size_t act_bytes = 4 * layer.cols;
    bytes.reserve(layer.size() + act_bytes);
    auto w = payload.subspan(extent.weight_offset, layer.size());
    auto a = payload.subspan(extent.activation_offset, act_bytes);
    bytes.insert(bytes.end(), w.begin(), w.end());
    bytes.insert(bytes.end(), a.begin(), a.end());
    return sha256(bytes);
}

template <typename T>
T require(const json& obj, const char* field, const std::string& context) {
    auto it = obj.find(field);
    if (it == obj.end()) {
        throw Error(Errc::bad_header, context + ": missing field '" + field + "'");
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(Errc::bad_header, context + ": field '" + field + "' has the wrong type");
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle) {
    validate(bundle);
    const std::vector<std::uint8_t> payload = payload_bytes(bundle);
    const std::vector<LayerExtent> extents = canonical_extents(bundle);

    json layers = json::array();
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        const QuantLayer& layer = bundle.layers[i];
        layers.push_back({
            {"name", layer.name},
            {"rows", layer.rows},
            {"cols", layer.cols},
            {"bit_width", layer.bit_width},
            {"step", format_step(layer.step)},
            {"weight_offset", extents[i].weight_offset},
            {"activation_offset", extents[i].activation_offset},
            {"sha256", to_hex(layer_digest(payload, layer, extents[i]))},
        });
    }
    const json header = {
        {"layers", std::move(layers)},
        {"payload_size", payload.size()},
        {"content_hash", to_hex(sha256(payload))},
    };
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(kPreambleSize + text.size() + payload.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(static_cast<std::uint8_t>(kBundleFormatVersion & 0xFF));
    out.push_back(static_cast<std::uint8_t>(kBundleFormatVersion >> 8));
    const auto len = static_cast<std::uint32_t>(text.size());
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(len >> shift));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

ModelBundle parse_bundle(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(Errc::bad_magic, "not a bundle file: bad magic");
    }
    if (bytes.size() < kPreambleSize) {
        throw Error(Errc::truncated_payload, "bundle truncated inside the preamble");
    }
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != kBundleFormatVersion) {
        throw Error(Errc::unsupported_version, "unsupported bundle format version " + std::to_string(version));
    }
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) header_len |= std::uint32_t{bytes[6 + i]} << (8 * i);
    if (bytes.size() - kPreambleSize < header_len) {
        throw Error(Errc::truncated_payload, "bundle truncated inside the header");
    }
    const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + kPreambleSize);
    json header;
    try {
        header = json::parse(header_begin, header_begin + header_len);
    } catch (const json::exception& e) {
        throw Error(Errc::bad_header, std::string("bundle header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || !header.contains("layers") || !header["layers"].is_array()) {
        throw Error(Errc::bad_header, "bundle header has no layer list");
    }
    const auto payload = bytes.subspan(kPreambleSize + header_len);

    ModelBundle bundle;
    std::vector<std::optional<Digest>> layer_digests;
    for (const json& entry : header["layers"]) {
        if (!entry.is_object()) throw Error(Errc::bad_header, "layer entry is not an object");
        QuantLayer layer;
        layer.name = require<std::string>(entry, "name", "layer entry");
        const std::string ctx = "layer '" + layer.name + "'";
        layer.rows = require<std::size_t>(entry, "rows", ctx);
        layer.cols = require<std::size_t>(entry, "cols", ctx);
        layer.bit_width = require<int>(entry, "bit_width", ctx);
        layer.step = parse_step(require<std::string>(entry, "step", ctx), layer.name);
        if (!supported_bit_width(layer.bit_width)) {
            throw Error(Errc::bad_header, ctx + ": unsupported bit width " + std::to_string(layer.bit_width));
        }
        if (layer.rows == 0 || layer.cols == 0) {
            throw Error(Errc::shape_mismatch, ctx + ": empty shape");
        }
        if (layer.rows > payload.size() / layer.cols || layer.cols > payload.size() / 4) {
            throw Error(Errc::truncated_payload, ctx + ": payload truncated");
        }
        if (auto it = entry.find("sha256"); it != entry.end() && it->is_string()) {
            layer_digests.push_back(digest_from_hex(it->get<std::string>()));
        } else {
            layer_digests.push_back(std::nullopt);
        }
        bundle.activations.push_back({layer.name, {}});
        bundle.layers.push_back(std::move(layer));
    }
    if (bundle.layers.empty()) throw Error(Errc::bad_header, "bundle header lists no layers");

    // Offsets must describe the canonical layout exactly.
    const std::vector<LayerExtent> extents = canonical_extents(bundle);
    std::size_t i = 0;
    for (const json& entry : header["layers"]) {
        const std::string ctx = "layer '" + bundle.layers[i].name + "'";
        const auto w_off = require<std::size_t>(entry, "weight_offset", ctx);
        const auto a_off = require<std::size_t>(entry, "activation_offset", ctx);
        if (w_off != extents[i].weight_offset || a_off != extents[i].activation_offset) {
            throw Error(Errc::shape_mismatch, ctx + ": offsets do not match its shape");
        }
        ++i;
    }
    const std::size_t expected = extents.back().activation_offset + 4 * bundle.layers.back().cols;
    for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
        const QuantLayer& layer = bundle.layers[l];
        if (extents[l].weight_offset + layer.size() > payload.size() ||
            extents[l].activation_offset + 4 * layer.cols > payload.size()) {
            throw Error(Errc::truncated_payload, "layer '" + layer.name + "': payload truncated");
        }
    }
    if (payload.size() != expected) {
        throw Error(Errc::shape_mismatch, "payload has " + std::to_string(payload.size() - expected) +
                                              " trailing bytes after layer '" +
                                              bundle.layers.back().name + "'");
    }
    if (auto it = header.find("payload_size"); it != header.end() && it->is_number_unsigned() &&
                                                it->get<std::size_t>() != expected) {
        throw Error(Errc::shape_mismatch, "header payload_size disagrees with layer shapes");
    }

    const auto stored = digest_from_hex(require<std::string>(header, "content_hash", "bundle header"));
    if (!stored) throw Error(Errc::bad_header, "content_hash is not a 64-digit hex string");
    if (sha256(payload) != *stored) {
        std::string culprit = "payload";
        for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
            if (layer_digests[l] &&
                layer_digest(payload, bundle.layers[l], extents[l]) != *layer_digests[l]) {
                culprit = "layer '" + bundle.layers[l].name + "'";
                break;
            }
        }
        throw Error(Errc::hash_mismatch, "content hash mismatch in " + culprit);
    }

    for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
        QuantLayer& layer = bundle.layers[l];
        const auto w = payload.subspan(extents[l].weight_offset, layer.size());
        layer.weights.resize(layer.size());
        std::memcpy(layer.weights.data(), w.data(), w.size());
        auto& mags = bundle.activations[l].magnitudes;
        mags.resize(layer.cols);
        const auto a = payload.subspan(extents[l].activation_offset, 4 * layer.cols);
        for (std::size_t c = 0; c < layer.cols; ++c) {
            std::uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) bits |= std::uint32_t{a[4 * c + k]} << (8 * k);
            mags[c] = std::bit_cast<float>(bits);
        }
    }
    validate(bundle);
    return bundle;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = serialize_bundle(bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io_error, "failed writing '" + path.string() + "'");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_bundle(bytes);
}

}  // namespace qmark
