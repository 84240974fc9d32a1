#include "qmark/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "qmark/error.hpp"
#include "qmark/rng.hpp"

namespace qmark {

namespace {

// Domain separators so the weight and activation streams of a layer never
// coincide with each other or with location-selection streams.
constexpr std::uint64_t kActivationDomain = 0xA5C7'0F1E'5EED'0001ULL;
constexpr std::uint64_t kWeightDomain = 0xA5C7'0F1E'5EED'0002ULL;

constexpr double kOutlierRate = 0.01;
constexpr double kWeightScale = 0.02;  // Laplace scale, typical of LLM linear weights

std::string layer_name(std::size_t index) {
    std::string s = std::to_string(index);
    if (s.size() < 3) s.insert(0, 3 - s.size(), '0');
    return "layer." + s;
}

// Uniform in (0, 1).
double open_uniform(SplitMix64& rng) {
    return (static_cast<double>(rng.next() >> 11) + 0.5) * 0x1.0p-53;
}

double laplace(SplitMix64& rng, double scale) {
    const double v = open_uniform(rng) - 0.5;
    const double mag = -scale * std::log1p(-2.0 * std::abs(v));
    return v < 0.0 ? -mag : mag;
}

void append_f32_le(std::vector<std::uint8_t>& out, float value) {
    const auto bits = std::bit_cast<std::uint32_t>(value);
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>(bits >> shift));
    }
}

}  // namespace

void validate(const ModelBundle& bundle) {
    if (bundle.layers.empty()) {
        throw Error(Errc::invalid_argument, "bundle has no layers");
    }
    if (bundle.activations.size() != bundle.layers.size()) {
        throw Error(Errc::shape_mismatch, "bundle has " + std::to_string(bundle.layers.size()) +
                                              " layers but " +
                                              std::to_string(bundle.activations.size()) +
                                              " activation profiles");
    }
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
        const QuantLayer& layer = bundle.layers[i];
        const ActivationProfile& profile = bundle.activations[i];
        const std::string where = "layer '" + layer.name + "'";
        if (layer.name.empty()) {
            throw Error(Errc::invalid_argument, "layer " + std::to_string(i) + " has an empty name");
        }
        if (!names.insert(layer.name).second) {
            throw Error(Errc::invalid_argument, "duplicate " + where);
        }
        if (!supported_bit_width(layer.bit_width)) {
            throw Error(Errc::invalid_argument,
                        where + ": unsupported bit width " + std::to_string(layer.bit_width));
        }
        if (layer.rows == 0 || layer.cols == 0) {
            throw Error(Errc::shape_mismatch, where + ": empty shape");
        }
        if (!(layer.step > 0.0) || !std::isfinite(layer.step)) {
            throw Error(Errc::invalid_argument, where + ": quantization step must be positive");
        }
        if (layer.weights.size() != layer.size()) {
            throw Error(Errc::shape_mismatch, where + ": weight count does not match rows x cols");
        }
        const int hi = layer.max_level();
        for (std::int8_t w : layer.weights) {
            if (w > hi || w < -hi) {
                throw Error(Errc::invalid_argument, where + ": weight " + std::to_string(w) +
                                                        " outside [-" + std::to_string(hi) + ", " +
                                                        std::to_string(hi) + "]");
            }
        }
        if (profile.layer_name != layer.name) {
            throw Error(Errc::shape_mismatch,
                        where + ": activation profile belongs to '" + profile.layer_name + "'");
        }
        if (profile.magnitudes.size() != layer.cols) {
            throw Error(Errc::shape_mismatch, where + ": activation profile length " +
                                                  std::to_string(profile.magnitudes.size()) +
                                                  " != cols " + std::to_string(layer.cols));
        }
        for (float a : profile.magnitudes) {
            if (!std::isfinite(a) || a < 0.0f) {
                throw Error(Errc::invalid_argument,
                            where + ": activation magnitudes must be finite and non-negative");
            }
        }
    }
}

bool same_shape(const ModelBundle& a, const ModelBundle& b) noexcept {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const QuantLayer& x = a.layers[i];
        const QuantLayer& y = b.layers[i];
        if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.bit_width != y.bit_width) {
            return false;
        }
    }
    return true;
}

QuantizedTensor quantize_tensor(std::span<const double> values, int bit_width) {
    if (!supported_bit_width(bit_width)) {
        throw Error(Errc::invalid_argument, "unsupported bit width " + std::to_string(bit_width));
    }
    if (values.empty()) {
        throw Error(Errc::degenerate_tensor, "degenerate tensor: empty input");
    }
    double max_abs = 0.0;
    for (double x : values) {
        if (!std::isfinite(x)) {
            throw Error(Errc::invalid_argument, "quantize_tensor: non-finite input");
        }
        max_abs = std::max(max_abs, std::abs(x));
    }
    if (max_abs == 0.0) {
        throw Error(Errc::degenerate_tensor, "degenerate tensor: all entries are zero");
    }
    const int hi = max_level(bit_width);
    QuantizedTensor out;
    out.step = max_abs / hi;
    out.levels.reserve(values.size());
    for (double x : values) {
        // std::round rounds halves away from zero.
        const double level = std::clamp(std::round(x / out.step), double(-hi), double(hi));
        out.levels.push_back(static_cast<std::int8_t>(level));
    }
    return out;
}

SyntheticFloatModel generate_float_model(const SyntheticSpec& spec) {
    if (spec.layers == 0 || spec.rows == 0 || spec.cols == 0) {
        throw Error(Errc::invalid_argument, "synthetic bundle dimensions must be >= 1");
    }
    if (!supported_bit_width(spec.bit_width)) {
        throw Error(Errc::invalid_argument, "unsupported bit width " + std::to_string(spec.bit_width));
    }
    SyntheticFloatModel model;
    model.spec = spec;
    model.weights.resize(spec.layers);
    model.activations.resize(spec.layers);
    for (std::size_t l = 0; l < spec.layers; ++l) {
        SplitMix64 act_rng(derive_stream_seed(spec.seed ^ kActivationDomain, l));
        std::vector<float>& act = model.activations[l];
        act.resize(spec.cols);
        for (float& a : act) {
            double value = 0.1 - std::log(open_uniform(act_rng));  // 0.1 + Exp(1)
            if (act_rng.uniform() < kOutlierRate) {
                value *= 20.0 + 80.0 * act_rng.uniform();
            }
            a = static_cast<float>(value);
        }
        const float act_max = *std::max_element(act.begin(), act.end());

        std::vector<double> col_scale(spec.cols);
        for (std::size_t c = 0; c < spec.cols; ++c) {
            col_scale[c] = kWeightScale * (1.0 + 0.25 * static_cast<double>(act[c] / act_max));
        }
        SplitMix64 w_rng(derive_stream_seed(spec.seed ^ kWeightDomain, l));
        std::vector<double>& w = model.weights[l];
        w.resize(spec.rows * spec.cols);
        for (std::size_t r = 0; r < spec.rows; ++r) {
            for (std::size_t c = 0; c < spec.cols; ++c) {
                w[r * spec.cols + c] = laplace(w_rng, col_scale[c]);
            }
        }
    }
    return model;
}

ModelBundle quantize_model(const SyntheticFloatModel& model) {
    ModelBundle bundle;
    const SyntheticSpec& spec = model.spec;
    bundle.layers.reserve(spec.layers);
    bundle.activations.reserve(spec.layers);
    for (std::size_t l = 0; l < spec.layers; ++l) {
        QuantizedTensor q = quantize_tensor(model.weights[l], spec.bit_width);
        QuantLayer layer;
        layer.name = layer_name(l);
        layer.rows = spec.rows;
        layer.cols = spec.cols;
        layer.bit_width = spec.bit_width;
        layer.step = q.step;
        layer.weights = std::move(q.levels);
        bundle.activations.push_back({layer.name, model.activations[l]});
        bundle.layers.push_back(std::move(layer));
    }
    return bundle;
}

ModelBundle generate_synthetic_bundle(const SyntheticSpec& spec) {
    return quantize_model(generate_float_model(spec));
}

std::vector<std::uint8_t> payload_bytes(const ModelBundle& bundle) {
    std::size_t total = 0;
    for (const QuantLayer& layer : bundle.layers) total += layer.weights.size();
    for (const ActivationProfile& p : bundle.activations) total += 4 * p.magnitudes.size();
    std::vector<std::uint8_t> out;
    out.reserve(total);
    for (const QuantLayer& layer : bundle.layers) {
        for (std::int8_t w : layer.weights) out.push_back(static_cast<std::uint8_t>(w));
    }
    for (const ActivationProfile& p : bundle.activations) {
        for (float a : p.magnitudes) append_f32_le(out, a);
    }
    return out;
}

Digest content_hash(const ModelBundle& bundle) {
    return sha256(payload_bytes(bundle));
}

}  // namespace qmark
