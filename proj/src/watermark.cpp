#include "qmark/watermark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include "qmark/error.hpp"
#include "qmark/parallel.hpp"
#include "qmark/rng.hpp"
#include "qmark/stats.hpp"

namespace qmark {

Signature::Signature(std::vector<int> bits) : bits_(std::move(bits)) {
    if (bits_.empty()) throw Error(Errc::invalid_argument, "signature is empty");
    for (int b : bits_) {
        if (b != 1 && b != -1) {
            throw Error(Errc::invalid_argument, "signature bits must be +1 or -1, got " + std::to_string(b));
        }
    }
}

Signature Signature::from_seed(std::uint64_t seed, std::size_t length) {
    SplitMix64 rng(seed);
    std::vector<int> bits(length);
    for (int& b : bits) b = (rng.next() & 1) ? 1 : -1;
    return Signature(std::move(bits));
}

std::size_t WatermarkLocations::total() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.positions.size();
    return n;
}

std::vector<std::size_t> select_pool_indices(std::uint64_t seed, std::size_t layer_index,
                                             std::size_t pool_size, std::size_t count) {
    if (count > pool_size) {
        throw Error(Errc::pool_shortfall, "cannot select " + std::to_string(count) + " positions from a pool of " +
                                              std::to_string(pool_size));
    }
    SplitMix64 rng(derive_stream_seed(seed, layer_index));
    return partial_fisher_yates(pool_size, count, rng);
}

namespace {

void check_location_params(const LocationParams& params, std::size_t layer_count,
                           std::size_t signature_length) {
    if (params.bits_per_layer == 0) {
        throw Error(Errc::invalid_argument, "bits per layer must be >= 1");
    }
    if (params.pool_size < params.bits_per_layer) {
        throw Error(Errc::pool_shortfall, "pool size " + std::to_string(params.pool_size) +
                                              " is smaller than bits per layer " +
                                              std::to_string(params.bits_per_layer));
    }
    if (params.bits_per_layer * layer_count != signature_length) {
        throw Error(Errc::signature_length,
                    "signature length " + std::to_string(signature_length) + " != bits per layer " +
                        std::to_string(params.bits_per_layer) + " x " + std::to_string(layer_count) + " layers");
    }
}

}  // namespace

WatermarkLocations derive_locations(const ModelBundle& bundle, const LocationParams& params,
                                    const Signature& signature, unsigned threads) {
    check_location_params(params, bundle.size(), signature.size());
    WatermarkLocations out;
    out.layers.resize(bundle.size());
    parallel_for(bundle.size(), threads, [&](std::size_t l) {
        const ScoreMap scores = score_layer(bundle.layers[l], bundle.activations[l], params.alpha, params.beta);
        const CandidatePool pool = build_candidate_pool(scores, params.pool_size);
        const std::vector<std::size_t> picks =
            select_pool_indices(params.seed, l, pool.size(), params.bits_per_layer);
        LayerLocations& dst = out.layers[l];
        dst.layer_name = bundle.layers[l].name;
        dst.positions.reserve(picks.size());
        dst.bits.reserve(picks.size());
        for (std::size_t i = 0; i < picks.size(); ++i) {
            dst.positions.push_back(pool.positions[picks[i]]);
            dst.bits.push_back(signature[l * params.bits_per_layer + i]);
        }
    });
    return out;
}

WatermarkLocations derive_locations(const ModelBundle& original, const WatermarkKey& key,
                                    unsigned threads) {
    validate_key(key, original.size());
    if (content_hash(original) != key.original_bundle_hash) {
        throw Error(Errc::wrong_original_bundle, "wrong original bundle: content hash does not match the key");
    }
    return derive_locations(original, key.params, key.signature, threads);
}

InsertResult insert(const ModelBundle& bundle, const Signature& signature, const InsertParams& params,
                    unsigned threads) {
    validate(bundle);
    const std::size_t n = bundle.size();
    if (signature.size() % n != 0) {
        throw Error(Errc::signature_length, "signature length " + std::to_string(signature.size()) +
                                                " is not divisible by the layer count " + std::to_string(n));
    }
    LocationParams loc;
    loc.seed = params.seed;
    loc.alpha = params.alpha;
    loc.beta = params.beta;
    loc.pool_size = params.pool_size;
    loc.bits_per_layer = signature.size() / n;

    InsertResult result;
    result.locations = derive_locations(bundle, loc, signature, threads);
    result.bundle = bundle;
    for (std::size_t l = 0; l < n; ++l) {
        QuantLayer& layer = result.bundle.layers[l];
        const LayerLocations& at = result.locations.layers[l];
        for (std::size_t i = 0; i < at.positions.size(); ++i) {
            std::int8_t& w = layer.at(at.positions[i].row, at.positions[i].col);
            // Extreme levels are never candidates, so this stays in range.
            w = static_cast<std::int8_t>(w + at.bits[i]);
        }
    }
    result.key.params = loc;
    result.key.signature = signature;
    result.key.original_bundle_hash = content_hash(bundle);
    result.key.created_at = params.created_at.empty() ? rfc3339_now() : params.created_at;
    return result;
}

VerificationReport extract_at(const ModelBundle& suspect, const ModelBundle& original,
                              const WatermarkLocations& locations) {
    if (!same_shape(suspect, original) || locations.layers.size() != original.size()) {
        throw Error(Errc::shape_mismatch, "suspect and original bundles differ in shape");
    }
    VerificationReport report;
    for (std::size_t l = 0; l < locations.layers.size(); ++l) {
        const LayerLocations& at = locations.layers[l];
        const QuantLayer& before = original.layers[l];
        const QuantLayer& after = suspect.layers[l];
        LayerVerification lv{at.layer_name, at.positions.size(), 0};
        for (std::size_t i = 0; i < at.positions.size(); ++i) {
            const auto [row, col] = at.positions[i];
            const int delta = int{after.at(row, col)} - int{before.at(row, col)};
            if (delta == at.bits[i]) ++lv.matched;
        }
        report.total_bits += lv.inserted;
        report.matched_bits += lv.matched;
        report.per_layer.push_back(std::move(lv));
    }
    report.wer = extraction_rate(report.matched_bits, report.total_bits);
    report.log10_p_value = watermark_strength(report.matched_bits, report.total_bits).log10_p;
    return report;
}

VerificationReport extract(const ModelBundle& suspect, const ModelBundle& original, const WatermarkKey& key,
                           unsigned threads) {
    if (!same_shape(suspect, original)) {
        throw Error(Errc::shape_mismatch, "suspect and original bundles differ in shape");
    }
    return extract_at(suspect, original, derive_locations(original, key, threads));
}

void validate_key(const WatermarkKey& key, std::size_t layer_count) {
    auto fail = [](const std::string& what) { throw Error(Errc::malformed_key, "malformed key: " + what); };
    if (key.version != 1) fail("unsupported version " + std::to_string(key.version));
    if (key.signature.size() == 0) fail("empty signature");
    const LocationParams& p = key.params;
    if (!std::isfinite(p.alpha) || !std::isfinite(p.beta) || p.alpha < 0 || p.beta < 0 || p.alpha + p.beta <= 0) {
        fail("invalid scoring coefficients");
    }
    if (p.bits_per_layer == 0) fail("bits_per_layer is zero");
    if (p.pool_size < p.bits_per_layer) fail("pool_size_per_layer smaller than bits_per_layer");
    if (p.bits_per_layer * layer_count != key.signature.size()) {
        fail("signature length " + std::to_string(key.signature.size()) + " != bits_per_layer x " +
             std::to_string(layer_count) + " layers");
    }
}

std::string rfc3339_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

}  // namespace qmark
