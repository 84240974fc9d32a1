#include "qmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include "qmark/error.hpp"
#include "qmark/parallel.hpp"
#include "qmark/rng.hpp"
#include "qmark/scoring.hpp"

namespace qmark {

namespace {

// Attacker streams live in their own domain and are never derived from any
// owner key material.
constexpr std::uint64_t kOverwriteDomain = 0x0BADC0DE'5EED0001ULL;
constexpr std::uint64_t kAdversarySignatureDomain = 0x0BADC0DE'5EED0002ULL;

WatermarkLocations owner_locations(const OwnerContext& owner, unsigned threads) {
    if (owner.locations != nullptr) return *owner.locations;
    return derive_locations(owner.original, owner.key, threads);
}

std::unordered_set<std::size_t> flat_set(const LayerLocations& at, std::size_t cols) {
    std::unordered_set<std::size_t> s;
    s.reserve(at.positions.size() * 2);
    for (const Position& p : at.positions) s.insert(p.row * cols + p.col);
    return s;
}

}  // namespace

std::vector<ActivationProfile> quantized_activation_proxy(const ModelBundle& bundle) {
    std::vector<ActivationProfile> out;
    out.reserve(bundle.size());
    for (const QuantLayer& layer : bundle.layers) {
        std::vector<double> sums(layer.cols, 0.0);
        for (std::size_t r = 0; r < layer.rows; ++r) {
            for (std::size_t c = 0; c < layer.cols; ++c) sums[c] += std::abs(int{layer.at(r, c)});
        }
        ActivationProfile p{layer.name, std::vector<float>(layer.cols)};
        for (std::size_t c = 0; c < layer.cols; ++c) {
            p.magnitudes[c] = static_cast<float>(sums[c] / static_cast<double>(layer.rows));
        }
        out.push_back(std::move(p));
    }
    return out;
}

AttackOutcome overwrite_attack(const OwnerContext& owner, std::size_t per_layer_count,
                               std::uint64_t attack_seed, unsigned threads) {
    const WatermarkLocations locations = owner_locations(owner, threads);
    AttackOutcome out;
    out.attacked = owner.watermarked;
    const std::size_t n = out.attacked.size();
    for (const QuantLayer& layer : out.attacked.layers) {
        if (per_layer_count > layer.size()) {
            throw Error(Errc::invalid_argument, "layer '" + layer.name + "' has only " +
                                                    std::to_string(layer.size()) + " positions, cannot overwrite " +
                                                    std::to_string(per_layer_count));
        }
    }
    std::vector<std::size_t> hits(n, 0);
    parallel_for(n, threads, [&](std::size_t l) {
        QuantLayer& layer = out.attacked.layers[l];
        SplitMix64 rng(derive_stream_seed(attack_seed ^ kOverwriteDomain, l));
        const auto marked = flat_set(locations.layers[l], layer.cols);
        const auto top = static_cast<std::int8_t>(layer.max_level());
        for (std::size_t flat : partial_fisher_yates(layer.size(), per_layer_count, rng)) {
            std::int8_t& w = layer.weights[flat];
            if (w < top) ++w;
            if (marked.contains(flat)) ++hits[l];
        }
    });
    out.positions_touched = per_layer_count * n;
    for (std::size_t h : hits) out.watermark_positions_hit += h;
    out.report = extract_at(out.attacked, owner.original, locations);
    out.damage = quality_proxy(owner.watermarked, out.attacked);
    return out;
}

AttackOutcome rewatermark_attack(const OwnerContext& owner, std::size_t per_layer_count,
                                 const RewatermarkParams& params, unsigned threads) {
    const WatermarkLocations locations = owner_locations(owner, threads);
    AttackOutcome out;
    if (per_layer_count == 0) {
        out.attacked = owner.watermarked;
        out.report = extract_at(out.attacked, owner.original, locations);
        out.damage = quality_proxy(owner.watermarked, out.attacked);
        return out;
    }
    ModelBundle scored = owner.watermarked;
    if (params.use_quantized_activations) scored.activations = quantized_activation_proxy(scored);

    // The attacker shrinks its pool when a layer cannot supply ratio x m.
    const std::vector<ScoreMap> maps = score_bundle(scored, params.alpha, params.beta, threads);
    const std::size_t wanted = params.pool_size > 0 ? params.pool_size : params.pool_ratio * per_layer_count;
    const std::size_t pool = std::min(wanted, max_pool_size(maps));
    if (pool < per_layer_count) {
        throw Error(Errc::pool_shortfall, "re-watermark: only " + std::to_string(pool) +
                                              " eligible positions for " + std::to_string(per_layer_count) +
                                              " insertions per layer");
    }
    const Signature signature = Signature::from_seed(splitmix64(params.seed ^ kAdversarySignatureDomain),
                                                     per_layer_count * scored.size());
    InsertParams ip;
    ip.seed = params.seed;
    ip.alpha = params.alpha;
    ip.beta = params.beta;
    ip.pool_size = pool;
    ip.created_at = owner.key.created_at;
    InsertResult ins = insert(scored, signature, ip, threads);

    out.attacked = std::move(ins.bundle);
    out.attacked.activations = owner.watermarked.activations;
    out.positions_touched = ins.locations.total();
    for (std::size_t l = 0; l < scored.size(); ++l) {
        const auto marked = flat_set(locations.layers[l], scored.layers[l].cols);
        for (const Position& p : ins.locations.layers[l].positions) {
            if (marked.contains(p.row * scored.layers[l].cols + p.col)) ++out.watermark_positions_hit;
        }
    }
    out.report = extract_at(out.attacked, owner.original, locations);
    out.damage = quality_proxy(owner.watermarked, out.attacked);
    out.adversary_original = std::move(scored);
    out.adversary_key = std::move(ins.key);
    out.adversary_locations = std::move(ins.locations);
    return out;
}

AttackOutcome run_attack(const OwnerContext& owner, const AttackConfig& config, unsigned threads) {
    switch (config.kind) {
        case AttackKind::overwrite:
            return overwrite_attack(owner, config.per_layer_count, config.attack_seed, threads);
        case AttackKind::rewatermark:
            return rewatermark_attack(owner, config.per_layer_count, config.rewatermark, threads);
    }
    throw Error(Errc::invalid_argument, "unknown attack kind");
}

ForgeVerdict forge_evaluate(const ModelBundle& suspect, const ForgeClaim& claim,
                            const ForgeThresholds& thresholds, unsigned threads) {
    ForgeVerdict v;
    auto reject = [&](std::string reason) {
        v.accepted = false;
        v.reason = std::move(reason);
        return v;
    };
    try {
        validate(claim.original);
        validate_key(claim.key, claim.original.size());
    } catch (const Error& e) {
        return reject(e.what());
    }
    if (content_hash(claim.original) != claim.key.original_bundle_hash) {
        return reject("wrong original bundle");
    }
    if (!same_shape(suspect, claim.original)) return reject("shape mismatch");

    WatermarkLocations derived;
    try {
        derived = derive_locations(claim.original, claim.key.params, claim.key.signature, threads);
    } catch (const Error& e) {
        return reject(std::string("locations not reproducible: ") + e.what());
    }
    if (claim.locations != nullptr) {
        const WatermarkLocations& shown = *claim.locations;
        bool same = shown.layers.size() == derived.layers.size();
        for (std::size_t l = 0; same && l < derived.layers.size(); ++l) {
            same = shown.layers[l].positions == derived.layers[l].positions &&
                   shown.layers[l].bits == derived.layers[l].bits;
        }
        if (!same) return reject("locations not reproducible");
    }
    v.report = extract_at(suspect, claim.original, derived);
    if (v.report.wer < thresholds.min_wer || v.report.log10_p_value > thresholds.max_log10_p) {
        return reject("signature does not verify at the reproduced locations");
    }
    v.accepted = true;
    v.reason = "ownership verified";
    return v;
}

}  // namespace qmark
