#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qmark/bundle.hpp"
#include "qmark/quality.hpp"
#include "qmark/watermark.hpp"

namespace qmark {

enum class AttackKind { overwrite, rewatermark };

struct RewatermarkParams {
    double alpha = 1.0;
    double beta = 1.5;
    std::uint64_t seed = 22;
    /// Score with column mean |W| of the attacked bundle instead of the stored
    /// activation profile, which the attacker is not supposed to have.
    bool use_quantized_activations = true;
    std::size_t pool_ratio = 50;
    /// Fixed pool size; 0 means pool_ratio x m.
    std::size_t pool_size = 0;
};

struct AttackConfig {
    AttackKind kind = AttackKind::overwrite;
    std::size_t per_layer_count = 0;
    std::uint64_t attack_seed = 0;
    RewatermarkParams rewatermark;
};

struct AttackOutcome {
    ModelBundle attacked;
    std::size_t positions_touched = 0;
    std::size_t watermark_positions_hit = 0;
    VerificationReport report;  // owner key against the attacked bundle
    QualityProxy damage;        // watermarked bundle -> attacked bundle
    /// Re-watermark only: what the attacker would present as its own claim.
    ModelBundle adversary_original;
    WatermarkKey adversary_key;
    WatermarkLocations adversary_locations;
};

/// Owner-side view of a watermarked deployment.
struct OwnerContext {
    const ModelBundle& watermarked;
    const ModelBundle& original;
    const WatermarkKey& key;
    /// Precomputed derive_locations(original, key); derived on demand if empty.
    const WatermarkLocations* locations = nullptr;
};

/// Adds +1 (saturating at the top level) to m uniformly chosen positions per
/// layer. The attacker stream is seeded only from attack_seed.
AttackOutcome overwrite_attack(const OwnerContext& owner, std::size_t per_layer_count,
                               std::uint64_t attack_seed, unsigned threads = 1);

/// The attacker reruns scoring and insertion on the watermarked bundle with its
/// own coefficients, seed and signature, then the owner key is re-verified.
AttackOutcome rewatermark_attack(const OwnerContext& owner, std::size_t per_layer_count,
                                 const RewatermarkParams& params, unsigned threads = 1);

AttackOutcome run_attack(const OwnerContext& owner, const AttackConfig& config,
                         unsigned threads = 1);

/// Column mean |W| per layer, used as the attacker's activation estimate.
std::vector<ActivationProfile> quantized_activation_proxy(const ModelBundle& bundle);

struct ForgeThresholds {
    double min_wer = 95.0;
    double max_log10_p = -6.0;
};

struct ForgeClaim {
    const WatermarkKey& key;
    const ModelBundle& original;
    /// Optional explicit location list presented with the claim; it must equal
    /// the locations reproduced from (original, key).
    const WatermarkLocations* locations = nullptr;
};

struct ForgeVerdict {
    bool accepted = false;
    std::string reason;
    VerificationReport report;  // populated once locations were reproduced
};

/// Ownership claim validation: hash-matched original, reproducible locations,
/// and a signature that verifies at them with enough WER and a small p-value.
ForgeVerdict forge_evaluate(const ModelBundle& suspect, const ForgeClaim& claim,
                            const ForgeThresholds& thresholds = {}, unsigned threads = 1);

}  // namespace qmark
