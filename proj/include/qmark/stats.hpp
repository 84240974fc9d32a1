#pragma once

#include <cstdint>
#include <span>

namespace qmark {

struct StrengthResult {
    std::uint64_t matched = 0;
    std::uint64_t total = 0;
    double log10_p = 0.0;
    double p_value = 1.0;  // 0 once it underflows; log10_p stays exact
};

/// Probability that a random Rademacher signature of length `total` agrees
/// with the owner's in at least `matched` bits:
///     P_c = sum_{i=matched}^{total} C(total, i) 0.5^total
/// Evaluated in log space. When the tail holds more than half the mass it is
/// computed as log1p(-lower tail) so that p close to 1 keeps full relative
/// precision in log10_p.
StrengthResult watermark_strength(std::uint64_t matched, std::uint64_t total);

/// Combined strength of independent layers: sum of per-layer log10 p-values.
double multi_layer_strength(std::span<const double> per_layer_log10_p);

/// 100 * matched / total.
double extraction_rate(std::uint64_t matched, std::uint64_t total);

}  // namespace qmark
