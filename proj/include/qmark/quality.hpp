#pragma once

#include <cstddef>

#include "qmark/bundle.hpp"

namespace qmark {

/// Saliency-weighted damage estimate of a weight modification. A stand-in for
/// perplexity-style evaluation, which needs real inference; it only ranks
/// modifications, it does not predict quality numbers.
struct QualityProxy {
    std::size_t modified_count = 0;
    int max_abs_delta = 0;
    /// Share of modified positions whose column is among the top 1% (at least
    /// one) activation channels of its layer.
    double salient_hit_fraction = 0.0;
    /// sum_mod |dW| * step * A_hat / sum_all |W| * step * A_hat, with A_hat the
    /// channel activation min-max normalized to [0, 1] per layer.
    double weighted_perturbation = 0.0;
};

/// Uses the original bundle's activations and steps. Throws on shape mismatch.
QualityProxy quality_proxy(const ModelBundle& original, const ModelBundle& modified);

}  // namespace qmark
