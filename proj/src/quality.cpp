#include "qmark/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "qmark/error.hpp"

namespace qmark {

namespace {

constexpr double kSalientFraction = 0.01;

std::vector<bool> salient_columns(const std::vector<float>& act) {
    const std::size_t count =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(kSalientFraction * act.size())));
    std::vector<std::size_t> order(act.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return act[a] > act[b]; });
    std::vector<bool> mask(act.size(), false);
    for (std::size_t i = 0; i < count; ++i) mask[order[i]] = true;
    return mask;
}

}  // namespace

QualityProxy quality_proxy(const ModelBundle& original, const ModelBundle& modified) {
    if (!same_shape(original, modified) || original.activations.size() != original.size()) {
        throw Error(Errc::shape_mismatch, "quality_proxy: bundles differ in shape");
    }
    QualityProxy q;
    std::size_t salient_hits = 0;
    double changed = 0.0;
    double reference = 0.0;
    for (std::size_t l = 0; l < original.size(); ++l) {
        const QuantLayer& before = original.layers[l];
        const QuantLayer& after = modified.layers[l];
        const std::vector<float>& act = original.activations[l].magnitudes;
        const auto [lo, hi] = std::minmax_element(act.begin(), act.end());
        const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
        std::vector<double> weight(before.cols, 0.0);
        if (range > 0.0) {
            for (std::size_t c = 0; c < before.cols; ++c) {
                weight[c] = before.step * (static_cast<double>(act[c]) - *lo) / range;
            }
        }
        const std::vector<bool> salient = salient_columns(act);
        for (std::size_t r = 0; r < before.rows; ++r) {
            for (std::size_t c = 0; c < before.cols; ++c) {
                const int w = before.at(r, c);
                reference += std::abs(w) * weight[c];
                const int delta = std::abs(int{after.at(r, c)} - w);
                if (delta == 0) continue;
                ++q.modified_count;
                q.max_abs_delta = std::max(q.max_abs_delta, delta);
                if (salient[c]) ++salient_hits;
                changed += delta * weight[c];
            }
        }
    }
    if (q.modified_count > 0) {
        q.salient_hit_fraction = static_cast<double>(salient_hits) / static_cast<double>(q.modified_count);
    }
    q.weighted_perturbation = reference > 0.0 ? changed / reference : 0.0;
    return q;
}

}  // namespace qmark
