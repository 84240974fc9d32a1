#include "qmark/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "qmark/error.hpp"
#include "qmark/parallel.hpp"

namespace qmark {

std::size_t ScoreMap::available() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(scores.begin(), scores.end(), [](double s) { return s != kExcluded; }));
}

ScoreMap score_layer(const QuantLayer& layer, const ActivationProfile& profile, double alpha,
                     double beta) {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta) ||
        alpha + beta <= 0.0) {
        throw Error(Errc::invalid_argument, "scoring coefficients need alpha >= 0, beta >= 0, alpha + beta > 0");
    }
    if (profile.magnitudes.size() != layer.cols) {
        throw Error(Errc::shape_mismatch, "layer '" + layer.name + "': activation profile length " +
                                              std::to_string(profile.magnitudes.size()) +
                                              " != cols " + std::to_string(layer.cols));
    }
    const auto [lo_it, hi_it] = std::minmax_element(profile.magnitudes.begin(), profile.magnitudes.end());
    const double act_min = *lo_it;
    const double act_max = *hi_it;
    if (act_min == act_max) {
        throw Error(Errc::degenerate_activation_profile,
                    "layer '" + layer.name + "': degenerate activation profile (all channels equal)");
    }

    // S_r depends only on the column.
    std::vector<double> robustness(layer.cols, kExcluded);
    for (std::size_t c = 0; c < layer.cols; ++c) {
        const double a = profile.magnitudes[c];
        if (a != act_min) robustness[c] = std::abs(act_max / (a - act_min));
    }

    ScoreMap map;
    map.layer_name = layer.name;
    map.rows = layer.rows;
    map.cols = layer.cols;
    map.alpha = alpha;
    map.beta = beta;
    map.scores.assign(layer.size(), kExcluded);
    const int extreme = layer.max_level();
    for (std::size_t r = 0; r < layer.rows; ++r) {
        for (std::size_t c = 0; c < layer.cols; ++c) {
            const int magnitude = std::abs(int{layer.at(r, c)});
            if (magnitude == extreme || robustness[c] == kExcluded) continue;
            double quality = 0.0;
            if (alpha > 0.0) {
                if (magnitude == 0) continue;
                quality = 1.0 / magnitude;
            }
            map.scores[r * layer.cols + c] = alpha * quality + beta * robustness[c];
        }
    }
    return map;
}

CandidatePool build_candidate_pool(const ScoreMap& scores, std::size_t pool_size) {
    std::vector<std::size_t> flat;
    flat.reserve(scores.scores.size());
    for (std::size_t i = 0; i < scores.scores.size(); ++i) {
        if (!scores.excluded(i)) flat.push_back(i);
    }
    if (flat.size() < pool_size) {
        throw Error(Errc::pool_shortfall,
                    "layer '" + scores.layer_name + "': candidate pool needs " + std::to_string(pool_size) +
                        " positions but only " + std::to_string(flat.size()) + " are eligible (short by " +
                        std::to_string(pool_size - flat.size()) + ")");
    }
    auto before = [&](std::size_t a, std::size_t b) {
        const double sa = scores.scores[a];
        const double sb = scores.scores[b];
        return sa < sb || (sa == sb && a < b);
    };
    const auto mid = flat.begin() + static_cast<std::ptrdiff_t>(pool_size);
    std::nth_element(flat.begin(), mid, flat.end(), before);
    std::sort(flat.begin(), mid, before);

    CandidatePool pool;
    pool.layer_name = scores.layer_name;
    pool.positions.reserve(pool_size);
    for (auto it = flat.begin(); it != mid; ++it) {
        pool.positions.push_back({*it / scores.cols, *it % scores.cols});
    }
    return pool;
}

std::vector<ScoreMap> score_bundle(const ModelBundle& bundle, double alpha, double beta,
                                   unsigned threads) {
    if (bundle.activations.size() != bundle.layers.size()) {
        throw Error(Errc::shape_mismatch, "bundle layers and activation profiles differ in count");
    }
    std::vector<ScoreMap> maps(bundle.size());
    parallel_for(bundle.size(), threads, [&](std::size_t i) {
        maps[i] = score_layer(bundle.layers[i], bundle.activations[i], alpha, beta);
    });
    return maps;
}

std::size_t max_pool_size(std::span<const ScoreMap> maps) noexcept {
    std::size_t best = maps.empty() ? 0 : maps.front().available();
    for (const ScoreMap& m : maps) best = std::min(best, m.available());
    return best;
}

}  // namespace qmark
