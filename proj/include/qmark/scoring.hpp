#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qmark/bundle.hpp"

namespace qmark {

/// Score assigned to positions that can never carry a signature bit.
inline constexpr double kExcluded = std::numeric_limits<double>::infinity();

/// Per-position suitability S = alpha * S_q + beta * S_r; smaller is better.
/// S_q = 1 / |W|, S_r = max(A) / (A_col - min(A)).
///
/// Excluded positions: weights at the extreme levels (never selectable, so a
/// +-1 insertion always stays in range), channels whose activation equals the
/// layer minimum (S_r unbounded) and, when alpha > 0, zero weights (S_q
/// unbounded).
struct ScoreMap {
    std::string layer_name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<double> scores;

    double at(std::size_t row, std::size_t col) const { return scores[row * cols + col]; }
    bool excluded(std::size_t flat) const { return scores[flat] == kExcluded; }
    std::size_t available() const noexcept;
};

struct Position {
    std::size_t row = 0;
    std::size_t col = 0;

    friend auto operator<=>(const Position&, const Position&) = default;
};

struct CandidatePool {
    std::string layer_name;
    std::vector<Position> positions;  // ascending (score, flat index)

    std::size_t size() const noexcept { return positions.size(); }
};

ScoreMap score_layer(const QuantLayer& layer, const ActivationProfile& profile,
                     double alpha, double beta);

CandidatePool build_candidate_pool(const ScoreMap& scores, std::size_t pool_size);

/// Scores every layer of a bundle, parallel across layers.
std::vector<ScoreMap> score_bundle(const ModelBundle& bundle, double alpha, double beta,
                                   unsigned threads = 1);

/// Smallest number of non-excluded positions over all layers: the largest pool
/// size every layer can supply.
std::size_t max_pool_size(std::span<const ScoreMap> maps) noexcept;

}  // namespace qmark
