#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "qmark/error.hpp"
#include "qmark/rng.hpp"
#include "qmark/scoring.hpp"
#include "test_util.hpp"

using namespace qmark;
using test::make_layer;

namespace {

QuantLayer random_layer(SplitMix64& rng, std::size_t rows, std::size_t cols, int bits) {
    std::vector<std::int8_t> w(rows * cols);
    const int hi = max_level(bits);
    for (auto& v : w) v = static_cast<std::int8_t>(static_cast<int>(rng.below(2 * hi + 1)) - hi);
    return make_layer("rand", rows, cols, bits, std::move(w));
}

ActivationProfile random_profile(SplitMix64& rng, std::size_t cols) {
    ActivationProfile p{"rand", std::vector<float>(cols)};
    for (float& a : p.magnitudes) a = static_cast<float>(rng.uniform() * 10.0);
    return p;
}

// Reference pool: filter, full sort, take the prefix.
std::vector<Position> full_sort_pool(const ScoreMap& map, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < map.scores.size(); ++i) {
        if (map.scores[i] != kExcluded) all.emplace_back(map.scores[i], i);
    }
    std::sort(all.begin(), all.end());
    std::vector<Position> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({all[i].second / map.cols, all[i].second % map.cols});
    return out;
}

}  // namespace

TEST_CASE("quality score alone is 1/|W|") {
    const QuantLayer layer = make_layer("q", 1, 3, 8, {1, 5, 9});
    const ActivationProfile prof{"q", {5.0f, 5.0f, 0.0f}};
    const ScoreMap s = score_layer(layer, prof, 1.0, 0.0);
    CHECK(s.at(0, 0) == 1.0);
    CHECK(s.at(0, 1) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(s.at(0, 1) < s.at(0, 0));  // |W| = 5 preferred
    CHECK(s.excluded(2));            // min-activation channel
}

TEST_CASE("robustness score follows max(A) / (A - min(A))") {
    const QuantLayer layer = make_layer("r", 1, 3, 8, {3, 3, 3});
    const ActivationProfile prof{"r", {1.0f, 2.0f, 4.0f}};
    const ScoreMap s = score_layer(layer, prof, 0.0, 1.0);
    CHECK(s.excluded(0));
    CHECK(s.at(0, 1) == doctest::Approx(4.0 / 1.0));
    CHECK(s.at(0, 2) == doctest::Approx(4.0 / 3.0));
    CHECK(s.at(0, 2) < s.at(0, 1));  // largest activation, smallest score
}

TEST_CASE("combined score is the weighted sum") {
    const QuantLayer layer = make_layer("c", 2, 3, 8, {2, -4, 8, -1, 10, 2});
    const ActivationProfile prof{"c", {1.0f, 2.0f, 4.0f}};
    const ScoreMap s = score_layer(layer, prof, 0.5, 0.25);
    const double sr[] = {kExcluded, 4.0, 4.0 / 3.0};
    const int w[] = {2, -4, 8, -1, 10, 2};
    for (std::size_t i = 0; i < 6; ++i) {
        if (i % 3 == 0) {
            CHECK(s.excluded(i));
        } else {
            CHECK(s.scores[i] == doctest::Approx(0.5 / std::abs(w[i]) + 0.25 * sr[i % 3]));
        }
    }
}

TEST_CASE("extreme levels are excluded regardless of coefficients") {
    const QuantLayer layer = make_layer("x", 1, 4, 4, {7, -7, 6, -6});
    const ActivationProfile prof{"x", {3.0f, 3.0f, 3.0f, 0.5f}};
    for (auto [a, b] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}, {3.0, 0.1}}) {
        const ScoreMap s = score_layer(layer, prof, a, b);
        CHECK(s.excluded(0));
        CHECK(s.excluded(1));
        CHECK_FALSE(s.excluded(2));
    }
}

TEST_CASE("zero weights are excluded only when the quality term is active") {
    const QuantLayer layer = make_layer("z", 1, 3, 8, {0, 4, 0});
    const ActivationProfile prof{"z", {2.0f, 2.0f, 1.0f}};
    CHECK(score_layer(layer, prof, 0.5, 0.5).excluded(0));
    const ScoreMap beta_only = score_layer(layer, prof, 0.0, 1.0);
    CHECK_FALSE(beta_only.excluded(0));
    CHECK(beta_only.at(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("scoring errors") {
    const QuantLayer layer = make_layer("e", 1, 3, 8, {1, 2, 3});
    CHECK_THROWS_AS(score_layer(layer, {"e", {1.0f, 2.0f}}, 0.5, 0.5), Error);
    try {
        score_layer(layer, {"e", {2.0f, 2.0f, 2.0f}}, 0.5, 0.5);
        FAIL("accepted a flat profile");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::degenerate_activation_profile);
        CHECK(std::string(e.what()).find("degenerate activation profile") != std::string::npos);
    }
    CHECK_THROWS_AS(score_layer(layer, {"e", {1.0f, 2.0f, 3.0f}}, 0.0, 0.0), Error);
    CHECK_THROWS_AS(score_layer(layer, {"e", {1.0f, 2.0f, 3.0f}}, -1.0, 1.0), Error);
}

TEST_CASE("candidate pool takes the smallest scores") {
    ScoreMap m{"p", 2, 2, 1.0, 0.0, {3.0, 1.0, 2.0, kExcluded}};
    const CandidatePool pool = build_candidate_pool(m, 2);
    CHECK(pool.positions == std::vector<Position>{{0, 1}, {1, 0}});
}

TEST_CASE("candidate pool breaks ties by flat index") {
    ScoreMap m{"t", 2, 6, 1.0, 0.0, std::vector<double>(12, 5.0)};
    m.scores[5] = 0.5;
    m.scores[9] = 0.5;
    CHECK(build_candidate_pool(m, 1).positions == std::vector<Position>{{0, 5}});
    CHECK(build_candidate_pool(m, 2).positions == std::vector<Position>{{0, 5}, {1, 3}});
}

TEST_CASE("candidate pool equals a full-sort reference") {
    SplitMix64 rng(64);
    for (int trial = 0; trial < 20; ++trial) {
        const QuantLayer layer = random_layer(rng, 64, 64, trial % 2 ? 4 : 8);
        const ActivationProfile prof = random_profile(rng, 64);
        const ScoreMap map = score_layer(layer, prof, rng.uniform(), rng.uniform() + 0.01);
        CHECK(build_candidate_pool(map, 100).positions == full_sort_pool(map, 100));
    }
}

TEST_CASE("pool shortfall names the layer and the gap") {
    ScoreMap m{"short.layer", 1, 3, 1.0, 0.0, {1.0, kExcluded, 2.0}};
    try {
        build_candidate_pool(m, 5);
        FAIL("no shortfall reported");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::pool_shortfall);
        const std::string msg = e.what();
        CHECK(msg.find("short.layer") != std::string::npos);
        CHECK(msg.find("short by 3") != std::string::npos);
    }
}

TEST_CASE("pool is invariant to scaling the activation profile") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const QuantLayer layer = random_layer(rng, 32, 48, 8);
        const ActivationProfile prof = random_profile(rng, 48);
        const CandidatePool base = build_candidate_pool(score_layer(layer, prof, 0.5, 0.5), 200);
        for (float c : {2.0f, 0.5f, 1024.0f, 0.0078125f}) {
            ActivationProfile scaled = prof;
            for (float& a : scaled.magnitudes) a *= c;
            CHECK(build_candidate_pool(score_layer(layer, scaled, 0.5, 0.5), 200).positions == base.positions);
        }
    }
}

TEST_CASE("with beta = 0 larger magnitudes always score lower") {
    SplitMix64 rng(13);
    const QuantLayer layer = random_layer(rng, 16, 16, 8);
    const ScoreMap s = score_layer(layer, random_profile(rng, 16), 1.0, 0.0);
    for (std::size_t a = 0; a < s.scores.size(); ++a) {
        for (std::size_t b = 0; b < s.scores.size(); ++b) {
            if (s.excluded(a) || s.excluded(b)) continue;
            if (std::abs(layer.weights[a]) > std::abs(layer.weights[b])) CHECK(s.scores[a] < s.scores[b]);
        }
    }
}

TEST_CASE("with alpha = 0 a column-aligned pool covers the highest-activation channels") {
    SplitMix64 rng(31);
    const std::size_t rows = 8, cols = 40;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::int8_t> w(rows * cols);
        for (auto& v : w) v = static_cast<std::int8_t>(1 + rng.below(100));
        const QuantLayer layer = make_layer("a0", rows, cols, 8, std::move(w));
        std::vector<float> act(cols);
        std::iota(act.begin(), act.end(), 1.0f);
        std::shuffle(act.begin(), act.end(), rng);
        const ActivationProfile prof{"a0", act};
        const std::size_t k = 1 + rng.below(10);
        const CandidatePool pool = build_candidate_pool(score_layer(layer, prof, 0.0, 1.0), k * rows);
        std::set<std::size_t> chosen;
        for (const Position& p : pool.positions) chosen.insert(p.col);
        CHECK(chosen.size() == k);
        float min_chosen = 1e9f, max_other = -1.0f;
        for (std::size_t c = 0; c < cols; ++c) {
            if (chosen.contains(c)) {
                min_chosen = std::min(min_chosen, act[c]);
            } else {
                max_other = std::max(max_other, act[c]);
            }
        }
        CHECK(min_chosen > max_other);
    }
}

TEST_CASE("no excluded position ever enters a pool") {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int bits = trial % 2 ? 4 : 8;
        const std::size_t rows = 1 + rng.below(20), cols = 2 + rng.below(20);
        const QuantLayer layer = random_layer(rng, rows, cols, bits);
        ActivationProfile prof = random_profile(rng, cols);
        prof.magnitudes[rng.below(cols)] = 0.0f;
        const double alpha = trial % 5 == 0 ? 0.0 : rng.uniform();
        const ScoreMap map = score_layer(layer, prof, alpha, rng.uniform() + 0.01);
        const CandidatePool pool = build_candidate_pool(map, map.available());
        std::set<Position> seen;
        for (const Position& p : pool.positions) {
            CHECK_FALSE(map.excluded(p.row * cols + p.col));
            CHECK(std::abs(layer.at(p.row, p.col)) < layer.max_level());
            CHECK(seen.insert(p).second);
        }
        for (std::size_t i = 1; i < pool.size(); ++i) {
            CHECK(map.at(pool.positions[i - 1].row, pool.positions[i - 1].col) <=
                  map.at(pool.positions[i].row, pool.positions[i].col));
        }
    }
}

TEST_CASE("score_bundle is independent of the thread count") {
    const ModelBundle b = generate_synthetic_bundle({6, 32, 32, 4, 4});
    const auto one = score_bundle(b, 0.5, 0.5, 1);
    for (unsigned t : {2u, 8u}) {
        const auto many = score_bundle(b, 0.5, 0.5, t);
        REQUIRE(many.size() == one.size());
        for (std::size_t i = 0; i < one.size(); ++i) CHECK(many[i].scores == one[i].scores);
    }
    CHECK(max_pool_size(one) > 0);
}
