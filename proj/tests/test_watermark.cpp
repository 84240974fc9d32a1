#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "qmark/error.hpp"
#include "qmark/rng.hpp"
#include "qmark/scoring.hpp"
#include "qmark/watermark.hpp"
#include "test_util.hpp"

using namespace qmark;

namespace {

// Frozen output of tests/oracles/select_oracle.py 100 50 10 4.
const std::vector<std::vector<std::size_t>> kOracleSelection = {
    {49, 25, 41, 43, 8, 3, 22, 2, 40, 11},
    {30, 8, 18, 33, 37, 36, 9, 29, 2, 0},
    {44, 29, 1, 28, 39, 14, 30, 24, 49, 5},
    {24, 2, 6, 12, 13, 16, 35, 49, 23, 17},
};

InsertParams params(std::size_t pool, std::uint64_t seed = 100) {
    return {seed, 0.5, 0.5, pool, "2026-01-01T00:00:00Z"};
}

std::size_t count_changes(const ModelBundle& a, const ModelBundle& b, int* max_delta = nullptr) {
    std::size_t n = 0;
    int worst = 0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].size(); ++i) {
            const int d = std::abs(int{a.layers[l].weights[i]} - int{b.layers[l].weights[i]});
            if (d != 0) ++n;
            worst = std::max(worst, d);
        }
    }
    if (max_delta) *max_delta = worst;
    return n;
}

}  // namespace

TEST_CASE("splitmix64 reference vectors") {
    SplitMix64 zero(0);
    CHECK(zero.next() == 0xe220a8397b1dcdafULL);
    SplitMix64 s(100);
    CHECK(s.next() == 0x23259b94f13cf544ULL);
    CHECK(s.next() == 0x03bc38d6c6b89fe4ULL);
    CHECK(s.next() == 0x3e540f97fbd2e5cdULL);
}

TEST_CASE("signature from seed uses the low bit of each draw") {
    const Signature sig = Signature::from_seed(100, 16);
    const std::vector<int> expected{-1, -1, 1, -1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, 1, 1};
    CHECK(std::vector<int>(sig.bits().begin(), sig.bits().end()) == expected);
}

TEST_CASE("signature rejects non-Rademacher values") {
    CHECK_THROWS_AS(Signature(std::vector<int>{}), Error);
    CHECK_THROWS_AS(Signature(std::vector<int>{1, 0, -1}), Error);
    CHECK_THROWS_AS(Signature(std::vector<int>{2}), Error);
    CHECK_NOTHROW(Signature(std::vector<int>{1, -1}));
}

TEST_CASE("sparse partial Fisher-Yates equals the dense shuffle") {
    SplitMix64 seeds(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + seeds.below(300);
        const std::size_t k = seeds.below(n + 1);
        const std::uint64_t seed = seeds.next();
        SplitMix64 a(seed), b(seed);
        std::vector<std::size_t> dense(n);
        std::iota(dense.begin(), dense.end(), 0);
        for (std::size_t i = 0; i < k; ++i) std::swap(dense[i], dense[i + b.below(n - i)]);
        dense.resize(k);
        CHECK(partial_fisher_yates(n, k, a) == dense);
    }
}

TEST_CASE("pool selection matches the scripting oracle") {
    for (std::size_t l = 0; l < kOracleSelection.size(); ++l) {
        CHECK(select_pool_indices(100, l, 50, 10) == kOracleSelection[l]);
    }
}

TEST_CASE("derive_locations on a 4-layer bundle matches the oracle") {
    const ModelBundle b = generate_synthetic_bundle({4, 32, 32, 4, 12});
    const Signature sig = Signature::from_seed(9, 40);
    const LocationParams lp{100, 0.5, 0.5, 50, 10};
    const WatermarkLocations locs = derive_locations(b, lp, sig);
    REQUIRE(locs.layers.size() == 4);
    for (std::size_t l = 0; l < 4; ++l) {
        const CandidatePool pool = build_candidate_pool(score_layer(b.layers[l], b.activations[l], 0.5, 0.5), 50);
        REQUIRE(locs.layers[l].positions.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(locs.layers[l].positions[i] == pool.positions[kOracleSelection[l][i]]);
            CHECK(locs.layers[l].bits[i] == sig[l * 10 + i]);
        }
    }
    const WatermarkLocations again = derive_locations(b, lp, sig);
    for (std::size_t l = 0; l < 4; ++l) CHECK(again.layers[l].positions == locs.layers[l].positions);
}

TEST_CASE("selecting the whole pool permutes it") {
    const ModelBundle b = generate_synthetic_bundle({2, 16, 16, 8, 5});
    const LocationParams lp{7, 0.5, 0.5, 30, 30};
    const WatermarkLocations locs = derive_locations(b, lp, Signature::from_seed(1, 60));
    for (std::size_t l = 0; l < 2; ++l) {
        const CandidatePool pool = build_candidate_pool(score_layer(b.layers[l], b.activations[l], 0.5, 0.5), 30);
        auto got = locs.layers[l].positions;
        auto want = pool.positions;
        CHECK(got != want);  // permuted
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        CHECK(got == want);
    }
}

TEST_CASE("two-bit insertion changes exactly two weights") {
    const ModelBundle b = generate_synthetic_bundle({2, 8, 8, 8, 1});
    const InsertResult r = insert(b, Signature(std::vector<int>{1, -1}), params(10));
    int max_delta = 0;
    CHECK(count_changes(b, r.bundle, &max_delta) == 2);
    CHECK(max_delta == 1);
    const Position p0 = r.locations.layers[0].positions[0];
    const Position p1 = r.locations.layers[1].positions[0];
    CHECK(r.bundle.layers[0].at(p0.row, p0.col) - b.layers[0].at(p0.row, p0.col) == 1);
    CHECK(r.bundle.layers[1].at(p1.row, p1.col) - b.layers[1].at(p1.row, p1.col) == -1);
    CHECK(r.key.params.bits_per_layer == 1);
    CHECK(r.key.original_bundle_hash == content_hash(b));
}

TEST_CASE("insertion perturbs exactly |B| weights by one dequantized step") {
    const ModelBundle b = generate_synthetic_bundle({3, 64, 64, 4, 2});
    const Signature sig = Signature::from_seed(4, 120);
    const InsertResult r = insert(b, sig, params(1000));
    int max_delta = 0;
    CHECK(count_changes(b, r.bundle, &max_delta) == 120);
    CHECK(max_delta == 1);
    CHECK_NOTHROW(validate(r.bundle));
    for (std::size_t l = 0; l < 3; ++l) {
        const QuantLayer& before = b.layers[l];
        const QuantLayer& after = r.bundle.layers[l];
        for (std::size_t i = 0; i < 40; ++i) {
            const auto [row, col] = r.locations.layers[l].positions[i];
            const double moved = after.at(row, col) * after.step - before.at(row, col) * before.step;
            CHECK(moved == doctest::Approx(r.locations.layers[l].bits[i] * before.step));
        }
    }
}

TEST_CASE("extraction outcomes") {
    const ModelBundle b = generate_synthetic_bundle({2, 32, 32, 8, 3});
    const InsertResult r = insert(b, Signature::from_seed(5, 10), params(100));

    SUBCASE("watermarked suspect") {
        const VerificationReport rep = extract(r.bundle, b, r.key);
        CHECK(rep.wer == 100.0);
        CHECK(rep.matched_bits == 10);
        CHECK(rep.log10_p_value == doctest::Approx(-10 * std::log10(2.0)));
        REQUIRE(rep.per_layer.size() == 2);
        CHECK(rep.per_layer[1].inserted == 5);
        CHECK(rep.per_layer[1].matched == 5);
    }
    SUBCASE("non-watermarked suspect") {
        const VerificationReport rep = extract(b, b, r.key);
        CHECK(rep.wer == 0.0);
        CHECK(rep.log10_p_value == 0.0);
    }
    SUBCASE("three overwritten bits") {
        ModelBundle suspect = r.bundle;
        const std::vector<std::pair<std::size_t, std::size_t>> hit{{0, 1}, {0, 4}, {1, 2}};
        for (auto [l, i] : hit) {
            const auto [row, col] = r.locations.layers[l].positions[i];
            suspect.layers[l].at(row, col) =
                static_cast<std::int8_t>(b.layers[l].at(row, col) - r.locations.layers[l].bits[i]);
        }
        const VerificationReport rep = extract(suspect, b, r.key);
        CHECK(rep.matched_bits == 7);
        CHECK(rep.wer == doctest::Approx(70.0));
    }
    SUBCASE("wrong original") {
        ModelBundle other = b;
        other.activations[0].magnitudes[0] += 1.0f;
        try {
            extract(r.bundle, other, r.key);
            FAIL("accepted a mismatched original");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::wrong_original_bundle);
            CHECK(std::string(e.what()).find("wrong original bundle") != std::string::npos);
        }
    }
    SUBCASE("shape mismatch") {
        const ModelBundle small = generate_synthetic_bundle({2, 16, 32, 8, 3});
        CHECK_THROWS_AS(extract(small, b, r.key), Error);
    }
}

TEST_CASE("insert rejects bad signature lengths and small pools") {
    const ModelBundle b = generate_synthetic_bundle({3, 8, 8, 8, 3});
    try {
        insert(b, Signature::from_seed(1, 10), params(20));
        FAIL("accepted 10 bits over 3 layers");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::signature_length);
    }
    try {
        insert(b, Signature::from_seed(1, 6), params(1000));
        FAIL("accepted a pool larger than the layer");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::pool_shortfall);
    }
    CHECK_THROWS_AS(insert(b, Signature::from_seed(1, 9), params(2)), Error);
}

TEST_CASE("degenerate activation profiles propagate from scoring") {
    ModelBundle b = generate_synthetic_bundle({2, 8, 8, 8, 3});
    std::fill(b.activations[1].magnitudes.begin(), b.activations[1].magnitudes.end(), 1.0f);
    try {
        insert(b, Signature::from_seed(1, 4), params(10));
        FAIL("inserted into a flat profile");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::degenerate_activation_profile);
    }
}

TEST_CASE("constant signatures round-trip") {
    const ModelBundle b = generate_synthetic_bundle({4, 32, 32, 4, 8});
    for (int v : {1, -1}) {
        const InsertResult r = insert(b, Signature(std::vector<int>(80, v)), params(400));
        CHECK(extract(r.bundle, b, r.key).wer == 100.0);
    }
}

TEST_CASE("insert then extract is total across shapes, widths and seeds") {
    SplitMix64 rng(404);
    for (int trial = 0; trial < 40; ++trial) {
        const int bits = trial % 2 ? 4 : 8;
        const std::size_t layers = 1 + rng.below(5);
        const std::size_t rows = 8 + rng.below(40), cols = 8 + rng.below(40);
        const ModelBundle b = generate_synthetic_bundle({layers, rows, cols, bits, rng.next()});
        const std::size_t per_layer = 1 + rng.below(10);
        const double alpha = trial % 7 == 0 ? 0.0 : rng.uniform();
        const double beta = trial % 5 == 0 ? 0.0 : rng.uniform() + 0.01;
        const auto maps = score_bundle(b, alpha, alpha + beta > 0 ? beta : 1.0);
        const std::size_t pool = std::min(per_layer * (1 + rng.below(20)), max_pool_size(maps));
        if (pool < per_layer) continue;
        const InsertParams p{rng.next(), maps[0].alpha, maps[0].beta, pool, "t"};
        const InsertResult r = insert(b, Signature::from_seed(rng.next(), per_layer * layers), p);
        int max_delta = 0;
        CHECK(count_changes(b, r.bundle, &max_delta) == per_layer * layers);
        CHECK(max_delta == 1);
        CHECK_NOTHROW(validate(r.bundle));
        CHECK(extract(r.bundle, b, r.key).wer == 100.0);
    }
}

TEST_CASE("location derivation is independent of the thread count") {
    const ModelBundle b = generate_synthetic_bundle({8, 48, 48, 4, 6});
    const Signature sig = Signature::from_seed(2, 80);
    const InsertResult one = insert(b, sig, params(300), 1);
    for (unsigned t : {2u, 8u}) {
        const InsertResult many = insert(b, sig, params(300), t);
        CHECK(serialize_bundle(many.bundle) == serialize_bundle(one.bundle));
        CHECK(key_to_json(many.key) == key_to_json(one.key));
    }
}

TEST_CASE("key file round-trip and validation") {
    const ModelBundle b = generate_synthetic_bundle({2, 16, 16, 8, 3});
    InsertParams p = params(40);
    p.seed = 0xFFFF'FFFF'FFFF'FFF1ULL;
    p.alpha = 0.1 + 0.2;
    const InsertResult r = insert(b, Signature::from_seed(3, 20), p);
    const auto path = test::temp_path("key.json");
    save_key(r.key, path);
    const WatermarkKey back = load_key(path);
    CHECK(back == r.key);

    const auto j = nlohmann::json::parse(key_to_json(r.key));
    for (const char* field : {"version", "seed", "alpha", "beta", "pool_size_per_layer", "bits_per_layer",
                              "signature", "original_bundle_hash", "created_at"}) {
        CHECK(j.contains(field));
    }
    CHECK(j["original_bundle_hash"].get<std::string>().size() == 64);

    auto broken = j;
    broken["signature"][0] = 0;
    CHECK_THROWS_AS(key_from_json(broken.dump()), Error);
    broken = j;
    broken["original_bundle_hash"] = "abc";
    CHECK_THROWS_AS(key_from_json(broken.dump()), Error);
    CHECK_THROWS_AS(key_from_json("{not json"), Error);

    WatermarkKey bad = r.key;
    bad.params.bits_per_layer = 3;
    CHECK_THROWS_AS(validate_key(bad, 2), Error);
    bad = r.key;
    bad.params.pool_size = 5;
    CHECK_THROWS_AS(validate_key(bad, 2), Error);
    CHECK_NOTHROW(validate_key(r.key, 2));
}

TEST_CASE("report JSON mirrors the verification report") {
    const ModelBundle b = generate_synthetic_bundle({2, 16, 16, 8, 3});
    const InsertResult r = insert(b, Signature::from_seed(3, 20), params(40));
    const VerificationReport rep = extract(r.bundle, b, r.key);
    const VerificationReport back = report_from_json(report_to_json(rep));
    CHECK(back.total_bits == rep.total_bits);
    CHECK(back.matched_bits == rep.matched_bits);
    CHECK(back.wer == rep.wer);
    CHECK(back.log10_p_value == rep.log10_p_value);
    REQUIRE(back.per_layer.size() == 2);
    CHECK(back.per_layer[0].layer_name == "layer.000");
}
