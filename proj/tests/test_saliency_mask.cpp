#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "neuronal/engine.hpp"
#include "neuronal/mask.hpp"
#include "neuronal/model.hpp"
#include "neuronal/saliency.hpp"
#include "neuronal/schedules.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace neuronal;

namespace {

// single-layer score fixture: a one-block model shape is not needed to
// exercise grouping, so tests build score sets layer by layer
SaliencyScores scores_from(std::vector<Mat> layers) {
    SaliencyScores s;
    s.scorer = Scorer::magnitude;
    s.layers = std::move(layers);
    return s;
}

SparsityPlan scalar_plan(double s, int n_blocks) { return uniform_schedule(s, n_blocks); }

Mat mat2x2(float a, float b, float c, float d) {
    Mat m(2, 2);
    m.at(0, 0) = a;
    m.at(0, 1) = b;
    m.at(1, 0) = c;
    m.at(1, 1) = d;
    return m;
}

std::vector<Mat> six_layers(Mat first) {
    std::vector<Mat> layers(6, Mat(2, 2, 0.0f));
    layers[0] = std::move(first);
    return layers;
}

}  // namespace

TEST_CASE("magnitude scores are absolute weights") {
    ModelBundle m = make_empty_bundle(ModelDims{2, 1, 2, 1, 3});
    m.blocks[0].attn_q.at(0, 0) = -2.5f;
    const SaliencyScores s = score_magnitude(m);
    CHECK(s.layers[0].at(0, 0) == 2.5f);
    for (float x : s.layers[5].v) CHECK(x == 0.0f);  // all-zero layer stays all-zero

    SECTION("argsort of scores equals argsort of |W| by an independent sort") {
        const ModelBundle r = generate_model(ModelDims{8, 2, 16, 1, 11}, 21);
        const SaliencyScores rs = score_magnitude(r);
        const Mat& w = r.blocks[0].mlp_fc1;
        const Mat& sc = rs.layers[4];
        std::vector<std::size_t> by_score(w.size()), by_absw(w.size());
        std::iota(by_score.begin(), by_score.end(), 0u);
        by_absw = by_score;
        std::stable_sort(by_score.begin(), by_score.end(),
                         [&](std::size_t a, std::size_t b) { return sc.v[a] < sc.v[b]; });
        std::stable_sort(by_absw.begin(), by_absw.end(), [&](std::size_t a, std::size_t b) {
            return std::fabs(w.v[a]) < std::fabs(w.v[b]);
        });
        CHECK(by_score == by_absw);
    }
}

TEST_CASE("wanda combine multiplies |W| with input-feature norms") {
    ModelBundle m = make_empty_bundle(ModelDims{2, 1, 2, 1, 3});
    m.blocks[0].attn_q = mat2x2(1.0f, -2.0f, 3.0f, 4.0f);
    std::vector<std::vector<double>> norms(6, std::vector<double>{0.0, 0.0});
    norms[0] = {1.0, 2.0};
    const SaliencyScores s = wanda_combine(m, norms);
    CHECK(s.layers[0] == mat2x2(1.0f, 4.0f, 3.0f, 8.0f));
}

TEST_CASE("zero calibration activations give all-zero wanda scores") {
    ModelBundle zero = make_empty_bundle(ModelDims{8, 2, 16, 1, 11});
    const TokenStream t = generate_tokens(11, 16, 0);
    const SaliencyScores s = score_wanda(zero, t, 8);
    for (const Mat& layer : s.layers) {
        for (float x : layer.v) CHECK(x == 0.0f);
    }
}

TEST_CASE("scaling input norms by a power of two scales scores exactly and keeps masks") {
    const ModelBundle m = generate_model(ModelDims{8, 2, 16, 2, 11}, 17);
    const TokenStream t = generate_tokens(11, 32, 3);
    auto norms = wanda_input_norms(m, t, 8);
    const SaliencyScores base = wanda_combine(m, norms);
    for (auto& layer : norms) {
        for (double& n : layer) n *= 4.0;
    }
    const SaliencyScores scaled = wanda_combine(m, norms);
    for (std::size_t l = 0; l < base.layers.size(); ++l) {
        for (std::size_t i = 0; i < base.layers[l].v.size(); ++i) {
            REQUIRE(scaled.layers[l].v[i] == 4.0f * base.layers[l].v[i]);
        }
    }
    const SparsityPlan plan = scalar_plan(0.6, 2);
    CHECK(topk_mask(base, plan, Group::row) == topk_mask(scaled, plan, Group::row));
    CHECK(topk_mask(base, plan, Group::layer) == topk_mask(scaled, plan, Group::layer));
}

TEST_CASE("top-k boundary sparsities") {
    const SaliencyScores s = scores_from(six_layers(mat2x2(3, 1, 2, 5)));
    const SparsityMask zeros = topk_mask(s, scalar_plan(1.0, 1), Group::layer);
    for (std::uint8_t b : zeros.layers[0].v) CHECK(b == 0);
    const SparsityMask ones = topk_mask(s, scalar_plan(0.0, 1), Group::layer);
    for (std::uint8_t b : ones.layers[0].v) CHECK(b == 1);
}

TEST_CASE("layer-group top-k keeps the largest scores") {
    // scores [[3,1],[2,5]], s=0.5: keep {5,3}
    const SaliencyScores s = scores_from(six_layers(mat2x2(3, 1, 2, 5)));
    const SparsityMask m = topk_mask(s, scalar_plan(0.5, 1), Group::layer);
    CHECK(m.layers[0].v == std::vector<std::uint8_t>{1, 0, 0, 1});
}

TEST_CASE("row-group ties keep the smaller flat index") {
    const SaliencyScores s = scores_from(six_layers(mat2x2(5, 5, 5, 5)));
    const SparsityMask m = topk_mask(s, scalar_plan(0.5, 1), Group::row);
    CHECK(m.layers[0].v == std::vector<std::uint8_t>{1, 0, 1, 0});
}

TEST_CASE("non-finite scores are rejected") {
    SaliencyScores s = scores_from(six_layers(mat2x2(1, 2, 3, 4)));
    s.layers[0].at(0, 1) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(topk_mask(s, scalar_plan(0.5, 1), Group::layer), validation_error);
}

TEST_CASE("top-k equals a full-sort oracle on random matrices with duplicates") {
    std::mt19937 rng(1234);
    std::uniform_int_distribution<int> dim(1, 16);
    std::uniform_int_distribution<int> level(0, 6);
    std::uniform_real_distribution<double> sparsity(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t rows = static_cast<std::size_t>(dim(rng));
        const std::size_t cols = static_cast<std::size_t>(dim(rng));
        Mat sc(rows, cols);
        // few distinct levels force plenty of ties
        for (float& x : sc.v) x = static_cast<float>(level(rng)) * 0.25f;
        const double s = sparsity(rng);
        const SaliencyScores scores = scores_from(six_layers(Mat(sc)));

        const SparsityMask layer_mask = topk_mask(scores, scalar_plan(s, 1), Group::layer);
        const auto want_layer = oracle::brute_top_k(sc.v, kept_count(s, sc.size()));
        REQUIRE(layer_mask.layers[0].v == want_layer);

        const SparsityMask row_mask = topk_mask(scores, scalar_plan(s, 1), Group::row);
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<float> row(sc.row(r), sc.row(r) + cols);
            const auto want = oracle::brute_top_k(row, kept_count(s, cols));
            const std::vector<std::uint8_t> got(row_mask.layers[0].row(r),
                                                row_mask.layers[0].row(r) + cols);
            REQUIRE(got == want);
        }
    }
}

TEST_CASE("top-k group invariants hold for random inputs") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<float> val(0.0f, 1.0f);
    Mat sc(12, 9);
    for (float& x : sc.v) x = val(rng);
    const SaliencyScores scores = scores_from(six_layers(Mat(sc)));

    for (double s : {0.0, 0.13, 0.5, 0.77, 1.0}) {
        const SparsityMask m = topk_mask(scores, scalar_plan(s, 1), Group::row);
        for (std::size_t r = 0; r < sc.rows; ++r) {
            const std::size_t want_kept = kept_count(s, sc.cols);
            std::size_t kept = 0;
            float min_kept = 1e30f, max_dropped = -1e30f;
            for (std::size_t c = 0; c < sc.cols; ++c) {
                if (m.layers[0].at(r, c)) {
                    ++kept;
                    min_kept = std::min(min_kept, sc.at(r, c));
                } else {
                    max_dropped = std::max(max_dropped, sc.at(r, c));
                }
            }
            REQUIRE(kept == want_kept);
            if (kept > 0 && kept < sc.cols) REQUIRE(min_kept >= max_dropped);
        }
    }

    SECTION("invariant under a strictly increasing transform") {
        SaliencyScores cubed = scores;
        for (float& x : cubed.layers[0].v) x = x * x * x;
        for (double s : {0.25, 0.6}) {
            CHECK(topk_mask(scores, scalar_plan(s, 1), Group::row) ==
                  topk_mask(cubed, scalar_plan(s, 1), Group::row));
            CHECK(topk_mask(scores, scalar_plan(s, 1), Group::layer) ==
                  topk_mask(cubed, scalar_plan(s, 1), Group::layer));
        }
    }

    SECTION("deterministic") {
        CHECK(topk_mask(scores, scalar_plan(0.4, 1), Group::row) ==
              topk_mask(scores, scalar_plan(0.4, 1), Group::row));
    }
}

TEST_CASE("achieved sparsity counts zeros at every granularity") {
    const ModelDims dims{8, 2, 16, 2, 11};
    SparsityMask ones;
    for (int idx = 0; idx < layer_count(dims); ++idx) {
        const LayerId id = layer_from_index(idx);
        ones.layers.emplace_back(layer_rows(dims, id.kind), layer_cols(dims, id.kind), 1);
    }
    const SparsityBreakdown all_kept = achieved_sparsity(ones);
    CHECK(all_kept.global == 0.0);
    for (double b : all_kept.per_block) CHECK(b == 0.0);

    SparsityMask zeros = ones;
    for (auto& l : zeros.layers) std::fill(l.v.begin(), l.v.end(), std::uint8_t{0});
    const SparsityBreakdown all_dropped = achieved_sparsity(zeros);
    CHECK(all_dropped.global == 1.0);
    for (double b : all_dropped.per_layer) CHECK(b == 1.0);
}

TEST_CASE("uniform layer-group masking on large layers hits the target closely") {
    const ModelBundle m = generate_model(ModelDims{32, 2, 64, 1, 11}, 2);  // layers of >= 1024
    const SparsityMask mask = topk_mask(score_magnitude(m), scalar_plan(0.7, 1), Group::layer);
    const SparsityBreakdown got = achieved_sparsity(mask);
    CHECK(std::fabs(got.global - 0.7) < 1e-3);

    // counting oracle
    std::int64_t zeros = 0, total = 0;
    for (const auto& l : mask.layers) {
        for (std::uint8_t b : l.v) zeros += (b == 0);
        total += static_cast<std::int64_t>(l.size());
    }
    CHECK(got.zeros == zeros);
    CHECK(got.total == total);
}

TEST_CASE("masks round-trip through the packed-bit directory format") {
    const ModelBundle m = generate_model(ModelDims{8, 2, 16, 2, 11}, 31);
    const SparsityMask mask = topk_mask(score_magnitude(m), scalar_plan(0.37, 2), Group::row);
    testutil::TempDir dir("mask_rt");
    write_mask(mask, dir.path());
    CHECK(read_mask(dir.path()) == mask);
    CHECK_THROWS_AS(read_mask(dir.path() / "missing"), io_error);
}
