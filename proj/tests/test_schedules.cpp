#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "neuronal/engine.hpp"
#include "neuronal/model.hpp"
#include "neuronal/schedules.hpp"
#include "neuronal/tokens.hpp"

using namespace neuronal;

namespace {

const std::vector<std::int64_t> kEqual3{100, 100, 100};

double weighted_mean(const std::vector<double>& v, const std::vector<std::int64_t>& w) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        num += static_cast<double>(w[i]) * v[i];
        den += static_cast<double>(w[i]);
    }
    return num / den;
}

void check_plan_invariants(const SparsityPlan& p, const std::vector<std::int64_t>& w, double s) {
    REQUIRE(p.per_block.size() == w.size());
    for (double v : p.per_block) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(std::fabs(weighted_mean(p.per_block, w) - s) < 1e-6);
}

}  // namespace

TEST_CASE("uniform schedule repeats the target") {
    CHECK(uniform_schedule(0.7, 3).per_block == std::vector<double>{0.7, 0.7, 0.7});
    CHECK(uniform_schedule(0.0, 2).per_block == std::vector<double>{0.0, 0.0});
    check_plan_invariants(uniform_schedule(0.42, 4), {10, 20, 30, 40}, 0.42);
}

TEST_CASE("linear schedule closed form") {
    const SparsityPlan p = linear_schedule(0.7, 0.1, kEqual3);
    REQUIRE(p.per_block.size() == 3u);
    CHECK(p.per_block[0] == Catch::Approx(0.6).margin(1e-12));
    CHECK(p.per_block[1] == Catch::Approx(0.7).margin(1e-12));
    CHECK(p.per_block[2] == Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("linear schedule with unequal weights corrects the mean") {
    // raw [0.4, 0.6], weighted mean 0.55, shift by -0.05
    const SparsityPlan p = linear_schedule(0.5, 0.1, {100, 300});
    CHECK(p.per_block[0] == Catch::Approx(0.35).margin(1e-12));
    CHECK(p.per_block[1] == Catch::Approx(0.55).margin(1e-12));
}

TEST_CASE("lambda zero collapses every schedule to uniform bitwise") {
    const std::vector<std::int64_t> w{17, 170, 1700};
    const std::vector<double> want = uniform_schedule(0.7, 3).per_block;
    CHECK(linear_schedule(0.7, 0.0, w).per_block == want);
    CHECK(exp_schedule(0.7, 0.0, w).per_block == want);
    CHECK(log_schedule(0.7, 0.0, w).per_block == want);
    ActivationProfile p;
    p.n_blocks = 3;
    p.layers.assign(18, {1.0, 2.0});
    CHECK(owl_schedule(p, OwlConfig{5.0, 0.0}, 0.7, w).per_block == want);
}

TEST_CASE("exp and log schedules hit the window endpoints for two blocks") {
    for (auto* fn : {&exp_schedule, &log_schedule}) {
        const SparsityPlan p = fn(0.6, 0.15, {50, 50});
        CHECK(p.per_block[0] == Catch::Approx(0.45).margin(1e-12));
        CHECK(p.per_block[1] == Catch::Approx(0.75).margin(1e-12));
    }
}

TEST_CASE("exp schedule matches its formula for three equal blocks") {
    const double s = 0.7, l = 0.1, a = 3.0;
    const SparsityPlan p = exp_schedule(s, l, kEqual3);
    // evaluate the curve independently, then shift to the target mean
    double raw[3];
    for (int i = 0; i < 3; ++i) {
        const double t = i / 2.0;
        raw[i] = s - l + 2 * l * (std::exp(a * t) - 1.0) / (std::exp(a) - 1.0);
    }
    const double shift = s - (raw[0] + raw[1] + raw[2]) / 3.0;
    for (int i = 0; i < 3; ++i) {
        CHECK(p.per_block[static_cast<std::size_t>(i)] == Catch::Approx(raw[i] + shift).margin(1e-9));
    }
    check_plan_invariants(p, kEqual3, s);
}

TEST_CASE("log schedule spacing is concave") {
    const SparsityPlan p = log_schedule(0.7, 0.1, kEqual3);
    CHECK(p.per_block[1] - p.per_block[0] > p.per_block[2] - p.per_block[1]);
    check_plan_invariants(p, kEqual3, 0.7);
}

TEST_CASE("windowed schedules are monotone nondecreasing in block index") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> sd(0.0, 1.0), ld(0.0, 0.3);
    std::uniform_int_distribution<int> bd(1, 7);
    std::uniform_int_distribution<std::int64_t> wd(1, 1000);
    for (int trial = 0; trial < 50; ++trial) {
        const double s = sd(rng), l = ld(rng);
        std::vector<std::int64_t> w(static_cast<std::size_t>(bd(rng)));
        for (auto& x : w) x = wd(rng);
        for (auto* fn : {&linear_schedule, &exp_schedule, &log_schedule}) {
            const SparsityPlan p = fn(s, l, w);
            for (std::size_t i = 1; i < p.per_block.size(); ++i) {
                REQUIRE(p.per_block[i] >= p.per_block[i - 1]);
            }
            check_plan_invariants(p, w, s);
        }
    }
}

TEST_CASE("owl schedule maps outlier ratios into the window") {
    ActivationProfile profile;
    profile.n_blocks = 2;
    profile.layers.assign(12, {});
    // block 0: no outliers; block 1: one strong outlier among ten entries
    // (mean 1.09, threshold 5.45, so the 10.0 counts: ratios [0, 0.1])
    profile.layers[0] = {1.0, 1.0, 1.0, 1.0, 1.0};
    profile.layers[6] = std::vector<double>(9, 0.1);
    profile.layers[6].push_back(10.0);

    const SparsityPlan p = owl_schedule(profile, OwlConfig{5.0, 0.08}, 0.7, {100, 100});
    // more outliers in block 1: it keeps more weights
    CHECK(p.per_block[0] == Catch::Approx(0.78).margin(1e-12));
    CHECK(p.per_block[1] == Catch::Approx(0.62).margin(1e-12));

    SECTION("identical ratios collapse to uniform") {
        ActivationProfile same;
        same.n_blocks = 2;
        same.layers.assign(12, {});
        same.layers[0] = {1.0, 2.0};
        same.layers[6] = {1.0, 2.0};
        const SparsityPlan u = owl_schedule(same, OwlConfig{5.0, 0.08}, 0.7, {100, 100});
        CHECK(u.per_block == std::vector<double>{0.7, 0.7});
    }
}

TEST_CASE("owl outlier threshold uses the block mean") {
    // block 0 is [1,1,1,10] with multiplier 5: mean 3.25, threshold 16.25,
    // zero outliers; block 1 holds a genuine outlier to pin the range
    ActivationProfile two;
    two.n_blocks = 2;
    two.layers.assign(12, {});
    two.layers[0] = {1.0, 1.0, 1.0, 10.0};
    two.layers[6] = std::vector<double>(9, 0.01);
    two.layers[6].push_back(50.0);
    const SparsityPlan p = owl_schedule(two, OwlConfig{5.0, 0.08}, 0.7, {100, 100});
    // block 0 counted zero outliers, so it is the sparsest end of the window
    CHECK(p.per_block[0] == Catch::Approx(0.78).margin(1e-12));
}

TEST_CASE("owl ordering is the reverse of outlier ratios") {
    const ModelBundle m = generate_model(ModelDims{8, 2, 16, 3, 11}, 23);
    const TokenStream t = generate_tokens(11, 32, 1);
    const ActivationProfile dense = capture_profile(m, nullptr, t, 8);
    const SparsityPlan p = owl_schedule(dense, OwlConfig{1.5, 0.08}, 0.7, block_param_counts(m.dims));
    // recompute ratios independently and compare orderings
    std::vector<double> ratio(3, 0.0);
    for (int b = 0; b < 3; ++b) {
        double sum = 0.0;
        std::size_t n = 0;
        for (int k = 0; k < 6; ++k) {
            for (double x : dense.layers[static_cast<std::size_t>(b * 6 + k)]) {
                sum += x;
                ++n;
            }
        }
        const double thr = 1.5 * sum / static_cast<double>(n);
        std::size_t outliers = 0;
        for (int k = 0; k < 6; ++k) {
            for (double x : dense.layers[static_cast<std::size_t>(b * 6 + k)]) {
                outliers += x > thr;
            }
        }
        ratio[static_cast<std::size_t>(b)] = static_cast<double>(outliers) / static_cast<double>(n);
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (ratio[i] < ratio[j]) CHECK(p.per_block[i] >= p.per_block[j]);
        }
    }
}

TEST_CASE("mean_correct handles the documented cases") {
    SECTION("already on target is returned unchanged") {
        const std::vector<double> raw{0.6, 0.7, 0.8};
        CHECK(mean_correct(raw, kEqual3, 0.7) == raw);
    }

    SECTION("uniform shift with weights") {
        const auto got = mean_correct({0.4, 0.6}, {100, 300}, 0.5);
        CHECK(got[0] == Catch::Approx(0.35).margin(1e-12));
        CHECK(got[1] == Catch::Approx(0.55).margin(1e-12));
    }

    SECTION("clipped redistribution keeps the mean and the bounds") {
        const auto got = mean_correct({0.95, 0.99}, {1, 1}, 0.99);
        CHECK((got[0] + got[1]) / 2 == Catch::Approx(0.99).margin(1e-9));
        for (double v : got) CHECK(v <= 1.0);
        // iterate the stated rule by hand: shift to [0.97, 1.01], clip to
        // [0.97, 1.0], then give the 0.005 deficit to the only open entry
        CHECK(got[0] == Catch::Approx(0.98).margin(1e-9));
        CHECK(got[1] == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("preserves weak ordering and the mean under random inputs") {
        std::mt19937 rng(77);
        std::uniform_real_distribution<double> vd(-0.3, 1.3), sd(0.0, 1.0);
        std::uniform_int_distribution<std::int64_t> wd(1, 50);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> raw(5);
            std::vector<std::int64_t> w(5);
            for (auto& x : raw) x = std::clamp(vd(rng), 0.0, 1.0);
            for (auto& x : w) x = wd(rng);
            const double target = sd(rng);
            const auto got = mean_correct(raw, w, target);
            REQUIRE(std::fabs(weighted_mean(got, w) - target) < 1e-6);
            for (std::size_t i = 0; i < 5; ++i) {
                REQUIRE(got[i] >= 0.0);
                REQUIRE(got[i] <= 1.0);
                for (std::size_t j = 0; j < 5; ++j) {
                    if (raw[i] < raw[j]) REQUIRE(got[i] <= got[j] + 1e-12);
                }
            }
        }
    }

    SECTION("rejects nonpositive weights") {
        CHECK_THROWS_AS(mean_correct({0.5}, {0}, 0.5), validation_error);
    }
}

TEST_CASE("schedules reject out-of-range targets") {
    CHECK_THROWS_AS(uniform_schedule(1.2, 2), validation_error);
    CHECK_THROWS_AS(linear_schedule(-0.1, 0.05, kEqual3), validation_error);
    CHECK_THROWS_AS(linear_schedule(0.5, -0.05, kEqual3), validation_error);
}
