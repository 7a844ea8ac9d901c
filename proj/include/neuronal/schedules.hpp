#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/profile.hpp"

namespace neuronal {

enum class Schedule { uniform, linear, exp, log, owl, neuronal };

inline const char* schedule_name(Schedule s) {
    switch (s) {
        case Schedule::uniform: return "uniform";
        case Schedule::linear: return "linear";
        case Schedule::exp: return "exp";
        case Schedule::log: return "log";
        case Schedule::owl: return "owl";
        case Schedule::neuronal: return "neuronal";
    }
    return "?";
}

// Per-block target sparsities for one global target s, optionally refined
// to per-row targets. The parameter-weighted mean of per_block equals
// global_s to 1e-6; per_row, when present, preserves each layer's block
// target the same way.
struct SparsityPlan {
    double global_s = 0.0;
    double lambda = 0.0;
    Schedule tag = Schedule::uniform;
    std::vector<double> per_block;
    std::vector<std::vector<double>> per_row;  // flat layer index -> per-output-row target; empty if unused
};

struct OwlConfig {
    double outlier_multiplier = 5.0;  // activations above multiplier * block mean count as outliers
    double lambda = 0.08;
};

inline void check_sparsity_fraction(double s) {
    if (!(s >= 0.0 && s <= 1.0)) {
        throw validation_error("sparsity must lie in [0, 1], got " + std::to_string(s));
    }
}

// Shifts `raw` by a uniform offset so the weighted mean hits `target`,
// clipping to [0,1]. If clipping moved the mean, the residue is spread over
// the unsaturated entries in proportion to their remaining headroom until
// |mean error| < 1e-9 or everything is saturated. Preserves the input's
// weak ordering.
inline std::vector<double> mean_correct(std::vector<double> raw,
                                        const std::vector<std::int64_t>& weights,
                                        double target) {
    if (raw.size() != weights.size()) {
        throw validation_error("mean_correct: weights size does not match values");
    }
    if (raw.empty()) return raw;
    double total_w = 0.0;
    for (std::int64_t w : weights) {
        if (w <= 0) throw validation_error("mean_correct: weights must be positive");
        total_w += static_cast<double>(w);
    }
    auto weighted_mean = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) acc += static_cast<double>(weights[i]) * raw[i];
        return acc / total_w;
    };

    double err = target - weighted_mean();
    if (err == 0.0) return raw;
    for (double& v : raw) v = std::clamp(v + err, 0.0, 1.0);

    for (int iter = 0; iter < 64; ++iter) {
        err = target - weighted_mean();
        if (std::abs(err) < 1e-9) return raw;
        // headroom toward the bound the error pushes us to
        double weighted_headroom = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const double h = err > 0.0 ? 1.0 - raw[i] : raw[i];
            weighted_headroom += static_cast<double>(weights[i]) * h;
        }
        if (weighted_headroom <= 0.0) break;
        const double c = err * total_w / weighted_headroom;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const double h = err > 0.0 ? 1.0 - raw[i] : raw[i];
            raw[i] = std::clamp(raw[i] + c * h, 0.0, 1.0);
        }
    }
    err = target - weighted_mean();
    if (std::abs(err) > 1e-6) {
        throw validation_error("mean_correct: stalled with mean error " + std::to_string(err));
    }
    return raw;
}

inline SparsityPlan uniform_schedule(double s, int n_blocks) {
    check_sparsity_fraction(s);
    if (n_blocks < 1) throw validation_error("uniform_schedule: n_blocks must be >= 1");
    SparsityPlan p;
    p.global_s = s;
    p.lambda = 0.0;
    p.tag = Schedule::uniform;
    p.per_block.assign(static_cast<std::size_t>(n_blocks), s);
    return p;
}

namespace detail {

// Shared wrapper: raw schedule values from a unit ramp, then weighted mean
// correction. ramp(t) must map [0,1] onto [0,1]; raw_i = s - l + 2l*ramp(t_i).
template <class Ramp>
inline SparsityPlan windowed_schedule(double s, double lambda,
                                      const std::vector<std::int64_t>& counts,
                                      Schedule tag, Ramp&& ramp) {
    check_sparsity_fraction(s);
    if (lambda < 0.0) throw validation_error("schedule: lambda must be >= 0");
    const std::size_t n = counts.size();
    if (n == 0) throw validation_error("schedule: need at least one block");
    SparsityPlan p;
    p.global_s = s;
    p.lambda = lambda;
    p.tag = tag;
    if (lambda == 0.0 || n == 1) {
        // exact collapse to the uniform plan
        p.per_block.assign(n, s);
        return p;
    }
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        raw[i] = s - lambda + 2.0 * lambda * ramp(t);
    }
    p.per_block = mean_correct(std::move(raw), counts, s);
    return p;
}

}  // namespace detail

// Monotone ramp from s-lambda to s+lambda across blocks; deeper blocks get
// at least as much sparsity.
inline SparsityPlan linear_schedule(double s, double lambda,
                                    const std::vector<std::int64_t>& block_param_counts) {
    return detail::windowed_schedule(s, lambda, block_param_counts, Schedule::linear,
                                     [](double t) { return t; });
}

inline constexpr double kExpScheduleCurvature = 3.0;

inline SparsityPlan exp_schedule(double s, double lambda,
                                 const std::vector<std::int64_t>& block_param_counts) {
    const double a = kExpScheduleCurvature;
    const double denom = std::exp(a) - 1.0;
    return detail::windowed_schedule(s, lambda, block_param_counts, Schedule::exp,
                                     [=](double t) { return (std::exp(a * t) - 1.0) / denom; });
}

inline constexpr double kLogScheduleCurvature = 9.0;

inline SparsityPlan log_schedule(double s, double lambda,
                                 const std::vector<std::int64_t>& block_param_counts) {
    const double b = kLogScheduleCurvature;
    const double denom = std::log1p(b);
    return detail::windowed_schedule(s, lambda, block_param_counts, Schedule::log,
                                     [=](double t) { return std::log1p(b * t) / denom; });
}

// Outlier-ratio allocation. A block's outlier ratio is the fraction of its
// dense profile entries above multiplier * (block mean); ratios are min-max
// normalized across blocks (all-equal degenerates to 0.5) and mapped so
// blocks with more outliers receive lower sparsity.
inline SparsityPlan owl_schedule(const ActivationProfile& dense_profile, const OwlConfig& cfg,
                                 double s, const std::vector<std::int64_t>& block_param_counts) {
    check_sparsity_fraction(s);
    if (dense_profile.normalized) {
        throw validation_error("owl_schedule: expects the unnormalized dense profile");
    }
    if (cfg.outlier_multiplier <= 1.0) {
        throw validation_error("owl_schedule: outlier multiplier must be > 1");
    }
    const std::size_t n = block_param_counts.size();
    if (dense_profile.n_blocks != static_cast<int>(n)) {
        throw validation_error("owl_schedule: profile block count does not match");
    }

    std::vector<double> ratio(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        std::size_t count = 0;
        for (int k = 0; k < kLayersPerBlock; ++k) {
            const auto& a = dense_profile.layers[i * kLayersPerBlock + static_cast<std::size_t>(k)];
            for (double x : a) sum += x;
            count += a.size();
        }
        if (count == 0) continue;
        const double threshold = cfg.outlier_multiplier * (sum / static_cast<double>(count));
        std::size_t outliers = 0;
        for (int k = 0; k < kLayersPerBlock; ++k) {
            const auto& a = dense_profile.layers[i * kLayersPerBlock + static_cast<std::size_t>(k)];
            for (double x : a) {
                if (x > threshold) ++outliers;
            }
        }
        ratio[i] = static_cast<double>(outliers) / static_cast<double>(count);
    }

    const double lo = *std::min_element(ratio.begin(), ratio.end());
    const double hi = *std::max_element(ratio.begin(), ratio.end());
    SparsityPlan p;
    p.global_s = s;
    p.lambda = cfg.lambda;
    p.tag = Schedule::owl;
    if (cfg.lambda == 0.0 || hi == lo) {
        p.per_block.assign(n, s);
        return p;
    }
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double nr = (ratio[i] - lo) / (hi - lo);
        raw[i] = s + cfg.lambda * (1.0 - 2.0 * nr);
    }
    p.per_block = mean_correct(std::move(raw), block_param_counts, s);
    return p;
}

}  // namespace neuronal
