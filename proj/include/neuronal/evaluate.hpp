#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "neuronal/alignment.hpp"
#include "neuronal/engine.hpp"
#include "neuronal/errors.hpp"
#include "neuronal/mask.hpp"
#include "neuronal/parallel.hpp"
#include "neuronal/saliency.hpp"
#include "neuronal/schedules.hpp"
#include "neuronal/tokens.hpp"

namespace neuronal {

// exp of the mean next-token negative log-likelihood over consecutive
// non-overlapping windows of seq_len tokens; inside each window position t
// predicts token t+1. Log-softmax subtracts the row max before
// exponentiating. Partial trailing windows are dropped.
inline double perplexity(const ModelBundle& model, const SparsityMask* mask,
                         const TokenStream& tokens, int seq_len) {
    if (seq_len < 1) throw validation_error("perplexity: seq_len must be >= 1");
    const TokenStream windows = take_windows(tokens, seq_len, -1);
    const std::size_t n_windows = windows.ids.size() / static_cast<std::size_t>(seq_len);
    if (n_windows == 0 || seq_len < 2) {
        throw validation_error("perplexity: no predicted positions (stream shorter than one window)");
    }
    double nll = 0.0;
    std::uint64_t predicted = 0;
    for (std::size_t w = 0; w < n_windows; ++w) {
        TokenStream window;
        window.vocab = windows.vocab;
        window.ids.assign(windows.ids.begin() + static_cast<std::ptrdiff_t>(w * seq_len),
                          windows.ids.begin() + static_cast<std::ptrdiff_t>((w + 1) * seq_len));
        const Mat logits = forward_logits(model, mask, window, seq_len);
        for (std::size_t t = 0; t + 1 < window.ids.size(); ++t) {
            const float* row = logits.row(t);
            double mx = row[0];
            for (std::size_t i = 1; i < logits.cols; ++i) mx = std::max(mx, static_cast<double>(row[i]));
            double sum = 0.0;
            for (std::size_t i = 0; i < logits.cols; ++i) sum += std::exp(static_cast<double>(row[i]) - mx);
            const double log_z = mx + std::log(sum);
            nll += log_z - static_cast<double>(row[window.ids[t + 1]]);
            ++predicted;
        }
    }
    return std::exp(nll / static_cast<double>(predicted));
}

struct SweepRow {
    double lambda = 0.0;
    std::optional<double> alignment;
    std::optional<double> perplexity;
    std::string error;  // empty on success
};

struct SweepOptions {
    int seq_len = 64;
    int calib_windows = 8;
    int threads = 1;
    double owl_multiplier = 5.0;
};

// Fixed-lambda sweep over one schedule: for each grid value, build the
// plan, mask with rows as the comparison group, compute alignment on the
// selection windows and perplexity on the eval stream. A failing row is
// recorded as an error marker; the sweep itself carries on.
inline std::vector<SweepRow> run_sweep(const ModelBundle& model, Scorer scorer, double s,
                                       Schedule schedule, std::vector<double> lambda_grid,
                                       const TokenStream& calib, const TokenStream& eval_tokens,
                                       const SweepOptions& opts) {
    check_sparsity_fraction(s);
    if (lambda_grid.empty()) throw validation_error("sweep: lambda grid is empty");
    if (schedule == Schedule::neuronal) {
        throw validation_error("sweep: grid sweeps need a fixed-lambda schedule");
    }
    std::sort(lambda_grid.begin(), lambda_grid.end());

    const SaliencyScores scores = scorer == Scorer::magnitude
                                      ? score_magnitude(model)
                                      : score_wanda(model, calib, opts.seq_len);
    const TokenStream calib_lambda = take_windows(calib, opts.seq_len, opts.calib_windows);
    if (calib_lambda.ids.empty()) {
        throw validation_error("sweep: calibration stream is shorter than one window");
    }
    const ActivationProfile dense_norm =
        normalize_profile(capture_profile(model, nullptr, calib_lambda, opts.seq_len));
    ActivationProfile owl_dense;
    if (schedule == Schedule::owl) {
        owl_dense = capture_profile(model, nullptr, calib, opts.seq_len);
    }
    const auto counts = block_param_counts(model.dims);

    std::vector<SweepRow> rows(lambda_grid.size());
    detail::parallel_indexed(rows.size(), opts.threads, [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.lambda = lambda_grid[i];
        try {
            SparsityPlan plan;
            switch (schedule) {
                case Schedule::uniform: plan = uniform_schedule(s, model.dims.n_blocks); break;
                case Schedule::linear: plan = linear_schedule(s, row.lambda, counts); break;
                case Schedule::exp: plan = exp_schedule(s, row.lambda, counts); break;
                case Schedule::log: plan = log_schedule(s, row.lambda, counts); break;
                case Schedule::owl:
                    plan = owl_schedule(owl_dense, OwlConfig{opts.owl_multiplier, row.lambda}, s,
                                        counts);
                    break;
                case Schedule::neuronal: return;
            }
            const SparsityMask mask = topk_mask(scores, plan, Group::row);
            const ActivationProfile sparse =
                normalize_profile(capture_profile(model, &mask, calib_lambda, opts.seq_len));
            row.alignment = neuron_alignment(dense_norm, sparse).total;
            row.perplexity = perplexity(model, &mask, eval_tokens, opts.seq_len);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    return rows;
}

// CSV with header "lambda,alignment,perplexity", rows sorted by lambda.
// Failed rows carry the marker "error" in both value columns.
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "lambda,alignment,perplexity\n";
    char buf[96];
    for (const SweepRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.lambda);
        out += buf;
        if (row.error.empty()) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", *row.alignment, *row.perplexity);
            out += buf;
        } else {
            out += ",error,error";
        }
        out += "\n";
    }
    return out;
}

}  // namespace neuronal
