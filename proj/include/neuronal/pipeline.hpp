#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "neuronal/alignment.hpp"
#include "neuronal/engine.hpp"
#include "neuronal/errors.hpp"
#include "neuronal/mask.hpp"
#include "neuronal/model.hpp"
#include "neuronal/parallel.hpp"
#include "neuronal/saliency.hpp"
#include "neuronal/schedules.hpp"
#include "neuronal/tokens.hpp"

namespace neuronal {

// Candidate window half-widths for the block and row steps. The row set
// must contain 0.0 so keeping the block-step allocation stays available.
struct LambdaSet {
    std::vector<double> block_candidates;
    std::vector<double> row_candidates;

    static LambdaSet defaults() {
        LambdaSet s;
        s.block_candidates = {0.01, 0.02, 0.03, 0.05, 0.06, 0.07, 0.08,
                              0.09, 0.1,  0.12, 0.15, 0.20, 0.25};
        s.row_candidates = s.block_candidates;
        s.row_candidates.insert(s.row_candidates.begin(), 0.0);
        return s;
    }
};

inline void validate(const LambdaSet& s) {
    auto check = [](const std::vector<double>& c, const char* which) {
        if (c.empty()) throw validation_error(std::string(which) + " lambda set is empty");
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (c[i] < 0.0) throw validation_error(std::string(which) + " lambda must be >= 0");
            if (i > 0 && c[i] <= c[i - 1]) {
                throw validation_error(std::string(which) + " lambda set must be strictly increasing");
            }
        }
    };
    check(s.block_candidates, "block");
    check(s.row_candidates, "row");
    if (std::find(s.row_candidates.begin(), s.row_candidates.end(), 0.0) ==
        s.row_candidates.end()) {
        throw validation_error("row lambda set must contain 0.0");
    }
}

struct RunOptions {
    int seq_len = 64;
    int calib_windows = 8;  // size of the selection subset, in windows
    int threads = 1;
};

struct CandidateEval {
    double lambda = 0.0;
    SparsityPlan plan;
    AlignmentValue alignment;
};

namespace detail {

template <class Fn>
auto with_stage(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const validation_error& e) {
        throw validation_error(std::string(stage) + ": " + e.what());
    } catch (const io_error& e) {
        throw io_error(std::string(stage) + ": " + e.what());
    }
}

// Argmin by (alignment, lambda); candidates arrive in increasing lambda, so
// strict < keeps the earliest (smallest-lambda) candidate on ties.
inline std::size_t argmin_candidate(const std::vector<CandidateEval>& c) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < c.size(); ++i) {
        if (c[i].alignment.total < c[best].alignment.total) best = i;
    }
    return best;
}

}  // namespace detail

// One block-step candidate: linear schedule in [s-lambda, s+lambda], mask
// rebuilt with rows as the comparison group at each layer's block target,
// alignment of the resulting sparse activations against the dense profile.
inline CandidateEval eval_block_candidate(const ModelBundle& model, const SaliencyScores& scores,
                                          double lambda, double s, const TokenStream& calib_lambda,
                                          const ActivationProfile& dense_norm, int seq_len) {
    CandidateEval out;
    out.lambda = lambda;
    out.plan = linear_schedule(s, lambda, block_param_counts(model.dims));
    const SparsityMask mask = topk_mask(scores, out.plan, Group::row);
    const ActivationProfile sparse =
        normalize_profile(capture_profile(model, &mask, calib_lambda, seq_len));
    out.alignment = neuron_alignment(dense_norm, sparse);
    return out;
}

struct SelectionResult {
    CandidateEval winner;
    std::vector<std::pair<double, double>> candidate_alignments;  // (lambda, total)
};

inline SelectionResult select_block_plan(const ModelBundle& model, const SaliencyScores& scores,
                                         double s, const LambdaSet& lambdas,
                                         const TokenStream& calib_lambda,
                                         const ActivationProfile& dense_norm,
                                         const RunOptions& opts) {
    validate(lambdas);
    std::vector<CandidateEval> evals(lambdas.block_candidates.size());
    detail::parallel_indexed(evals.size(), opts.threads, [&](std::size_t i) {
        evals[i] = eval_block_candidate(model, scores, lambdas.block_candidates[i], s, calib_lambda,
                                        dense_norm, opts.seq_len);
    });
    SelectionResult r;
    for (const auto& e : evals) r.candidate_alignments.emplace_back(e.lambda, e.alignment.total);
    r.winner = evals[detail::argmin_candidate(evals)];
    return r;
}

// Row-step plan for one candidate lambda: every layer's rows get targets in
// [s_l - lambda, s_l + lambda] around that layer's block target s_l, driven
// by the per-row misalignment between the dense and block-step profiles.
inline SparsityPlan build_row_plan(const SparsityPlan& block_plan,
                                   const ActivationProfile& dense_norm,
                                   const ActivationProfile& sparse_block_norm, double lambda,
                                   const ModelDims& dims) {
    SparsityPlan plan = block_plan;
    plan.tag = Schedule::neuronal;
    plan.lambda = lambda;
    plan.per_row.resize(static_cast<std::size_t>(layer_count(dims)));
    for (int idx = 0; idx < layer_count(dims); ++idx) {
        const LayerId id = layer_from_index(idx);
        const double s_layer = block_plan.per_block[static_cast<std::size_t>(id.block)];
        const std::vector<double> mis = row_misalignment(dense_norm, sparse_block_norm, id);
        plan.per_row[static_cast<std::size_t>(idx)] = row_distribution(mis, s_layer, lambda);
    }
    return plan;
}

inline SelectionResult select_row_plan(const ModelBundle& model, const SaliencyScores& scores,
                                       const SparsityPlan& block_plan, const LambdaSet& lambdas,
                                       const TokenStream& calib_lambda,
                                       const ActivationProfile& dense_norm,
                                       const RunOptions& opts) {
    validate(lambdas);
    const SparsityMask block_mask = topk_mask(scores, block_plan, Group::row);
    const ActivationProfile sparse_block_norm =
        normalize_profile(capture_profile(model, &block_mask, calib_lambda, opts.seq_len));

    std::vector<CandidateEval> evals(lambdas.row_candidates.size());
    detail::parallel_indexed(evals.size(), opts.threads, [&](std::size_t i) {
        CandidateEval e;
        e.lambda = lambdas.row_candidates[i];
        e.plan = build_row_plan(block_plan, dense_norm, sparse_block_norm, e.lambda, model.dims);
        const SparsityMask mask = topk_mask(scores, e.plan, Group::row);
        const ActivationProfile sparse =
            normalize_profile(capture_profile(model, &mask, calib_lambda, opts.seq_len));
        e.alignment = neuron_alignment(dense_norm, sparse);
        evals[i] = std::move(e);
    });
    SelectionResult r;
    for (const auto& e : evals) r.candidate_alignments.emplace_back(e.lambda, e.alignment.total);
    r.winner = evals[detail::argmin_candidate(evals)];
    return r;
}

// Everything a prune run reports; serialized as pretty JSON by the CLI.
struct PruneReport {
    std::string scorer;
    std::string topup;
    double target_sparsity = 0.0;
    int seq_len = 0;
    int calib_windows = 0;
    std::optional<double> chosen_lambda_block;
    std::optional<double> chosen_lambda_row;
    std::vector<std::pair<double, double>> block_candidates;  // (lambda, alignment)
    std::vector<std::pair<double, double>> row_candidates;
    std::optional<double> block_alignment;
    std::optional<double> row_alignment;
    std::vector<double> per_block_sparsity;
    SparsityBreakdown achieved;
    std::optional<double> perplexity;
    std::string model_path;
    std::string calib_path;
    std::optional<std::uint64_t> model_seed;
};

inline nlohmann::ordered_json to_json(const PruneReport& r) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["scorer"] = r.scorer;
    j["topup"] = r.topup;
    j["target_sparsity"] = r.target_sparsity;
    j["seq_len"] = r.seq_len;
    j["calib_windows"] = r.calib_windows;
    auto opt = [](const auto& v) -> nlohmann::ordered_json {
        if (v) return *v;
        return nullptr;
    };
    j["chosen_lambda_block"] = opt(r.chosen_lambda_block);
    j["chosen_lambda_row"] = opt(r.chosen_lambda_row);
    auto cand_list = [](const std::vector<std::pair<double, double>>& c) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (const auto& [lambda, alignment] : c) {
            a.push_back({{"lambda", lambda}, {"alignment", alignment}});
        }
        return a;
    };
    j["block_candidates"] = cand_list(r.block_candidates);
    j["row_candidates"] = cand_list(r.row_candidates);
    j["block_alignment"] = opt(r.block_alignment);
    j["row_alignment"] = opt(r.row_alignment);
    j["per_block_sparsity"] = r.per_block_sparsity;
    nlohmann::ordered_json achieved;
    achieved["global"] = r.achieved.global;
    achieved["per_block"] = r.achieved.per_block;
    nlohmann::ordered_json per_layer = nlohmann::ordered_json::array();
    for (std::size_t idx = 0; idx < r.achieved.per_layer.size(); ++idx) {
        per_layer.push_back({{"name", layer_name(layer_from_index(static_cast<int>(idx)))},
                             {"sparsity", r.achieved.per_layer[idx]}});
    }
    achieved["per_layer"] = std::move(per_layer);
    j["achieved_sparsity"] = std::move(achieved);
    j["perplexity"] = opt(r.perplexity);
    nlohmann::ordered_json inputs;
    inputs["model"] = r.model_path;
    inputs["calib"] = r.calib_path;
    inputs["model_seed"] = opt(r.model_seed);
    j["inputs"] = std::move(inputs);
    return j;
}

struct NeuronalResult {
    SparsityMask mask;
    PruneReport report;
};

// Full two-step procedure: score the dense model once, capture the dense
// profile, pick the block-wise window by alignment, then the row-wise
// window on top of it, and rebuild the final mask from the winning plan.
// Wanda scores use the whole calibration stream; the selection subset is
// its first opts.calib_windows windows.
inline NeuronalResult run_neuronal(const ModelBundle& model, Scorer scorer, double s,
                                   const LambdaSet& lambdas, const TokenStream& calib,
                                   const RunOptions& opts, bool row_step = true) {
    check_sparsity_fraction(s);
    validate(lambdas);
    const TokenStream calib_lambda = take_windows(calib, opts.seq_len, opts.calib_windows);
    if (calib_lambda.ids.empty()) {
        throw validation_error("calibration stream is shorter than one window");
    }

    const SaliencyScores scores = detail::with_stage("scoring", [&] {
        return scorer == Scorer::magnitude ? score_magnitude(model)
                                           : score_wanda(model, calib, opts.seq_len);
    });
    const ActivationProfile dense_norm = detail::with_stage("dense profile", [&] {
        return normalize_profile(capture_profile(model, nullptr, calib_lambda, opts.seq_len));
    });

    const SelectionResult block = detail::with_stage("block step", [&] {
        return select_block_plan(model, scores, s, lambdas, calib_lambda, dense_norm, opts);
    });

    SparsityPlan final_plan = block.winner.plan;
    NeuronalResult out;
    out.report.scorer = scorer_name(scorer);
    out.report.topup = row_step ? "neuronal" : "neuronal-block";
    out.report.target_sparsity = s;
    out.report.seq_len = opts.seq_len;
    out.report.calib_windows = opts.calib_windows;
    out.report.chosen_lambda_block = block.winner.lambda;
    out.report.block_candidates = block.candidate_alignments;
    out.report.block_alignment = block.winner.alignment.total;
    out.report.model_seed = model.seed;

    if (row_step) {
        const SelectionResult row = detail::with_stage("row step", [&] {
            return select_row_plan(model, scores, block.winner.plan, lambdas, calib_lambda,
                                   dense_norm, opts);
        });
        final_plan = row.winner.plan;
        out.report.chosen_lambda_row = row.winner.lambda;
        out.report.row_candidates = row.candidate_alignments;
        out.report.row_alignment = row.winner.alignment.total;
    }

    out.mask = detail::with_stage("final mask", [&] { return topk_mask(scores, final_plan, Group::row); });
    out.report.per_block_sparsity = final_plan.per_block;
    out.report.achieved = achieved_sparsity(out.mask);
    return out;
}

// Single-pass baselines: one schedule, fixed lambda, rows as the comparison
// group. The owl schedule derives outlier ratios from the dense profile
// over the whole calibration stream.
inline NeuronalResult run_fixed_topup(const ModelBundle& model, Scorer scorer, Schedule schedule,
                                      double s, double lambda, const TokenStream& calib,
                                      const RunOptions& opts) {
    check_sparsity_fraction(s);
    const SaliencyScores scores = detail::with_stage("scoring", [&] {
        return scorer == Scorer::magnitude ? score_magnitude(model)
                                           : score_wanda(model, calib, opts.seq_len);
    });
    const auto counts = block_param_counts(model.dims);
    SparsityPlan plan;
    switch (schedule) {
        case Schedule::uniform:
            plan = uniform_schedule(s, model.dims.n_blocks);
            break;
        case Schedule::linear:
            plan = linear_schedule(s, lambda, counts);
            break;
        case Schedule::exp:
            plan = exp_schedule(s, lambda, counts);
            break;
        case Schedule::log:
            plan = log_schedule(s, lambda, counts);
            break;
        case Schedule::owl: {
            const ActivationProfile dense = detail::with_stage("dense profile", [&] {
                return capture_profile(model, nullptr, calib, opts.seq_len);
            });
            plan = owl_schedule(dense, OwlConfig{5.0, lambda}, s, counts);
            break;
        }
        case Schedule::neuronal:
            throw validation_error("run_fixed_topup: use run_neuronal for the adaptive top-up");
    }

    NeuronalResult out;
    out.mask = detail::with_stage("mask", [&] { return topk_mask(scores, plan, Group::row); });
    out.report.scorer = scorer_name(scorer);
    out.report.topup = schedule_name(schedule);
    out.report.target_sparsity = s;
    out.report.seq_len = opts.seq_len;
    out.report.calib_windows = opts.calib_windows;
    if (schedule != Schedule::uniform) out.report.chosen_lambda_block = lambda;
    out.report.per_block_sparsity = plan.per_block;
    out.report.achieved = achieved_sparsity(out.mask);
    out.report.model_seed = model.seed;
    return out;
}

}  // namespace neuronal
