// Command-line surface: generate desk-scale models and token streams,
// prune with a chosen scorer and top-up, evaluate perplexity, and sweep
// fixed lambdas into CSV.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neuronal/neuronal.hpp"

namespace fs = std::filesystem;
using namespace neuronal;

namespace {

std::string iso_timestamp() {
    const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<double> parse_csv_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw validation_error("cannot parse number '" + item + "' in list '" + csv + "'");
        }
    }
    if (out.empty()) throw validation_error("empty number list '" + csv + "'");
    return out;
}

Scorer parse_scorer(const std::string& s) {
    if (s == "magnitude") return Scorer::magnitude;
    if (s == "wanda") return Scorer::wanda;
    throw validation_error("unknown scorer '" + s + "' (expected magnitude or wanda)");
}

Schedule parse_schedule(const std::string& s) {
    if (s == "uniform") return Schedule::uniform;
    if (s == "linear") return Schedule::linear;
    if (s == "exp") return Schedule::exp;
    if (s == "log") return Schedule::log;
    if (s == "owl") return Schedule::owl;
    throw validation_error("unknown schedule '" + s + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw io_error("write failed: " + path.string());
}

void write_report_json(const fs::path& path, nlohmann::ordered_json j) {
    j["timestamp"] = iso_timestamp();
    write_text(path, j.dump(2) + "\n");
}

struct GenModelArgs {
    int d_model = 0, n_heads = 0, d_ff = 0, n_blocks = 0, vocab = 0;
    std::uint64_t seed = 0;
    std::string out;
};

struct GenTokensArgs {
    std::uint32_t vocab = 0;
    std::size_t length = 0;
    std::uint64_t seed = 0;
    std::string out;
};

struct PruneArgs {
    std::string model, scorer = "wanda", topup = "neuronal", calib, out, report;
    double sparsity = 0.7;
    double lambda = 0.08;
    std::string lambda_set;
    int calib_windows = 8;
    int seq_len = 64;
};

struct EvalArgs {
    std::string model, mask, tokens, report;
    int seq_len = 64;
};

struct SweepArgs {
    std::string model, scorer = "wanda", schedule = "linear", lambda_grid, calib, eval_tokens, out;
    double sparsity = 0.7;
    int calib_windows = 8;
    int seq_len = 64;
};

int run_gen_model(const GenModelArgs& a) {
    const ModelDims dims{a.d_model, a.n_heads, a.d_ff, a.n_blocks, a.vocab};
    const ModelBundle bundle = generate_model(dims, a.seed);
    write_model(bundle, a.out);
    std::cout << "wrote model (" << prunable_param_count(dims) << " prunable params) to " << a.out
              << "\n";
    return 0;
}

int run_gen_tokens(const GenTokensArgs& a) {
    write_tokens(generate_tokens(a.vocab, a.length, a.seed), a.out);
    std::cout << "wrote " << a.length << " tokens to " << a.out << "\n";
    return 0;
}

int run_prune(const PruneArgs& a, int threads) {
    const ModelBundle model = read_model(a.model);
    const TokenStream calib = a.calib.empty() ? TokenStream{} : read_tokens(a.calib);
    const Scorer scorer = parse_scorer(a.scorer);
    RunOptions opts;
    opts.seq_len = a.seq_len;
    opts.calib_windows = a.calib_windows;
    opts.threads = threads;
    if (a.calib.empty() && (scorer == Scorer::wanda || a.topup == "owl" || a.topup == "neuronal" ||
                            a.topup == "neuronal-block")) {
        throw validation_error("--calib is required for this scorer/top-up combination");
    }

    NeuronalResult result;
    if (a.topup == "neuronal" || a.topup == "neuronal-block") {
        LambdaSet lambdas = LambdaSet::defaults();
        if (!a.lambda_set.empty()) {
            lambdas.block_candidates = parse_csv_doubles(a.lambda_set);
            lambdas.row_candidates = lambdas.block_candidates;
            if (lambdas.row_candidates.empty() || lambdas.row_candidates.front() != 0.0) {
                lambdas.row_candidates.insert(lambdas.row_candidates.begin(), 0.0);
            }
        }
        result = run_neuronal(model, scorer, a.sparsity, lambdas, calib, opts,
                              a.topup == "neuronal");
    } else {
        result = run_fixed_topup(model, scorer, parse_schedule(a.topup), a.sparsity, a.lambda,
                                 calib, opts);
    }
    result.report.model_path = a.model;
    result.report.calib_path = a.calib;

    if (!a.out.empty()) write_mask(result.mask, a.out);
    if (!a.report.empty()) write_report_json(a.report, to_json(result.report));

    std::cout << "achieved sparsity " << result.report.achieved.global;
    if (result.report.chosen_lambda_block) {
        std::cout << " (lambda_block=" << *result.report.chosen_lambda_block;
        if (result.report.chosen_lambda_row) {
            std::cout << ", lambda_row=" << *result.report.chosen_lambda_row;
        }
        std::cout << ")";
    }
    std::cout << "\n";
    return 0;
}

int run_eval(const EvalArgs& a) {
    const ModelBundle model = read_model(a.model);
    const TokenStream tokens = read_tokens(a.tokens);
    SparsityMask mask;
    const SparsityMask* mask_ptr = nullptr;
    if (!a.mask.empty()) {
        mask = read_mask(a.mask);
        validate_mask_shapes(mask, model.dims);
        mask_ptr = &mask;
    }
    const double ppl = perplexity(model, mask_ptr, tokens, a.seq_len);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ppl);
    std::cout << buf << "\n";
    if (!a.report.empty()) {
        nlohmann::ordered_json j;
        j["version"] = 1;
        j["perplexity"] = ppl;
        j["seq_len"] = a.seq_len;
        j["inputs"] = {{"model", a.model}, {"mask", a.mask}, {"tokens", a.tokens}};
        write_report_json(a.report, std::move(j));
    }
    return 0;
}

int run_sweep_cmd(const SweepArgs& a, int threads) {
    const ModelBundle model = read_model(a.model);
    const TokenStream calib = read_tokens(a.calib);
    const TokenStream eval_tokens = read_tokens(a.eval_tokens);
    SweepOptions opts;
    opts.seq_len = a.seq_len;
    opts.calib_windows = a.calib_windows;
    opts.threads = threads;
    const auto rows = run_sweep(model, parse_scorer(a.scorer), a.sparsity,
                                parse_schedule(a.schedule), parse_csv_doubles(a.lambda_grid),
                                calib, eval_tokens, opts);
    const std::string csv = sweep_csv(rows);
    if (a.out.empty()) {
        std::cout << csv;
    } else {
        write_text(a.out, csv);
        std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"training-free transformer pruning with alignment-driven sparsity reallocation"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads for independent candidate evaluations")
        ->capture_default_str();

    GenModelArgs gm;
    auto* gen_model_cmd = app.add_subcommand("gen-model", "generate a synthetic model directory");
    gen_model_cmd->add_option("--d-model", gm.d_model)->required();
    gen_model_cmd->add_option("--n-heads", gm.n_heads)->required();
    gen_model_cmd->add_option("--d-ff", gm.d_ff)->required();
    gen_model_cmd->add_option("--n-blocks", gm.n_blocks)->required();
    gen_model_cmd->add_option("--vocab", gm.vocab)->required();
    gen_model_cmd->add_option("--seed", gm.seed)->capture_default_str();
    gen_model_cmd->add_option("--out", gm.out, "output model directory")->required();

    GenTokensArgs gt;
    auto* gen_tokens_cmd = app.add_subcommand("gen-tokens", "generate a token stream file");
    gen_tokens_cmd->add_option("--vocab", gt.vocab)->required();
    gen_tokens_cmd->add_option("--length", gt.length)->required();
    gen_tokens_cmd->add_option("--seed", gt.seed)->capture_default_str();
    gen_tokens_cmd->add_option("--out", gt.out, "output token file")->required();

    PruneArgs pr;
    auto* prune_cmd = app.add_subcommand("prune", "compute a sparsity mask");
    prune_cmd->add_option("--model", pr.model, "model directory")->required();
    prune_cmd->add_option("--scorer", pr.scorer, "magnitude or wanda")->capture_default_str();
    prune_cmd
        ->add_option("--topup", pr.topup,
                     "uniform, linear, exp, log, owl, neuronal, or neuronal-block")
        ->capture_default_str();
    prune_cmd->add_option("--sparsity", pr.sparsity, "global target sparsity")->required();
    prune_cmd->add_option("--calib", pr.calib, "calibration token file");
    prune_cmd->add_option("--calib-windows", pr.calib_windows, "selection subset size, in windows")
        ->capture_default_str();
    prune_cmd->add_option("--seq-len", pr.seq_len)->capture_default_str();
    prune_cmd->add_option("--lambda", pr.lambda, "window half-width for fixed-lambda top-ups")
        ->capture_default_str();
    prune_cmd->add_option("--lambda-set", pr.lambda_set,
                          "comma-separated block candidates for the adaptive top-up "
                          "(0.0 is added for the row step)");
    prune_cmd->add_option("--out", pr.out, "output mask directory");
    prune_cmd->add_option("--report", pr.report, "output report JSON");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "perplexity of a (masked) model");
    eval_cmd->add_option("--model", ev.model, "model directory")->required();
    eval_cmd->add_option("--mask", ev.mask, "mask directory (omit for the dense model)");
    eval_cmd->add_option("--tokens", ev.tokens, "token file")->required();
    eval_cmd->add_option("--seq-len", ev.seq_len)->capture_default_str();
    eval_cmd->add_option("--report", ev.report, "output report JSON");

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "alignment and perplexity across fixed lambdas");
    sweep_cmd->add_option("--model", sw.model, "model directory")->required();
    sweep_cmd->add_option("--scorer", sw.scorer)->capture_default_str();
    sweep_cmd->add_option("--sparsity", sw.sparsity)->required();
    sweep_cmd->add_option("--schedule", sw.schedule, "uniform, linear, exp, log, or owl")
        ->capture_default_str();
    sweep_cmd->add_option("--lambda-grid", sw.lambda_grid, "comma-separated lambdas")->required();
    sweep_cmd->add_option("--calib", sw.calib, "calibration token file")->required();
    sweep_cmd->add_option("--calib-windows", sw.calib_windows)->capture_default_str();
    sweep_cmd->add_option("--seq-len", sw.seq_len)->capture_default_str();
    sweep_cmd->add_option("--eval-tokens", sw.eval_tokens, "perplexity token file")->required();
    sweep_cmd->add_option("--out", sw.out, "output CSV (stdout if omitted)");

    try {
        app.parse(argc, argv);
        if (gen_model_cmd->parsed()) return run_gen_model(gm);
        if (gen_tokens_cmd->parsed()) return run_gen_tokens(gt);
        if (prune_cmd->parsed()) return run_prune(pr, threads);
        if (eval_cmd->parsed()) return run_eval(ev);
        if (sweep_cmd->parsed()) return run_sweep_cmd(sw, threads);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
