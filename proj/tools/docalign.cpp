// Command-line front end: gen | train | predict | eval | baseline | analyze.
// Each subcommand reads a JSON config and applies flag overrides on top, so a
// run is fully determined by (config, seed). Exit codes: 0 success, 2 config
// or validation error, 3 runtime numeric failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "docalign/cli.hpp"

namespace {

using nlohmann::json;

json maybe_config(const std::string& path) {
    if (path.empty()) return json::object();
    return docalign::cli::load_json_file(path);
}

int exit_code_for(const docalign::Error& e) {
    return e.code() == docalign::Errc::numeric ? 3 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised image-sentence link discovery in multimodal documents"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    app.add_option("--config", config_path, "JSON config file")->configurable(false);
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--threads", threads, "worker threads for per-document work");

    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus triple");
    std::string gen_out;
    std::optional<std::size_t> gen_docs;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--n-docs", gen_docs, "total documents across splits");

    auto* train = app.add_subcommand("train", "train encoders with the structured objective");
    std::string train_simfn, train_kpolicy, train_out, train_log;
    std::optional<std::size_t> train_epochs, train_b, train_dmulti;
    std::optional<double> train_lr;
    std::optional<bool> train_hard;
    train->add_option("--simfn", train_simfn, "dc|tk|ap");
    train->add_option("--k-policy", train_kpolicy, "full_min|half_min");
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--negatives", train_b, "negative sets per side");
    train->add_option("--d-multi", train_dmulti, "shared embedding dimension");
    train->add_option("--lr", train_lr, "starting learning rate");
    train->add_option("--hard-negatives", train_hard, "hard (true) or averaged (false)");
    train->add_option("--out", train_out, "checkpoint output path");
    train->add_option("--log", train_log, "training log CSV path");

    auto* predict = app.add_subcommand("predict", "emit per-document matrices and alignments");
    std::string pred_ckpt, pred_corpus, pred_out, pred_cap;
    predict->add_option("--checkpoint", pred_ckpt, "trained checkpoint");
    predict->add_option("--corpus", pred_corpus, "corpus JSONL");
    predict->add_option("--out", pred_out, "predictions JSONL path");
    predict->add_option("--cap", pred_cap, "cap policy for the alignment (full_min|half_min)");

    auto* eval = app.add_subcommand("eval", "score predictions against gold links");
    std::string eval_ckpt, eval_preds, eval_corpus, eval_out;
    std::vector<std::size_t> eval_c;
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint");
    eval->add_option("--predictions", eval_preds, "predictions JSONL");
    eval->add_option("--corpus", eval_corpus, "corpus JSONL with gold edges");
    eval->add_option("--c", eval_c, "precision cutoffs");
    eval->add_option("--out", eval_out, "report JSON path");

    auto* baseline = app.add_subcommand("baseline", "training-free and nostruct baselines");
    std::string base_kind, base_labels, base_corpus, base_out;
    baseline->add_option("--kind", base_kind, "objdet|random|nostruct-train");
    baseline->add_option("--labels", base_labels, "label JSONL for objdet");
    baseline->add_option("--corpus", base_corpus, "corpus JSONL");
    baseline->add_option("--out", base_out, "report JSON path");

    auto* analyze = app.add_subcommand("analyze", "difficulty regression / model comparison");
    std::string an_report, an_corpus, an_out;
    std::vector<std::string> an_compare;
    analyze->add_option("--report", an_report, "eval report JSON");
    analyze->add_option("--corpus", an_corpus, "corpus JSONL");
    analyze->add_option("--out", an_out, "analysis JSON path");
    analyze->add_option("--compare", an_compare, "two eval reports to correlate")
        ->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        json cfg = maybe_config(config_path);
        if (seed) cfg["seed"] = *seed;
        if (threads) cfg["threads"] = *threads;

        if (gen->parsed()) {
            if (!gen_out.empty()) cfg["out_dir"] = gen_out;
            if (gen_docs) cfg["n_docs"] = *gen_docs;
            docalign::cli::run_gen(docalign::cli::gen_args_from_json(cfg));
        } else if (train->parsed()) {
            if (!train_simfn.empty()) cfg["simfn"] = train_simfn;
            if (!train_kpolicy.empty()) cfg["k_policy"] = train_kpolicy;
            if (train_epochs) cfg["epochs"] = *train_epochs;
            if (train_b) cfg["b"] = *train_b;
            if (train_dmulti) cfg["d_multi"] = *train_dmulti;
            if (train_lr) cfg["lr"] = *train_lr;
            if (train_hard) cfg["hard_neg"] = *train_hard;
            if (!train_out.empty()) cfg["out_checkpoint"] = train_out;
            if (!train_log.empty()) cfg["out_log"] = train_log;
            docalign::cli::run_train(docalign::cli::train_args_from_json(cfg));
        } else if (predict->parsed()) {
            if (!pred_ckpt.empty()) cfg["checkpoint"] = pred_ckpt;
            if (!pred_corpus.empty()) cfg["corpus"] = pred_corpus;
            if (!pred_out.empty()) cfg["out"] = pred_out;
            if (!pred_cap.empty()) cfg["cap"] = pred_cap;
            docalign::cli::run_predict(docalign::cli::predict_args_from_json(cfg));
        } else if (eval->parsed()) {
            if (!eval_ckpt.empty()) cfg["checkpoint"] = eval_ckpt;
            if (!eval_preds.empty()) cfg["predictions"] = eval_preds;
            if (!eval_corpus.empty()) cfg["corpus"] = eval_corpus;
            if (!eval_c.empty()) cfg["c_values"] = eval_c;
            if (!eval_out.empty()) cfg["out"] = eval_out;
            const auto report = docalign::cli::run_eval(docalign::cli::eval_args_from_json(cfg));
            if (report.macro_auc)
                std::cout << "macro AUC: " << *report.macro_auc << '\n';
        } else if (baseline->parsed()) {
            if (!base_kind.empty()) cfg["kind"] = base_kind;
            if (!base_labels.empty()) cfg["labels"] = base_labels;
            if (!base_corpus.empty()) cfg["corpus"] = base_corpus;
            if (!base_out.empty()) cfg["out"] = base_out;
            const auto report =
                docalign::cli::run_baseline(docalign::cli::baseline_args_from_json(cfg));
            if (report.macro_auc)
                std::cout << "macro AUC: " << *report.macro_auc << '\n';
        } else if (analyze->parsed()) {
            if (!an_report.empty()) cfg["report"] = an_report;
            if (!an_corpus.empty()) cfg["corpus"] = an_corpus;
            if (!an_out.empty()) cfg["out"] = an_out;
            if (an_compare.size() == 2) {
                cfg["compare_a"] = an_compare[0];
                cfg["compare_b"] = an_compare[1];
            }
            const auto j = docalign::cli::run_analyze(docalign::cli::analyze_args_from_json(cfg));
            if (j.contains("spearman_rho"))
                std::cout << "spearman rho: " << j["spearman_rho"].get<double>() << '\n';
        }
    } catch (const docalign::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
