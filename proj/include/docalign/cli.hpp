#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "docalign/analysis.hpp"
#include "docalign/baselines.hpp"
#include "docalign/corpus.hpp"
#include "docalign/error.hpp"
#include "docalign/eval.hpp"
#include "docalign/generator.hpp"
#include "docalign/training.hpp"

// Library-level subcommand implementations. The binary in tools/ only parses
// flags, overlays them on the JSON config, and dispatches here, so tests can
// drive the exact same code paths in-process.
namespace docalign::cli {

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::config, path.string() + ": " + e.what());
    }
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), Errc::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    require(out.good(), Errc::io, "write failed: " + path.string());
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    GeneratorProfile profile;
    std::string out_dir;
};

inline GenArgs gen_args_from_json(const nlohmann::json& j) {
    GenArgs args;
    args.profile = profile_from_json(j);
    args.out_dir = j.value("out_dir", std::string("."));
    return args;
}

inline void run_gen(const GenArgs& args) {
    require(!args.out_dir.empty(), Errc::config, "gen: out_dir required");
    const SyntheticData data = generate_synthetic(args.profile);
    write_generated(data, args.profile, args.out_dir);
}

// ---------------------------------------------------------------- shared corpus loading

struct CorpusPaths {
    std::string corpus;
    std::string sentence_features;
    std::string image_features;
    std::string embeddings;  // optional
};

inline Corpus load_bundle(const CorpusPaths& paths, const std::string& split = "") {
    require(!paths.corpus.empty(), Errc::config, "corpus path required");
    std::shared_ptr<const FeatureTable> sent, img;
    std::shared_ptr<const EmbeddingTable> emb;
    if (!paths.sentence_features.empty())
        sent = std::make_shared<FeatureTable>(load_feature_table(paths.sentence_features));
    if (!paths.image_features.empty())
        img = std::make_shared<FeatureTable>(load_feature_table(paths.image_features));
    if (!paths.embeddings.empty())
        emb = std::make_shared<EmbeddingTable>(load_feature_table(paths.embeddings));
    return load_corpus(paths.corpus, sent, img, emb, split);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    TrainConfig config;
    std::string train_corpus;
    std::string dev_corpus;
    std::string sentence_features;
    std::string image_features;
    std::string embeddings;
    std::string out_checkpoint = "checkpoint.json";
    std::string out_log = "train_log.csv";
};

inline TrainArgs train_args_from_json(const nlohmann::json& j) {
    TrainArgs args;
    args.config = train_config_from_json(j);
    args.train_corpus = j.value("train_corpus", std::string());
    args.dev_corpus = j.value("dev_corpus", std::string());
    args.sentence_features = j.value("sentence_features", std::string());
    args.image_features = j.value("image_features", std::string());
    args.embeddings = j.value("embeddings", std::string());
    args.out_checkpoint = j.value("out_checkpoint", std::string("checkpoint.json"));
    args.out_log = j.value("out_log", std::string("train_log.csv"));
    return args;
}

inline TrainResult run_train(const TrainArgs& args) {
    CorpusPaths train_paths{args.train_corpus, args.sentence_features, args.image_features,
                            args.embeddings};
    Corpus train_corpus = load_bundle(train_paths, "train");
    Corpus dev_corpus;
    if (!args.dev_corpus.empty()) {
        dev_corpus = load_corpus(args.dev_corpus, train_corpus.sentence_features,
                                 train_corpus.image_features, train_corpus.embeddings, "dev");
    }
    TrainResult result = train(train_corpus, dev_corpus, args.config);
    save_checkpoint(result.checkpoint, args.out_checkpoint);
    save_train_log(result.log, args.out_log);
    return result;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
    std::string checkpoint;
    CorpusPaths paths;
    std::string out = "predictions.jsonl";
    std::optional<KPolicy> cap;
    std::size_t threads = 1;
};

inline PredictArgs predict_args_from_json(const nlohmann::json& j) {
    PredictArgs args;
    args.checkpoint = j.value("checkpoint", std::string());
    args.paths = {j.value("corpus", std::string()), j.value("sentence_features", std::string()),
                  j.value("image_features", std::string()), j.value("embeddings", std::string())};
    args.out = j.value("out", std::string("predictions.jsonl"));
    if (j.contains("cap")) args.cap = k_policy_from_string(j["cap"].get<std::string>());
    if (j.contains("threads")) args.threads = j["threads"].get<std::size_t>();
    return args;
}

inline TextEncoderKind checkpoint_text_encoder(const Checkpoint& ckpt) {
    if (ckpt.config.contains("text_encoder"))
        return text_encoder_from_string(ckpt.config["text_encoder"].get<std::string>());
    return TextEncoderKind::feat;
}

inline std::size_t checkpoint_max_tokens(const Checkpoint& ckpt) {
    return ckpt.config.value("max_tokens", std::size_t{20});
}

inline void run_predict(const PredictArgs& args) {
    require(!args.checkpoint.empty(), Errc::config, "predict: checkpoint required");
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const Corpus corpus = load_bundle(args.paths, "");
    const TextEncoderKind kind = checkpoint_text_encoder(ckpt);
    const std::size_t max_tokens = checkpoint_max_tokens(ckpt);

    std::vector<nlohmann::json> lines(corpus.documents.size());
    parallel_for(corpus.documents.size(), args.threads, [&](std::size_t i) {
        const Document& doc = corpus.documents[i];
        const Mat m = predict_matrix(doc, corpus, ckpt.params, kind, max_tokens);
        const PredictedAlignment alignment = predicted_alignment(m, args.cap);
        nlohmann::json matrix = nlohmann::json::array();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            matrix.push_back(std::move(row));
        }
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& [s, v, w] : alignment.edges) edges.push_back({s, v, w});
        lines[i] = nlohmann::json{{"id", doc.id}, {"matrix", std::move(matrix)},
                                  {"edges", std::move(edges)}};
    });

    std::ofstream out(args.out);
    require(out.good(), Errc::io, "cannot write predictions: " + args.out);
    for (const auto& line : lines) out << line.dump() << '\n';
    require(out.good(), Errc::io, "write failed: " + args.out);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint;    // either a checkpoint ...
    std::string predictions;   // ... or a predictions file
    CorpusPaths paths;
    std::vector<std::size_t> c_values{1, 5};
    std::string out = "eval_report.json";
    std::size_t threads = 1;
};

inline EvalArgs eval_args_from_json(const nlohmann::json& j) {
    EvalArgs args;
    args.checkpoint = j.value("checkpoint", std::string());
    args.predictions = j.value("predictions", std::string());
    args.paths = {j.value("corpus", std::string()), j.value("sentence_features", std::string()),
                  j.value("image_features", std::string()), j.value("embeddings", std::string())};
    if (j.contains("c_values")) args.c_values = j["c_values"].get<std::vector<std::size_t>>();
    args.out = j.value("out", std::string("eval_report.json"));
    if (j.contains("threads")) args.threads = j["threads"].get<std::size_t>();
    return args;
}

inline std::unordered_map<std::string, Mat> load_prediction_matrices(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open predictions: " + path.string());
    std::unordered_map<std::string, Mat> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
            out[j.at("id").get<std::string>()] = Mat::from_rows(rows);
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::parse, "predictions line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline EvalReport run_eval(const EvalArgs& args) {
    require(args.checkpoint.empty() != args.predictions.empty(), Errc::config,
            "eval: provide exactly one of checkpoint or predictions");
    const Corpus corpus = load_bundle(args.paths, "");

    EvalReport report;
    if (!args.checkpoint.empty()) {
        const Checkpoint ckpt = load_checkpoint(args.checkpoint);
        const TextEncoderKind kind = checkpoint_text_encoder(ckpt);
        const std::size_t max_tokens = checkpoint_max_tokens(ckpt);
        auto provider = [&](const Document& doc, std::size_t) {
            return predict_matrix(doc, corpus, ckpt.params, kind, max_tokens);
        };
        report = evaluate_corpus(corpus, provider, args.c_values, args.threads);
    } else {
        const auto matrices = load_prediction_matrices(args.predictions);
        auto provider = [&](const Document& doc, std::size_t) {
            auto it = matrices.find(doc.id);
            require(it != matrices.end(), Errc::validation,
                    "eval: no prediction for document '" + doc.id + "'");
            return it->second;
        };
        report = evaluate_corpus(corpus, provider, args.c_values, args.threads);
    }
    if (!args.out.empty()) write_json_file(eval_report_to_json(report), args.out);
    return report;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
    std::string kind;  // "objdet", "random" or "nostruct-train"
    CorpusPaths paths;
    std::string labels;
    std::uint64_t seed = 0;
    std::vector<std::size_t> c_values{1, 5};
    std::string out = "baseline_report.json";
    std::size_t threads = 1;
    std::size_t max_tokens = 20;
    // nostruct-train only
    TrainConfig train_config;
    std::string train_corpus;
    std::string dev_corpus;
    std::string out_checkpoint;
    std::string out_log;
};

inline BaselineArgs baseline_args_from_json(const nlohmann::json& j) {
    BaselineArgs args;
    args.kind = j.value("kind", std::string());
    args.paths = {j.value("corpus", std::string()), j.value("sentence_features", std::string()),
                  j.value("image_features", std::string()), j.value("embeddings", std::string())};
    args.labels = j.value("labels", std::string());
    args.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("c_values")) args.c_values = j["c_values"].get<std::vector<std::size_t>>();
    args.out = j.value("out", std::string("baseline_report.json"));
    if (j.contains("threads")) args.threads = j["threads"].get<std::size_t>();
    if (j.contains("max_tokens")) args.max_tokens = j["max_tokens"].get<std::size_t>();
    if (args.kind == "nostruct-train") {
        args.train_config = train_config_from_json(j);
        args.train_config.mode = TrainMode::nostruct;
        args.train_corpus = j.value("train_corpus", std::string());
        args.dev_corpus = j.value("dev_corpus", std::string());
        args.out_checkpoint = j.value("out_checkpoint", std::string());
        args.out_log = j.value("out_log", std::string());
    }
    return args;
}

inline EvalReport run_baseline(const BaselineArgs& args) {
    const Corpus corpus = load_bundle(args.paths, "");
    EvalReport report;
    nlohmann::json extra;

    if (args.kind == "random") {
        auto provider = [&](const Document& doc, std::size_t i) {
            Rng rng = derive_rng(args.seed, i);
            return random_matrix(doc, rng);
        };
        report = evaluate_corpus(corpus, provider, args.c_values, args.threads);
    } else if (args.kind == "objdet") {
        require(!args.labels.empty(), Errc::config, "objdet baseline: labels file required");
        require(corpus.embeddings != nullptr, Errc::config,
                "objdet baseline: embeddings table required");
        const LabelFile labels = load_label_file(args.labels);
        const ObjdetSweepResult sweep = objdet_sweep(corpus, labels, *corpus.embeddings,
                                                     args.max_tokens, args.c_values, args.threads);
        report = sweep.reports[sweep.best_k - 1];
        extra["best_k"] = sweep.best_k;
        nlohmann::json table = nlohmann::json::array();
        for (std::size_t k = 1; k <= sweep.reports.size(); ++k) {
            const auto& r = sweep.reports[k - 1];
            nlohmann::json row{{"k", k}};
            row["auc"] = r.macro_auc ? nlohmann::json(*r.macro_auc) : nlohmann::json(nullptr);
            for (std::size_t c = 0; c < r.c_values.size(); ++c)
                row["p@" + std::to_string(r.c_values[c])] =
                    r.macro_precision.empty() ? nlohmann::json(nullptr)
                                              : nlohmann::json(r.macro_precision[c]);
            table.push_back(std::move(row));
        }
        extra["sweep"] = std::move(table);
    } else if (args.kind == "nostruct-train") {
        TrainArgs targs;
        targs.config = args.train_config;
        targs.train_corpus = args.train_corpus;
        targs.dev_corpus = args.dev_corpus;
        targs.sentence_features = args.paths.sentence_features;
        targs.image_features = args.paths.image_features;
        targs.embeddings = args.paths.embeddings;
        targs.out_checkpoint = args.out_checkpoint.empty()
                                   ? std::string("nostruct_checkpoint.json")
                                   : args.out_checkpoint;
        targs.out_log = args.out_log.empty() ? std::string("nostruct_log.csv") : args.out_log;
        const TrainResult result = run_train(targs);
        const TextEncoderKind kind = args.train_config.text_encoder;
        auto provider = [&](const Document& doc, std::size_t) {
            return predict_matrix(doc, corpus, result.checkpoint.params, kind,
                                  args.train_config.max_tokens);
        };
        report = evaluate_corpus(corpus, provider, args.c_values, args.threads);
    } else {
        fail(Errc::config, "unknown baseline kind '" + args.kind + "'");
    }

    if (!args.out.empty()) {
        nlohmann::json j = eval_report_to_json(report);
        for (auto& [key, value] : extra.items()) j[key] = value;
        write_json_file(j, args.out);
    }
    return report;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::string report;  // eval report JSON
    CorpusPaths paths;
    std::string out = "analysis.json";
    std::size_t content_dims = 20;
    std::size_t max_tokens = 20;
    std::string text_encoder = "feat";
    // compare mode
    std::string compare_a;
    std::string compare_b;
};

inline AnalyzeArgs analyze_args_from_json(const nlohmann::json& j) {
    AnalyzeArgs args;
    args.report = j.value("report", std::string());
    args.paths = {j.value("corpus", std::string()), j.value("sentence_features", std::string()),
                  j.value("image_features", std::string()), j.value("embeddings", std::string())};
    args.out = j.value("out", std::string("analysis.json"));
    if (j.contains("content_dims")) args.content_dims = j["content_dims"].get<std::size_t>();
    if (j.contains("max_tokens")) args.max_tokens = j["max_tokens"].get<std::size_t>();
    args.text_encoder = j.value("text_encoder", std::string("feat"));
    args.compare_a = j.value("compare_a", std::string());
    args.compare_b = j.value("compare_b", std::string());
    return args;
}

inline std::vector<std::pair<std::string, double>> per_document_auc(const nlohmann::json& report) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& row : report.at("per_document")) {
        if (row.at("auc").is_null()) continue;
        out.emplace_back(row.at("doc_id").get<std::string>(), row.at("auc").get<double>());
    }
    return out;
}

inline nlohmann::json run_analyze(const AnalyzeArgs& args) {
    if (!args.compare_a.empty() || !args.compare_b.empty()) {
        require(!args.compare_a.empty() && !args.compare_b.empty(), Errc::config,
                "analyze --compare needs two reports");
        const auto a = per_document_auc(load_json_file(args.compare_a));
        const auto b = per_document_auc(load_json_file(args.compare_b));
        std::unordered_map<std::string, double> bmap(b.begin(), b.end());
        std::vector<double> xs, ys;
        for (const auto& [id, auc] : a) {
            auto it = bmap.find(id);
            if (it == bmap.end()) continue;
            xs.push_back(auc);
            ys.push_back(it->second);
        }
        const double rho = spearman(xs, ys);
        nlohmann::json j{{"spearman_rho", rho}, {"n", xs.size()}};
        if (!args.out.empty()) write_json_file(j, args.out);
        return j;
    }

    require(!args.report.empty(), Errc::config, "analyze: report path required");
    const Corpus corpus = load_bundle(args.paths, "");
    const auto aucs = per_document_auc(load_json_file(args.report));
    const DifficultyReport report = difficulty_regression(
        aucs, corpus, args.content_dims, text_encoder_from_string(args.text_encoder),
        args.max_tokens);
    nlohmann::json j = difficulty_report_to_json(report);
    if (!args.out.empty()) write_json_file(j, args.out);
    return j;
}

}  // namespace docalign::cli
