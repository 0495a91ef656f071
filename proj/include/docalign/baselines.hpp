#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "docalign/corpus.hpp"
#include "docalign/error.hpp"
#include "docalign/eval.hpp"
#include "docalign/matrix.hpp"
#include "docalign/rng.hpp"

namespace docalign {

// Per-image classifier labels with probabilities, descending.
class LabelFile {
public:
    void insert(const std::string& image_id, std::vector<std::pair<std::string, double>> labels) {
        require(!labels.empty(), Errc::validation,
                "label file: empty label list for '" + image_id + "'");
        double prev = 1.0 + 1e-12;
        for (const auto& [label, prob] : labels) {
            require(!label.empty(), Errc::validation, "label file: empty label string");
            require(prob >= 0.0 && prob <= 1.0, Errc::validation,
                    "label file: probability out of [0,1] for '" + image_id + "'");
            require(prob <= prev, Errc::validation,
                    "label file: probabilities not descending for '" + image_id + "'");
            prev = prob;
        }
        auto [it, fresh] = entries_.emplace(image_id, std::move(labels));
        require(fresh, Errc::validation, "label file: duplicate image id '" + image_id + "'");
    }

    bool contains(const std::string& image_id) const { return entries_.count(image_id) != 0; }

    const std::vector<std::pair<std::string, double>>& at(const std::string& image_id) const {
        auto it = entries_.find(image_id);
        require(it != entries_.end(), Errc::validation,
                "label file: missing image '" + image_id + "'");
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }

private:
    std::unordered_map<std::string, std::vector<std::pair<std::string, double>>> entries_;
};

// JSONL: {"image": id, "labels": [["dog", 0.93], ...]}
inline LabelFile load_label_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open label file: " + path.string());
    LabelFile out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            std::vector<std::pair<std::string, double>> labels;
            for (const auto& jl : j.at("labels"))
                labels.emplace_back(jl.at(0).get<std::string>(), jl.at(1).get<double>());
            out.insert(j.at("image").get<std::string>(), std::move(labels));
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::parse, "label file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

struct ImageRep {
    std::vector<double> vec;
    bool out_of_vocab = false;
};

namespace detail {

// Mean embedding of a (possibly multi-token) label; OOV tokens are skipped.
inline ImageRep label_embedding(const std::string& label, const EmbeddingTable& emb) {
    ImageRep out;
    out.vec.assign(emb.dim(), 0.0);
    std::istringstream tokens(label);
    std::string tok;
    std::size_t hits = 0;
    while (tokens >> tok) {
        if (!emb.contains(tok)) continue;
        axpy(1.0, emb.at(tok).data(), out.vec.data(), out.vec.size());
        ++hits;
    }
    if (hits == 0) {
        out.out_of_vocab = true;
        return out;
    }
    for (double& v : out.vec) v /= static_cast<double>(hits);
    return out;
}

inline double safe_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm2(a), nb = norm2(b);
    if (na <= 1e-12 || nb <= 1e-12) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace detail

// Average embedding of the top-K labels; all-OOV labels are skipped and a
// fully OOV image maps to the zero vector with the flag set.
inline ImageRep objdet_image_rep(const std::vector<std::pair<std::string, double>>& labels,
                                 std::size_t k, const EmbeddingTable& emb) {
    require(k >= 1, Errc::validation, "objdet: K must be >= 1");
    require(!labels.empty(), Errc::validation, "objdet: empty label list");
    ImageRep out;
    out.vec.assign(emb.dim(), 0.0);
    std::size_t used = 0;
    const std::size_t take = std::min(k, labels.size());
    for (std::size_t i = 0; i < take; ++i) {
        const ImageRep rep = detail::label_embedding(labels[i].first, emb);
        if (rep.out_of_vocab) continue;
        axpy(1.0, rep.vec.data(), out.vec.data(), out.vec.size());
        ++used;
    }
    if (used == 0) {
        out.out_of_vocab = true;
        return out;
    }
    for (double& v : out.vec) v /= static_cast<double>(used);
    return out;
}

// Training-free similarity matrix: mean-word-embedding sentences against
// top-K label embeddings, cosine per cell (zero-vector sides score 0).
inline Mat objdet_matrix(const Document& doc, const LabelFile& labels, std::size_t k,
                         const EmbeddingTable& emb, std::size_t max_tokens = 20) {
    std::vector<std::vector<double>> sent_reps;
    for (const auto& s : doc.sentences) {
        require(s.tokens.has_value(), Errc::validation,
                "objdet: sentence '" + s.id + "' has no tokens");
        sent_reps.push_back(embed_sentence_mean(*s.tokens, emb, max_tokens).vec);
    }
    std::vector<std::vector<double>> img_reps;
    for (const auto& v : doc.images)
        img_reps.push_back(objdet_image_rep(labels.at(v.id), k, emb).vec);

    Mat m(doc.sentences.size(), doc.images.size());
    for (std::size_t i = 0; i < sent_reps.size(); ++i)
        for (std::size_t j = 0; j < img_reps.size(); ++j)
            m(i, j) = detail::safe_cosine(sent_reps[i], img_reps[j]);
    return m;
}

struct ObjdetSweepResult {
    std::size_t best_k = 0;
    std::vector<EvalReport> reports;  // index i holds K = i + 1
};

// Evaluates K in {1..20} and picks the best macro AUC (ties to smallest K),
// mirroring the strongest-possible post-hoc selection.
inline ObjdetSweepResult objdet_sweep(const Corpus& corpus, const LabelFile& labels,
                                      const EmbeddingTable& emb, std::size_t max_tokens = 20,
                                      std::vector<std::size_t> c_values = {1, 5},
                                      std::size_t threads = 1, std::size_t k_max = 20) {
    ObjdetSweepResult out;
    double best_auc = -1.0;
    for (std::size_t k = 1; k <= k_max; ++k) {
        auto provider = [&](const Document& doc, std::size_t) {
            return objdet_matrix(doc, labels, k, emb, max_tokens);
        };
        out.reports.push_back(evaluate_corpus(corpus, provider, c_values, threads));
        const auto& macro = out.reports.back().macro_auc;
        const double auc = macro ? *macro : -1.0;
        if (auc > best_auc) {
            best_auc = auc;
            out.best_k = k;
        }
    }
    require(out.best_k >= 1, Errc::validation, "objdet sweep: no evaluable documents");
    return out;
}

// i.i.d. Uniform(0,1) matrix; the "Random" comparison row.
inline Mat random_matrix(const Document& doc, Rng& rng) {
    Mat m(doc.sentences.size(), doc.images.size());
    for (auto& v : m.data()) v = rng.uniform();
    return m;
}

}  // namespace docalign
