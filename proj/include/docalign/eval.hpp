#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "docalign/assignment.hpp"
#include "docalign/corpus.hpp"
#include "docalign/encoders.hpp"
#include "docalign/error.hpp"
#include "docalign/features.hpp"
#include "docalign/simfn.hpp"
#include "docalign/threads.hpp"

namespace docalign {

// Eval-mode similarity matrix for one document.
inline Mat predict_matrix(const Document& doc, const Corpus& corpus, const EncoderParams& params,
                          TextEncoderKind text_encoder, std::size_t max_tokens = 20) {
    Rng unused(0);  // eval mode draws nothing
    auto sent = sentence_feature_vectors(doc, corpus, text_encoder, max_tokens);
    auto img = image_feature_vectors(doc, corpus);
    auto [es, cs] = encode(sent, Side::sentence, params, false, 0.0, unused);
    auto [ev, cv] = encode(img, Side::image, params, false, 0.0, unused);
    return cosine_matrix(es, ev);
}

namespace detail {

// Average ranks (1-based) with ties sharing the mean of their rank range.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Mann-Whitney AUROC over all n*m candidate edges, in [0, 100]. Requires at
// least one gold and at least one non-gold edge.
inline double doc_auc(const Mat& m, const std::vector<GoldEdge>& gold) {
    const std::size_t cells = m.rows() * m.cols();
    require(!gold.empty() && gold.size() < cells, Errc::validation,
            "doc_auc: undefined for empty or complete gold sets");
    std::vector<char> positive(cells, 0);
    for (const auto& [s, v] : gold) {
        require(s < m.rows() && v < m.cols(), Errc::validation, "doc_auc: gold index out of range");
        positive[s * m.cols() + v] = 1;
    }
    const auto ranks = detail::average_ranks(m.data());
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < cells; ++i)
        if (positive[i]) rank_sum += ranks[i];
    const double n_pos = static_cast<double>(gold.size());
    const double n_neg = static_cast<double>(cells) - n_pos;
    return 100.0 * (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

// Share of gold edges among the min(C, n*m) largest entries; ties break by
// (row, col) lexicographic order.
inline double doc_precision_at(const Mat& m, const std::vector<GoldEdge>& gold, std::size_t c) {
    require(c >= 1, Errc::validation, "doc_precision_at: C must be >= 1");
    const std::size_t cells = m.rows() * m.cols();
    const std::size_t take = std::min(c, cells);
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (m.data()[a] != m.data()[b]) return m.data()[a] > m.data()[b];
                          return a < b;
                      });
    std::set<std::size_t> gold_cells;
    for (const auto& [s, v] : gold) gold_cells.insert(s * m.cols() + v);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < take; ++i) hits += gold_cells.count(order[i]);
    return 100.0 * static_cast<double>(hits) / static_cast<double>(take);
}

struct PerDocEval {
    std::string doc_id;
    std::optional<double> auc;        // absent when gold covers every pair
    std::vector<double> precision;    // aligned with EvalReport::c_values
    std::size_t n = 0, m = 0, n_gold = 0;
};

struct EvalReport {
    std::vector<std::size_t> c_values{1, 5};
    std::vector<PerDocEval> per_document;
    std::optional<double> macro_auc;
    std::vector<double> macro_precision;
    std::vector<std::pair<std::string, std::string>> skipped;  // (doc id, reason)
};

using MatrixProvider = std::function<Mat(const Document&, std::size_t doc_index)>;

// Per-document metrics plus unweighted macro averages. Documents without
// gold edges are skipped outright; documents whose gold covers every pair
// keep their p@C scores but contribute no AUC.
inline EvalReport evaluate_corpus(const Corpus& corpus, const MatrixProvider& provider,
                                  std::vector<std::size_t> c_values = {1, 5},
                                  std::size_t threads = 1) {
    EvalReport report;
    report.c_values = std::move(c_values);

    struct Slot {
        bool skipped = false;
        std::string reason;
        PerDocEval row;
    };
    std::vector<Slot> slots(corpus.documents.size());

    parallel_for(corpus.documents.size(), threads, [&](std::size_t i) {
        const Document& doc = corpus.documents[i];
        Slot& slot = slots[i];
        if (!doc.gold || doc.gold->empty()) {
            slot.skipped = true;
            slot.reason = "no gold edges";
            return;
        }
        const Mat m = provider(doc, i);
        require(m.rows() == doc.sentences.size() && m.cols() == doc.images.size(),
                Errc::validation, "evaluate_corpus: matrix shape mismatch for '" + doc.id + "'");
        slot.row.doc_id = doc.id;
        slot.row.n = m.rows();
        slot.row.m = m.cols();
        slot.row.n_gold = doc.gold->size();
        for (std::size_t c : report.c_values)
            slot.row.precision.push_back(doc_precision_at(m, *doc.gold, c));
        if (doc.gold->size() < m.rows() * m.cols()) {
            slot.row.auc = doc_auc(m, *doc.gold);
        } else {
            slot.reason = "gold covers all pairs; no AUC";
        }
    });

    double auc_sum = 0.0;
    std::size_t auc_count = 0;
    std::vector<double> prec_sum(report.c_values.size(), 0.0);
    std::size_t prec_count = 0;
    for (auto& slot : slots) {
        if (slot.skipped) {
            report.skipped.emplace_back(corpus.documents[&slot - slots.data()].id, slot.reason);
            continue;
        }
        if (!slot.reason.empty()) report.skipped.emplace_back(slot.row.doc_id, slot.reason);
        if (slot.row.auc) {
            auc_sum += *slot.row.auc;
            ++auc_count;
        }
        for (std::size_t k = 0; k < prec_sum.size(); ++k) prec_sum[k] += slot.row.precision[k];
        ++prec_count;
        report.per_document.push_back(std::move(slot.row));
    }
    if (auc_count > 0) report.macro_auc = auc_sum / static_cast<double>(auc_count);
    if (prec_count > 0)
        for (double s : prec_sum)
            report.macro_precision.push_back(s / static_cast<double>(prec_count));
    return report;
}

struct PredictedAlignment {
    // (sentence idx, image idx, weight), sorted by descending weight
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
};

// Assignment-based alignment extraction: solve the (optionally capped)
// matching and order its edges by confidence.
inline PredictedAlignment predicted_alignment(const Mat& m,
                                              std::optional<KPolicy> cap = std::nullopt) {
    AssignmentSolution sol = cap ? solve_assignment_capped(m, cap->resolve(m.rows(), m.cols()))
                                 : solve_assignment(m);
    PredictedAlignment out;
    for (auto [i, j] : sol.matches) out.edges.emplace_back(i, j, m(i, j));
    std::sort(out.edges.begin(), out.edges.end(), [](const auto& a, const auto& b) {
        if (std::get<2>(a) != std::get<2>(b)) return std::get<2>(a) > std::get<2>(b);
        return std::make_pair(std::get<0>(a), std::get<1>(a)) <
               std::make_pair(std::get<0>(b), std::get<1>(b));
    });
    return out;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size() && xs.size() >= 2, Errc::validation,
            "spearman: need two sequences of equal length >= 2");
    const auto rx = detail::average_ranks(xs);
    const auto ry = detail::average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    require(sxx > 0.0 && syy > 0.0, Errc::validation, "spearman: constant input");
    return sxy / std::sqrt(sxx * syy);
}

inline nlohmann::json eval_report_to_json(const EvalReport& report) {
    nlohmann::json per_doc = nlohmann::json::array();
    for (const auto& row : report.per_document) {
        nlohmann::json jr{{"doc_id", row.doc_id},
                          {"n", row.n},
                          {"m", row.m},
                          {"n_gold", row.n_gold}};
        jr["auc"] = row.auc ? nlohmann::json(*row.auc) : nlohmann::json(nullptr);
        nlohmann::json prec;
        for (std::size_t k = 0; k < report.c_values.size(); ++k)
            prec[std::to_string(report.c_values[k])] = row.precision[k];
        jr["precision"] = std::move(prec);
        per_doc.push_back(std::move(jr));
    }
    nlohmann::json macro;
    macro["auc"] = report.macro_auc ? nlohmann::json(*report.macro_auc) : nlohmann::json(nullptr);
    nlohmann::json mprec;
    for (std::size_t k = 0; k < report.c_values.size(); ++k)
        mprec[std::to_string(report.c_values[k])] =
            report.macro_precision.empty() ? nlohmann::json(nullptr)
                                           : nlohmann::json(report.macro_precision[k]);
    macro["precision"] = std::move(mprec);
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& [id, reason] : report.skipped)
        skipped.push_back({{"doc_id", id}, {"reason", reason}});
    return nlohmann::json{{"c_values", report.c_values},
                          {"per_document", std::move(per_doc)},
                          {"macro", std::move(macro)},
                          {"skipped", std::move(skipped)}};
}

}  // namespace docalign
