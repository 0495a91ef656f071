#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docalign/corpus.hpp"
#include "docalign/encoders.hpp"
#include "docalign/error.hpp"
#include "docalign/eval.hpp"
#include "docalign/features.hpp"
#include "docalign/rng.hpp"
#include "docalign/simfn.hpp"

namespace docalign {

enum class SimFnKind { dc, tk, ap };

inline SimFnKind simfn_from_string(const std::string& s) {
    if (s == "dc") return SimFnKind::dc;
    if (s == "tk") return SimFnKind::tk;
    if (s == "ap") return SimFnKind::ap;
    fail(Errc::config, "unknown similarity function '" + s + "'");
}

inline std::string to_string(SimFnKind k) {
    switch (k) {
        case SimFnKind::dc: return "dc";
        case SimFnKind::tk: return "tk";
        default: return "ap";
    }
}

inline KPolicy k_policy_from_string(const std::string& s) {
    if (s == "full_min") return {KPolicyKind::full_min};
    if (s == "half_min") return {KPolicyKind::half_min};
    fail(Errc::config, "unknown k policy '" + s + "'");
}

inline std::string to_string(const KPolicy& p) {
    return p.kind == KPolicyKind::full_min ? "full_min" : "half_min";
}

// "structured" trains on set similarities; "nostruct" trains on the cosine
// of one randomly sampled sentence/image per set.
enum class TrainMode { structured, nostruct };

struct TrainConfig {
    SimFnKind simfn = SimFnKind::dc;
    std::optional<KPolicy> k_policy;  // tk defaults to full_min; ap cap only when set
    std::size_t negatives = 10;       // b, per side
    double margin = 0.2;
    bool hard_negatives = true;
    double lr = 1e-4;
    std::size_t epochs = 50;
    double dropout = 0.4;
    std::size_t d_multi = 1024;
    std::size_t plateau_patience = 3;
    double decay_factor = 5.0;
    double min_delta = 1e-4;
    std::size_t max_tokens = 20;
    std::optional<std::size_t> max_items_per_doc;
    std::uint64_t seed = 0;
    TextEncoderKind text_encoder = TextEncoderKind::feat;
    TrainMode mode = TrainMode::structured;

    void validate() const {
        require(dropout >= 0.0 && dropout < 1.0, Errc::config, "train: dropout must be in [0,1)");
        require(margin > 0.0, Errc::config, "train: margin must be positive");
        require(negatives >= 1, Errc::config, "train: need at least one negative per side");
        require(decay_factor > 1.0, Errc::config, "train: decay factor must exceed 1");
        require(lr > 0.0, Errc::config, "train: lr must be positive");
        require(d_multi >= 1, Errc::config, "train: d_multi must be positive");
        if (max_items_per_doc)
            require(*max_items_per_doc >= 1, Errc::config, "train: max_items_per_doc must be >= 1");
    }

    SimValue similarity(const Mat& m) const {
        switch (simfn) {
            case SimFnKind::dc: return sim_dc(m);
            case SimFnKind::tk: return sim_tk(m, k_policy.value_or(KPolicy{KPolicyKind::full_min}));
            default: return sim_ap(m, k_policy);
        }
    }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j{{"simfn", to_string(c.simfn)},
                     {"b", c.negatives},
                     {"margin", c.margin},
                     {"hard_neg", c.hard_negatives},
                     {"lr", c.lr},
                     {"epochs", c.epochs},
                     {"dropout", c.dropout},
                     {"d_multi", c.d_multi},
                     {"plateau_patience", c.plateau_patience},
                     {"decay_factor", c.decay_factor},
                     {"min_delta", c.min_delta},
                     {"max_tokens", c.max_tokens},
                     {"seed", c.seed},
                     {"text_encoder", to_string(c.text_encoder)},
                     {"mode", c.mode == TrainMode::structured ? "structured" : "nostruct"}};
    if (c.k_policy) j["k_policy"] = to_string(*c.k_policy);
    if (c.max_items_per_doc) j["max_items_per_doc"] = *c.max_items_per_doc;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.contains("simfn")) c.simfn = simfn_from_string(j["simfn"].get<std::string>());
        if (j.contains("k_policy")) c.k_policy = k_policy_from_string(j["k_policy"].get<std::string>());
        if (j.contains("b")) c.negatives = j["b"].get<std::size_t>();
        if (j.contains("margin")) c.margin = j["margin"].get<double>();
        if (j.contains("hard_neg")) c.hard_negatives = j["hard_neg"].get<bool>();
        if (j.contains("lr")) c.lr = j["lr"].get<double>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
        if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
        if (j.contains("d_multi")) c.d_multi = j["d_multi"].get<std::size_t>();
        if (j.contains("plateau_patience"))
            c.plateau_patience = j["plateau_patience"].get<std::size_t>();
        if (j.contains("decay_factor")) c.decay_factor = j["decay_factor"].get<double>();
        if (j.contains("min_delta")) c.min_delta = j["min_delta"].get<double>();
        if (j.contains("max_tokens")) c.max_tokens = j["max_tokens"].get<std::size_t>();
        if (j.contains("max_items_per_doc"))
            c.max_items_per_doc = j["max_items_per_doc"].get<std::size_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("text_encoder"))
            c.text_encoder = text_encoder_from_string(j["text_encoder"].get<std::string>());
        if (j.contains("mode"))
            c.mode = j["mode"].get<std::string>() == "nostruct" ? TrainMode::nostruct
                                                                : TrainMode::structured;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::config, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

inline double hinge(double positive, double negative, double margin) {
    return std::max(0.0, margin - positive + negative);
}

// Document-level negatives: b image sets and b sentence sets drawn uniformly
// without replacement from other documents.
struct NegativeSample {
    std::vector<std::size_t> image_docs;     // indices into the corpus
    std::vector<std::size_t> sentence_docs;
};

inline NegativeSample sample_negatives(const Corpus& corpus, std::size_t doc_index, std::size_t b,
                                       Rng& rng) {
    const std::size_t n = corpus.documents.size();
    require(n >= b + 1, Errc::validation, "sample_negatives: corpus too small for b negatives");
    auto draw = [&]() {
        auto picks = rng.sample_indices(n - 1, b);
        for (auto& p : picks)
            if (p >= doc_index) ++p;
        return picks;
    };
    NegativeSample out;
    out.image_docs = draw();
    out.sentence_docs = draw();
    return out;
}

struct AdamState {
    Mat mW_s, vW_s, mW_v, vW_v;
    std::vector<double> mb_s, vb_s, mb_v, vb_v;
    std::size_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(const EncoderParams& p)
        : mW_s(p.W_s.rows(), p.W_s.cols()),
          vW_s(p.W_s.rows(), p.W_s.cols()),
          mW_v(p.W_v.rows(), p.W_v.cols()),
          vW_v(p.W_v.rows(), p.W_v.cols()),
          mb_s(p.d_multi, 0.0),
          vb_s(p.d_multi, 0.0),
          mb_v(p.d_multi, 0.0),
          vb_v(p.d_multi, 0.0) {}
};

// Standard bias-corrected Adam step over all four parameter groups.
inline void adam_step(EncoderParams& params, const ParamGrads& grads, AdamState& state,
                      double lr) {
    require(grads.all_finite(), Errc::numeric, "adam_step: non-finite gradient");
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    auto update = [&](double* w, const double* g, double* m, double* v, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    };
    update(params.W_s.data().data(), grads.gW_s.data().data(), state.mW_s.data().data(),
           state.vW_s.data().data(), params.W_s.size());
    update(params.W_v.data().data(), grads.gW_v.data().data(), state.mW_v.data().data(),
           state.vW_v.data().data(), params.W_v.size());
    update(params.b_s.data(), grads.gb_s.data(), state.mb_s.data(), state.vb_s.data(),
           params.b_s.size());
    update(params.b_v.data(), grads.gb_v.data(), state.mb_v.data(), state.vb_v.data(),
           params.b_v.size());
}

// Drops the learning rate by decay_factor once the best dev loss has gone
// unimproved (by min_delta) for more than `patience` consecutive epochs; the
// stall counter resets after each decay.
struct PlateauState {
    double lr = 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stalled = 0;
};

inline double plateau_update(PlateauState& st, double dev_loss, const TrainConfig& cfg) {
    if (dev_loss <= st.best - cfg.min_delta) {
        st.best = dev_loss;
        st.stalled = 0;
    } else {
        st.stalled += 1;
        if (st.stalled > cfg.plateau_patience) {
            st.lr /= cfg.decay_factor;
            st.stalled = 0;
        }
    }
    return st.lr;
}

// Functional form: replay a dev-loss history from the starting lr.
inline double plateau_schedule(const std::vector<double>& dev_loss_history,
                               const TrainConfig& cfg) {
    require(!dev_loss_history.empty(), Errc::validation, "plateau_schedule: empty history");
    PlateauState st;
    st.lr = cfg.lr;
    for (double loss : dev_loss_history) plateau_update(st, loss, cfg);
    return st.lr;
}

namespace detail {

struct SetEncoding {
    std::vector<std::vector<double>> vectors;
    ForwardCache cache;
    std::vector<std::vector<double>> upstream;  // accumulated dL/d vectors

    void init_upstream() {
        upstream.assign(vectors.size(), std::vector<double>(vectors.front().size(), 0.0));
    }
    bool touched() const {
        for (const auto& g : upstream)
            for (double x : g)
                if (x != 0.0) return true;
        return false;
    }
};

// dL/dM -> upstream gradients of the two encoded sets (weighted by w).
inline void apply_matrix_grad(const Mat& grad, double w, SetEncoding& rows, SetEncoding& cols) {
    for (std::size_t i = 0; i < grad.rows(); ++i) {
        for (std::size_t j = 0; j < grad.cols(); ++j) {
            const double g = grad(i, j);
            if (g == 0.0) continue;
            axpy(w * g, cols.vectors[j].data(), rows.upstream[i].data(),
                 rows.upstream[i].size());
            axpy(w * g, rows.vectors[i].data(), cols.upstream[j].data(),
                 cols.upstream[j].size());
        }
    }
}

// 1x1 similarity used by the nostruct mode: the cosine itself.
inline SimValue sim_single(const Mat& m) {
    SimValue out;
    out.value = m(0, 0);
    out.grad = Mat(1, 1, 1.0);
    return out;
}

struct LossWork {
    double loss = 0.0;
    ParamGrads grads;
    explicit LossWork(const EncoderParams& p) : grads(p) {}
};

// Shared engine behind doc_loss and nostruct_loss. Encodes the positive
// document once, every negative set once, scores all similarities, then
// backpropagates through the hinge-active terms only.
template <typename SimF>
LossWork margin_loss(const std::vector<std::vector<double>>& pos_sent,
                     const std::vector<std::vector<double>>& pos_img,
                     const std::vector<std::vector<std::vector<double>>>& neg_img_sets,
                     const std::vector<std::vector<std::vector<double>>>& neg_sent_sets,
                     const EncoderParams& params, const TrainConfig& cfg, SimF&& sim,
                     bool train_mode, Rng& rng, bool want_grads) {
    LossWork work(params);

    auto enc = [&](const std::vector<std::vector<double>>& feats, Side side) {
        SetEncoding se;
        auto [vecs, cache] = encode(feats, side, params, train_mode, cfg.dropout, rng);
        se.vectors = std::move(vecs);
        se.cache = std::move(cache);
        if (want_grads) se.init_upstream();
        return se;
    };

    SetEncoding es = enc(pos_sent, Side::sentence);
    SetEncoding ev = enc(pos_img, Side::image);
    const SimValue pos = sim(cosine_matrix(es.vectors, ev.vectors));

    std::vector<SetEncoding> neg_img, neg_sent;
    std::vector<SimValue> sim_img, sim_sent;
    for (const auto& feats : neg_img_sets) {
        neg_img.push_back(enc(feats, Side::image));
        sim_img.push_back(sim(cosine_matrix(es.vectors, neg_img.back().vectors)));
    }
    for (const auto& feats : neg_sent_sets) {
        neg_sent.push_back(enc(feats, Side::sentence));
        sim_sent.push_back(sim(cosine_matrix(neg_sent.back().vectors, ev.vectors)));
    }

    double d_pos = 0.0;
    auto side_loss = [&](std::vector<SimValue>& sims, std::vector<SetEncoding>& encs,
                         bool neg_rows) {
        if (sims.empty()) return;
        std::vector<std::size_t> selected;
        if (cfg.hard_negatives) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < sims.size(); ++j)
                if (sims[j].value > sims[best].value) best = j;
            selected.push_back(best);
        } else {
            selected.resize(sims.size());
            std::iota(selected.begin(), selected.end(), std::size_t{0});
        }
        const double w = cfg.hard_negatives ? 1.0 : 1.0 / static_cast<double>(sims.size());
        for (std::size_t j : selected) {
            const double h = hinge(pos.value, sims[j].value, cfg.margin);
            if (h <= 0.0) continue;
            work.loss += w * h;
            if (!want_grads) continue;
            d_pos -= w;
            if (neg_rows)
                apply_matrix_grad(sims[j].grad, w, encs[j], ev);
            else
                apply_matrix_grad(sims[j].grad, w, es, encs[j]);
        }
    };
    side_loss(sim_img, neg_img, false);
    side_loss(sim_sent, neg_sent, true);

    if (!want_grads) return work;

    if (d_pos != 0.0) apply_matrix_grad(pos.grad, d_pos, es, ev);
    if (es.touched()) encoder_backward(params, es.cache, es.upstream, work.grads);
    if (ev.touched()) encoder_backward(params, ev.cache, ev.upstream, work.grads);
    for (auto& se : neg_img)
        if (se.touched()) encoder_backward(params, se.cache, se.upstream, work.grads);
    for (auto& se : neg_sent)
        if (se.touched()) encoder_backward(params, se.cache, se.upstream, work.grads);
    return work;
}

inline std::vector<std::vector<std::vector<double>>> negative_image_features(
    const Corpus& corpus, const NegativeSample& negs) {
    std::vector<std::vector<std::vector<double>>> out;
    for (std::size_t di : negs.image_docs)
        out.push_back(image_feature_vectors(corpus.documents[di], corpus));
    return out;
}

inline std::vector<std::vector<std::vector<double>>> negative_sentence_features(
    const Corpus& corpus, const NegativeSample& negs, const TrainConfig& cfg) {
    std::vector<std::vector<std::vector<double>>> out;
    for (std::size_t di : negs.sentence_docs)
        out.push_back(sentence_feature_vectors(corpus.documents[di], corpus, cfg.text_encoder,
                                               cfg.max_tokens));
    return out;
}

}  // namespace detail

struct DocLossResult {
    double loss = 0.0;
    ParamGrads grads;
};

// Max-margin loss for one document against its sampled negatives: the margin
// violation of the hardest (or, with hard_negatives off, the average of all)
// negative set per side, with exact gradients through the structured
// similarity and both encoders.
inline DocLossResult doc_loss(const Corpus& corpus, const Document& doc,
                              const NegativeSample& negs, const EncoderParams& params,
                              const TrainConfig& cfg, Rng& rng, bool train_mode = true) {
    auto pos_sent = sentence_feature_vectors(doc, corpus, cfg.text_encoder, cfg.max_tokens);
    auto pos_img = image_feature_vectors(doc, corpus);
    auto work = detail::margin_loss(
        pos_sent, pos_img, detail::negative_image_features(corpus, negs),
        detail::negative_sentence_features(corpus, negs, cfg), params, cfg,
        [&](const Mat& m) { return cfg.similarity(m); }, train_mode, rng, true);
    return {work.loss, std::move(work.grads)};
}

// Loss only, eval mode (no dropout); used for dev-set scoring.
inline double doc_loss_value(const Corpus& corpus, const Document& doc,
                             const NegativeSample& negs, const EncoderParams& params,
                             const TrainConfig& cfg) {
    Rng unused(0);
    auto pos_sent = sentence_feature_vectors(doc, corpus, cfg.text_encoder, cfg.max_tokens);
    auto pos_img = image_feature_vectors(doc, corpus);
    auto work = detail::margin_loss(
        pos_sent, pos_img, detail::negative_image_features(corpus, negs),
        detail::negative_sentence_features(corpus, negs, cfg), params, cfg,
        [&](const Mat& m) { return cfg.similarity(m); }, false, unused, false);
    return work.loss;
}

// Structure-free baseline objective: one random sentence and one random
// image stand in for each set, and their cosine is the set similarity.
inline DocLossResult nostruct_loss(const Corpus& corpus, const Document& doc,
                                   const NegativeSample& negs, const EncoderParams& params,
                                   const TrainConfig& cfg, Rng& rng, bool train_mode = true) {
    auto pos_sent = sentence_feature_vectors(doc, corpus, cfg.text_encoder, cfg.max_tokens);
    auto pos_img = image_feature_vectors(doc, corpus);

    // all subsampling happens before any dropout draws, in a fixed order
    std::vector<std::vector<double>> one_sent{pos_sent[rng.below(pos_sent.size())]};
    std::vector<std::vector<double>> one_img{pos_img[rng.below(pos_img.size())]};

    std::vector<std::vector<std::vector<double>>> neg_img;
    for (std::size_t di : negs.image_docs) {
        const auto& d = corpus.documents[di];
        auto feats = image_feature_vectors(d, corpus);
        neg_img.push_back({feats[rng.below(feats.size())]});
    }
    std::vector<std::vector<std::vector<double>>> neg_sent;
    for (std::size_t di : negs.sentence_docs) {
        const auto& d = corpus.documents[di];
        auto feats = sentence_feature_vectors(d, corpus, cfg.text_encoder, cfg.max_tokens);
        neg_sent.push_back({feats[rng.below(feats.size())]});
    }

    auto work = detail::margin_loss(one_sent, one_img, neg_img, neg_sent, params, cfg,
                                    [](const Mat& m) { return detail::sim_single(m); },
                                    train_mode, rng, true);
    return {work.loss, std::move(work.grads)};
}

struct TrainLogRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double dev_auc = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
};

using TrainLog = std::vector<TrainLogRow>;

inline void save_train_log(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), Errc::io, "cannot write train log: " + path.string());
    out << "epoch,train_loss,dev_loss,dev_auc,lr\n";
    for (const auto& row : log) {
        out << row.epoch << ',' << detail::format_double(row.train_loss) << ','
            << detail::format_double(row.dev_loss) << ','
            << (std::isnan(row.dev_auc) ? std::string("nan")
                                        : detail::format_double(row.dev_auc))
            << ',' << detail::format_double(row.lr) << '\n';
    }
}

// Fixed dev-set negatives, reproducible independently of the training
// stream so a saved checkpoint's dev loss can be recomputed later.
inline std::vector<NegativeSample> dev_negative_samples(const Corpus& dev,
                                                        const TrainConfig& cfg) {
    Rng rng = derive_rng(cfg.seed, 0xd00d);
    const std::size_t n = dev.documents.size();
    const std::size_t b = n >= 2 ? std::min(cfg.negatives, n - 1) : 0;
    std::vector<NegativeSample> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(b > 0 ? sample_negatives(dev, i, b, rng) : NegativeSample{});
    return out;
}

inline double mean_dev_loss(const Corpus& dev, const std::vector<NegativeSample>& dev_negs,
                            const EncoderParams& params, const TrainConfig& cfg) {
    if (dev.documents.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (std::size_t i = 0; i < dev.documents.size(); ++i) {
        const Document& doc = dev.documents[i];
        if (cfg.mode == TrainMode::nostruct) {
            // sampling inside nostruct must stay deterministic per epoch
            Rng rng = derive_rng(cfg.seed, 0xdead + i);
            auto res = nostruct_loss(dev, doc, dev_negs[i], params, cfg, rng, false);
            total += res.loss;
        } else {
            total += doc_loss_value(dev, doc, dev_negs[i], params, cfg);
        }
    }
    return total / static_cast<double>(dev.documents.size());
}

inline double mean_dev_auc(const Corpus& dev, const EncoderParams& params,
                           const TrainConfig& cfg) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& doc : dev.documents) {
        if (!doc.gold || doc.gold->empty()) continue;
        if (doc.gold->size() >= doc.sentences.size() * doc.images.size()) continue;
        const Mat m = predict_matrix(doc, dev, params, cfg.text_encoder, cfg.max_tokens);
        total += doc_auc(m, *doc.gold);
        ++count;
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : total / static_cast<double>(count);
}

struct TrainResult {
    Checkpoint checkpoint;
    TrainLog log;
};

// Full protocol: shuffled per-document updates with fresh negatives, Adam,
// plateau lr decay on dev loss, and selection of the lowest-dev-loss
// checkpoint. Deterministic for a fixed config and seed.
inline TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                         const TrainConfig& cfg) {
    cfg.validate();
    require(!train_corpus.documents.empty(), Errc::validation, "train: empty train split");

    const std::size_t d_s = cfg.text_encoder == TextEncoderKind::feat
                                ? (require(train_corpus.sentence_features != nullptr, Errc::config,
                                           "train: sentence feature table required"),
                                   train_corpus.sentence_features->dim())
                                : (require(train_corpus.embeddings != nullptr, Errc::config,
                                           "train: embedding table required"),
                                   train_corpus.embeddings->dim());
    require(train_corpus.image_features != nullptr, Errc::config,
            "train: image feature table required");
    const std::size_t d_v = train_corpus.image_features->dim();

    Rng rng(cfg.seed);
    EncoderParams params = init_params(d_s, d_v, cfg.d_multi, rng);
    AdamState adam(params);
    PlateauState plateau;
    plateau.lr = cfg.lr;

    const auto dev_negs = dev_negative_samples(dev_corpus, cfg);

    TrainResult result;
    result.checkpoint.params = params;
    result.checkpoint.config = train_config_to_json(cfg);
    result.checkpoint.epoch = 0;
    result.checkpoint.dev_loss = mean_dev_loss(dev_corpus, dev_negs, params, cfg);

    double lr = cfg.lr;
    std::vector<std::size_t> order(train_corpus.documents.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t di : order) {
            const Document* doc = &train_corpus.documents[di];
            Document reduced;
            if (cfg.max_items_per_doc) {
                reduced = subsample_document(*doc, *cfg.max_items_per_doc, rng);
                doc = &reduced;
            }
            const auto negs = sample_negatives(train_corpus, di, cfg.negatives, rng);
            DocLossResult res =
                cfg.mode == TrainMode::structured
                    ? doc_loss(train_corpus, *doc, negs, params, cfg, rng, true)
                    : nostruct_loss(train_corpus, *doc, negs, params, cfg, rng, true);
            adam_step(params, res.grads, adam, lr);
            epoch_loss += res.loss;
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.train_loss = epoch_loss / static_cast<double>(order.size());
        row.dev_loss = mean_dev_loss(dev_corpus, dev_negs, params, cfg);
        row.dev_auc = mean_dev_auc(dev_corpus, params, cfg);
        row.lr = lr;
        result.log.push_back(row);

        // without a dev set there is nothing to select on; keep the latest
        const bool better = std::isnan(row.dev_loss) || row.dev_loss < result.checkpoint.dev_loss;
        if (better) {
            result.checkpoint.params = params;
            result.checkpoint.epoch = epoch;
            result.checkpoint.dev_loss = row.dev_loss;
        }
        if (!std::isnan(row.dev_loss)) lr = plateau_update(plateau, row.dev_loss, cfg);
    }
    return result;
}

}  // namespace docalign
