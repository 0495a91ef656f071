#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docalign/corpus.hpp"
#include "docalign/error.hpp"
#include "docalign/matrix.hpp"
#include "docalign/rng.hpp"

namespace docalign {

// Knobs for the synthetic corpus builder. Documents hold g true
// sentence-image pairs built from shared latent vectors, plus distractor
// sentences and images with latents of their own. topic_count > 0 draws all
// of a document's latents near one topic centroid, which makes items within
// a document look alike.
struct GeneratorProfile {
    std::size_t n_docs = 0;
    std::size_t n_true_pairs = 5;  // g
    std::size_t n_distractor_images = 0;
    std::size_t n_distractor_sentences = 0;
    std::size_t latent_dim = 64;
    double noise_sigma = 0.0;
    std::size_t topic_count = 0;
    std::uint64_t seed = 0;
    // split sizes; dev/test default to 10% of n_docs each
    std::optional<std::size_t> n_dev;
    std::optional<std::size_t> n_test;

    void validate() const {
        require(n_docs >= 1, Errc::config, "generator: n_docs must be >= 1");
        require(n_true_pairs >= 1, Errc::config, "generator: n_true_pairs must be >= 1");
        require(latent_dim >= 1, Errc::config, "generator: latent_dim must be >= 1");
        require(noise_sigma >= 0.0, Errc::config, "generator: noise_sigma must be >= 0");
    }

    std::size_t dev_count() const { return n_dev ? *n_dev : n_docs / 10; }
    std::size_t test_count() const { return n_test ? *n_test : n_docs / 10; }

    double density() const {
        const double g = static_cast<double>(n_true_pairs);
        return g / ((g + static_cast<double>(n_distractor_sentences)) *
                    (g + static_cast<double>(n_distractor_images)));
    }
};

struct SyntheticData {
    Corpus train, dev, test;
    std::shared_ptr<FeatureTable> sentence_features;
    std::shared_ptr<FeatureTable> image_features;
    Mat latent_map;  // the shared sentence-space -> image-space projection
};

namespace detail {

// Spread of latents around their topic centroid, relative to the unit-norm
// centroid. Large enough that items within a topic stay distinguishable.
constexpr double kTopicScatter = 1.0;

inline std::vector<double> gaussian_vec(std::size_t d, Rng& rng) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.gaussian();
    return v;
}

inline void normalize_in_place(std::vector<double>& v) {
    const double n = norm2(v);
    require(n > 1e-12, Errc::numeric, "generator: degenerate latent vector");
    for (auto& x : v) x /= n;
}

}  // namespace detail

// Deterministic per seed: the entire corpus triple is drawn from one
// xoshiro256** stream in a fixed order.
inline SyntheticData generate_synthetic(const GeneratorProfile& profile) {
    profile.validate();
    const std::size_t n_dev = profile.dev_count();
    const std::size_t n_test = profile.test_count();
    require(profile.n_docs > n_dev + n_test, Errc::config,
            "generator: split sizes leave no training documents");
    const std::size_t n_train = profile.n_docs - n_dev - n_test;

    const std::size_t d = profile.latent_dim;
    Rng rng(profile.seed);

    // fixed random linear map from sentence-latent space to image space
    Mat map(d, d);
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& x : map.data()) x = rng.gaussian() * map_scale;

    std::vector<std::vector<double>> topics;
    for (std::size_t t = 0; t < profile.topic_count; ++t) {
        auto c = detail::gaussian_vec(d, rng);
        detail::normalize_in_place(c);
        topics.push_back(std::move(c));
    }

    auto sentence_table = std::make_shared<FeatureTable>(d);
    auto image_table = std::make_shared<FeatureTable>(d);

    // per-component noise scale so that E||eps||^2 = noise_sigma^2
    const double noise_scale = profile.noise_sigma / std::sqrt(static_cast<double>(d));
    const double scatter_scale = detail::kTopicScatter / std::sqrt(static_cast<double>(d));

    auto draw_latent = [&](const std::vector<double>* topic) {
        std::vector<double> u(d);
        if (topic) {
            for (std::size_t i = 0; i < d; ++i)
                u[i] = (*topic)[i] + scatter_scale * rng.gaussian();
        } else {
            for (auto& x : u) x = rng.gaussian();
        }
        detail::normalize_in_place(u);
        return u;
    };

    auto make_document = [&](const std::string& doc_id) {
        const std::vector<double>* topic = nullptr;
        if (!topics.empty()) topic = &topics[rng.below(topics.size())];

        const std::size_t g = profile.n_true_pairs;
        const std::size_t ns = g + profile.n_distractor_sentences;
        const std::size_t nv = g + profile.n_distractor_images;

        std::vector<std::vector<double>> true_latents(g);
        for (auto& u : true_latents) u = draw_latent(topic);

        auto sentence_feat = [&](const std::vector<double>& u) {
            std::vector<double> f(d);
            for (std::size_t i = 0; i < d; ++i) f[i] = u[i] + noise_scale * rng.gaussian();
            detail::normalize_in_place(f);
            return f;
        };
        auto image_feat = [&](const std::vector<double>& u) {
            std::vector<double> f(d, 0.0);
            for (std::size_t r = 0; r < d; ++r) axpy(u[r], map.row(r), f.data(), d);
            for (std::size_t i = 0; i < d; ++i) f[i] += noise_scale * rng.gaussian();
            detail::normalize_in_place(f);
            return f;
        };

        std::vector<std::vector<double>> sent_feats(ns), img_feats(nv);
        for (std::size_t i = 0; i < g; ++i) sent_feats[i] = sentence_feat(true_latents[i]);
        for (std::size_t i = g; i < ns; ++i) sent_feats[i] = sentence_feat(draw_latent(topic));
        for (std::size_t i = 0; i < g; ++i) img_feats[i] = image_feat(true_latents[i]);
        for (std::size_t i = g; i < nv; ++i) img_feats[i] = image_feat(draw_latent(topic));

        // shuffle positions so gold edges are not a diagonal prefix
        std::vector<std::size_t> sperm(ns), vperm(nv);
        for (std::size_t i = 0; i < ns; ++i) sperm[i] = i;
        for (std::size_t i = 0; i < nv; ++i) vperm[i] = i;
        rng.shuffle(sperm);
        rng.shuffle(vperm);
        std::vector<std::size_t> spos(ns), vpos(nv);
        for (std::size_t i = 0; i < ns; ++i) spos[sperm[i]] = i;
        for (std::size_t i = 0; i < nv; ++i) vpos[vperm[i]] = i;

        Document doc;
        doc.id = doc_id;
        doc.sentences.resize(ns);
        doc.images.resize(nv);
        for (std::size_t i = 0; i < ns; ++i) {
            const std::string id = doc_id + "-s" + std::to_string(spos[i]);
            sentence_table->insert(id, std::move(sent_feats[i]));
            doc.sentences[spos[i]] = SentenceItem{id, std::nullopt, id};
        }
        for (std::size_t i = 0; i < nv; ++i) {
            const std::string id = doc_id + "-v" + std::to_string(vpos[i]);
            image_table->insert(id, std::move(img_feats[i]));
            doc.images[vpos[i]] = ImageItem{id, id};
        }
        std::vector<GoldEdge> gold;
        for (std::size_t p = 0; p < g; ++p) gold.emplace_back(spos[p], vpos[p]);
        std::sort(gold.begin(), gold.end());
        doc.gold = std::move(gold);
        return doc;
    };

    SyntheticData out;
    out.sentence_features = sentence_table;
    out.image_features = image_table;
    out.latent_map = map;
    auto fill_split = [&](Corpus& corpus, const std::string& split, std::size_t count) {
        corpus.split = split;
        corpus.sentence_features = sentence_table;
        corpus.image_features = image_table;
        for (std::size_t i = 0; i < count; ++i)
            corpus.documents.push_back(make_document(split + "-" + std::to_string(i)));
    };
    fill_split(out.train, "train", n_train);
    fill_split(out.dev, "dev", n_dev);
    fill_split(out.test, "test", n_test);
    return out;
}

inline nlohmann::json profile_to_json(const GeneratorProfile& p) {
    nlohmann::json j{{"n_docs", p.n_docs},
                     {"n_true_pairs", p.n_true_pairs},
                     {"n_distractor_images", p.n_distractor_images},
                     {"n_distractor_sentences", p.n_distractor_sentences},
                     {"latent_dim", p.latent_dim},
                     {"noise_sigma", p.noise_sigma},
                     {"topic_count", p.topic_count},
                     {"seed", p.seed}};
    if (p.n_dev) j["n_dev"] = *p.n_dev;
    if (p.n_test) j["n_test"] = *p.n_test;
    return j;
}

inline GeneratorProfile profile_from_json(const nlohmann::json& j) {
    GeneratorProfile p;
    try {
        p.n_docs = j.at("n_docs").get<std::size_t>();
        if (j.contains("n_true_pairs")) p.n_true_pairs = j["n_true_pairs"].get<std::size_t>();
        if (j.contains("n_distractor_images"))
            p.n_distractor_images = j["n_distractor_images"].get<std::size_t>();
        if (j.contains("n_distractor_sentences"))
            p.n_distractor_sentences = j["n_distractor_sentences"].get<std::size_t>();
        if (j.contains("latent_dim")) p.latent_dim = j["latent_dim"].get<std::size_t>();
        if (j.contains("noise_sigma")) p.noise_sigma = j["noise_sigma"].get<double>();
        if (j.contains("topic_count")) p.topic_count = j["topic_count"].get<std::size_t>();
        if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("n_dev")) p.n_dev = j["n_dev"].get<std::size_t>();
        if (j.contains("n_test")) p.n_test = j["n_test"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::config, std::string("generator profile: ") + e.what());
    }
    return p;
}

// Writes train/dev/test corpora, the two feature tables, and a manifest
// echoing the profile, the seed, and the achieved density.
inline void write_generated(const SyntheticData& data, const GeneratorProfile& profile,
                            const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_corpus(data.train, out_dir / "train.jsonl");
    save_corpus(data.dev, out_dir / "dev.jsonl");
    save_corpus(data.test, out_dir / "test.jsonl");
    save_feature_table(*data.sentence_features, out_dir / "sentence_features.txt");
    save_feature_table(*data.image_features, out_dir / "image_features.txt");

    nlohmann::json manifest{
        {"profile", profile_to_json(profile)},
        {"density", profile.density()},
        {"split_sizes",
         {{"train", data.train.documents.size()},
          {"dev", data.dev.documents.size()},
          {"test", data.test.documents.size()}}},
        {"files",
         {{"train", "train.jsonl"},
          {"dev", "dev.jsonl"},
          {"test", "test.jsonl"},
          {"sentence_features", "sentence_features.txt"},
          {"image_features", "image_features.txt"}}}};
    std::ofstream out(out_dir / "manifest.json");
    require(out.good(), Errc::io, "cannot write manifest");
    out << manifest.dump(2) << '\n';
}

}  // namespace docalign
