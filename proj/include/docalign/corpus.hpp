#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "docalign/error.hpp"
#include "docalign/rng.hpp"

namespace docalign {

// Id -> vector table with a fixed dimension. Insertion order is preserved so
// that serialization is deterministic.
class FeatureTable {
public:
    FeatureTable() = default;
    explicit FeatureTable(std::size_t dim) : dim_(dim) {
        require(dim >= 1, Errc::validation, "feature table: dim must be positive");
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return rows_.size(); }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const std::vector<double>& at(const std::string& id) const {
        auto it = index_.find(id);
        require(it != index_.end(), Errc::validation, "feature table: unknown id '" + id + "'");
        return rows_[it->second].second;
    }

    void insert(const std::string& id, std::vector<double> vec) {
        require(dim_ >= 1, Errc::validation, "feature table: dim not set");
        require(vec.size() == dim_, Errc::validation,
                "feature table: dimension mismatch for id '" + id + "'");
        require(id.find_first_of(" \t\r\n") == std::string::npos && !id.empty(),
                Errc::validation, "feature table: id must be a whitespace-free token");
        for (double v : vec)
            require(std::isfinite(v), Errc::validation,
                    "feature table: non-finite value for id '" + id + "'");
        auto [it, fresh] = index_.emplace(id, rows_.size());
        require(fresh, Errc::validation, "feature table: duplicate id '" + id + "'");
        rows_.emplace_back(id, std::move(vec));
    }

    const std::vector<std::pair<std::string, std::vector<double>>>& rows() const {
        return rows_;
    }

    bool operator==(const FeatureTable& other) const {
        return dim_ == other.dim_ && rows_ == other.rows_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::pair<std::string, std::vector<double>>> rows_;
    std::unordered_map<std::string, std::size_t> index_;
};

using EmbeddingTable = FeatureTable;

struct SentenceItem {
    std::string id;
    std::optional<std::vector<std::string>> tokens;
    std::optional<std::string> feat;

    bool operator==(const SentenceItem&) const = default;
};

struct ImageItem {
    std::string id;
    std::string feat;

    bool operator==(const ImageItem&) const = default;
};

using GoldEdge = std::pair<std::size_t, std::size_t>;  // (sentence idx, image idx)

struct Document {
    std::string id;
    std::vector<SentenceItem> sentences;
    std::vector<ImageItem> images;
    std::optional<std::vector<GoldEdge>> gold;

    std::size_t n_sentences() const noexcept { return sentences.size(); }
    std::size_t n_images() const noexcept { return images.size(); }

    bool operator==(const Document&) const = default;
};

struct Corpus {
    std::vector<Document> documents;
    std::string split;  // "train", "dev", "test" or empty
    std::shared_ptr<const FeatureTable> sentence_features;
    std::shared_ptr<const FeatureTable> image_features;
    std::shared_ptr<const EmbeddingTable> embeddings;
};

namespace detail {

inline double parse_double_token(std::string_view tok, const std::string& context) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    require(ec == std::errc() && ptr == tok.data() + tok.size(), Errc::parse,
            context + ": bad float '" + std::string(tok) + "'");
    require(std::isfinite(value), Errc::parse, context + ": non-finite value");
    return value;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Text format: header "<count> <dim>", then one "<id> <v1> ... <vdim>" line
// per entry, space-delimited.
inline FeatureTable load_feature_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open feature table: " + path.string());

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::parse,
            "feature table: missing header");
    auto head = detail::split_ws(line);
    require(head.size() == 2, Errc::parse, "feature table: malformed header");

    auto parse_count = [&](std::string_view tok) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        require(ec == std::errc() && ptr == tok.data() + tok.size(), Errc::parse,
                "feature table: malformed header");
        return v;
    };
    const std::size_t count = parse_count(head[0]);
    const std::size_t dim = parse_count(head[1]);
    require(dim >= 1, Errc::parse, "feature table: dim must be positive");

    FeatureTable table(dim);
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        require(toks.size() == dim + 1, Errc::parse,
                "feature table: dimension mismatch on row for id '" + std::string(toks[0]) +
                    "'");
        std::vector<double> vec(dim);
        for (std::size_t i = 0; i < dim; ++i)
            vec[i] = detail::parse_double_token(toks[i + 1], "feature table");
        table.insert(std::string(toks[0]), std::move(vec));
        ++seen;
    }
    require(seen == count, Errc::parse, "feature table: CountMismatch (header says " +
                                            std::to_string(count) + ", found " +
                                            std::to_string(seen) + ")");
    return table;
}

inline void save_feature_table(const FeatureTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), Errc::io, "cannot write feature table: " + path.string());
    out << table.size() << ' ' << table.dim() << '\n';
    for (const auto& [id, vec] : table.rows()) {
        out << id;
        for (double v : vec) out << ' ' << detail::format_double(v);
        out << '\n';
    }
    require(out.good(), Errc::io, "write failed: " + path.string());
}

struct SentenceEmbedding {
    std::vector<double> vec;
    bool out_of_vocab = false;  // true when no token was in the table
};

// Mean embedding of the first max_len in-vocabulary tokens. Fully
// out-of-vocabulary sentences map to the zero vector with the flag set.
inline SentenceEmbedding embed_sentence_mean(const std::vector<std::string>& tokens,
                                             const EmbeddingTable& table,
                                             std::size_t max_len = 20) {
    require(max_len >= 1, Errc::validation, "embed_sentence_mean: max_len must be >= 1");
    SentenceEmbedding out;
    out.vec.assign(table.dim(), 0.0);
    std::size_t hits = 0;
    for (const auto& tok : tokens) {
        if (hits == max_len) break;
        if (!table.contains(tok)) continue;
        const auto& e = table.at(tok);
        for (std::size_t i = 0; i < e.size(); ++i) out.vec[i] += e[i];
        ++hits;
    }
    if (hits == 0) {
        out.out_of_vocab = true;
        return out;
    }
    for (double& v : out.vec) v /= static_cast<double>(hits);
    return out;
}

namespace detail {

inline void validate_document(const Document& doc, const Corpus& corpus) {
    require(!doc.sentences.empty(), Errc::validation,
            "document '" + doc.id + "': empty sentence list");
    require(!doc.images.empty(), Errc::validation, "document '" + doc.id + "': empty image list");
    for (const auto& s : doc.sentences) {
        require(s.tokens.has_value() || s.feat.has_value(), Errc::validation,
                "document '" + doc.id + "': sentence '" + s.id + "' has neither tokens nor feat");
        if (s.feat && corpus.sentence_features)
            require(corpus.sentence_features->contains(*s.feat), Errc::validation,
                    "document '" + doc.id + "': unresolvable sentence feature '" + *s.feat + "'");
    }
    for (const auto& v : doc.images) {
        if (corpus.image_features)
            require(corpus.image_features->contains(v.feat), Errc::validation,
                    "document '" + doc.id + "': unresolvable image feature '" + v.feat + "'");
    }
    if (doc.gold) {
        std::vector<GoldEdge> seen;
        for (const auto& [s, v] : *doc.gold) {
            require(s < doc.sentences.size() && v < doc.images.size(), Errc::validation,
                    "document '" + doc.id + "': GoldIndexOutOfRange");
            for (const auto& e : seen)
                require(e != GoldEdge{s, v}, Errc::validation,
                        "document '" + doc.id + "': duplicate gold pair");
            seen.emplace_back(s, v);
        }
    }
}

}  // namespace detail

// JSONL, one document per line: {"id", "sentences": [{"id", "tokens"?,
// "feat"?}], "images": [{"id", "feat"}], "gold"?: [[s, v], ...]}.
inline Corpus load_corpus(const std::filesystem::path& path,
                          std::shared_ptr<const FeatureTable> sentence_features,
                          std::shared_ptr<const FeatureTable> image_features,
                          std::shared_ptr<const EmbeddingTable> embeddings = nullptr,
                          std::string split = "") {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open corpus: " + path.string());

    Corpus corpus;
    corpus.split = std::move(split);
    corpus.sentence_features = std::move(sentence_features);
    corpus.image_features = std::move(image_features);
    corpus.embeddings = std::move(embeddings);

    std::unordered_map<std::string, bool> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::parse, "corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        try {
            Document doc;
            doc.id = j.at("id").get<std::string>();
            for (const auto& js : j.at("sentences")) {
                SentenceItem s;
                s.id = js.at("id").get<std::string>();
                if (js.contains("tokens")) s.tokens = js["tokens"].get<std::vector<std::string>>();
                if (js.contains("feat")) s.feat = js["feat"].get<std::string>();
                doc.sentences.push_back(std::move(s));
            }
            for (const auto& jv : j.at("images")) {
                doc.images.push_back({jv.at("id").get<std::string>(),
                                      jv.at("feat").get<std::string>()});
            }
            if (j.contains("gold")) {
                std::vector<GoldEdge> gold;
                for (const auto& je : j["gold"]) {
                    require(je.is_array() && je.size() == 2, Errc::parse,
                            "corpus line " + std::to_string(lineno) + ": bad gold entry");
                    const auto a = je[0].get<long long>(), b = je[1].get<long long>();
                    require(a >= 0 && b >= 0, Errc::validation,
                            "document '" + doc.id + "': GoldIndexOutOfRange");
                    gold.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
                }
                doc.gold = std::move(gold);
            }
            detail::validate_document(doc, corpus);
            require(!ids.count(doc.id), Errc::validation, "duplicate document id '" + doc.id + "'");
            ids[doc.id] = true;
            corpus.documents.push_back(std::move(doc));
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::parse, "corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return corpus;
}

inline nlohmann::json document_to_json(const Document& doc) {
    nlohmann::json j;
    j["id"] = doc.id;
    j["sentences"] = nlohmann::json::array();
    for (const auto& s : doc.sentences) {
        nlohmann::json js{{"id", s.id}};
        if (s.tokens) js["tokens"] = *s.tokens;
        if (s.feat) js["feat"] = *s.feat;
        j["sentences"].push_back(std::move(js));
    }
    j["images"] = nlohmann::json::array();
    for (const auto& v : doc.images) j["images"].push_back({{"id", v.id}, {"feat", v.feat}});
    if (doc.gold) {
        auto edges = nlohmann::json::array();
        for (const auto& [s, v] : *doc.gold) edges.push_back({s, v});
        j["gold"] = std::move(edges);
    }
    return j;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), Errc::io, "cannot write corpus: " + path.string());
    for (const auto& doc : corpus.documents) out << document_to_json(doc).dump() << '\n';
    require(out.good(), Errc::io, "write failed: " + path.string());
}

// Keeps a uniform subset of at most max_items per side, order preserved.
// Gold edges are re-indexed; edges with a removed endpoint are dropped.
inline Document subsample_document(const Document& doc, std::size_t max_items, Rng& rng) {
    require(max_items >= 1, Errc::validation, "subsample: max_items must be >= 1");

    auto pick_keep = [&](std::size_t count) {
        std::vector<std::size_t> keep;
        if (count <= max_items) {
            keep.resize(count);
            for (std::size_t i = 0; i < count; ++i) keep[i] = i;
        } else {
            keep = rng.sample_indices(count, max_items);
            std::sort(keep.begin(), keep.end());
        }
        return keep;
    };

    const auto keep_s = pick_keep(doc.sentences.size());
    const auto keep_v = pick_keep(doc.images.size());

    Document out;
    out.id = doc.id;
    std::vector<long long> smap(doc.sentences.size(), -1), vmap(doc.images.size(), -1);
    for (std::size_t i = 0; i < keep_s.size(); ++i) {
        smap[keep_s[i]] = static_cast<long long>(i);
        out.sentences.push_back(doc.sentences[keep_s[i]]);
    }
    for (std::size_t i = 0; i < keep_v.size(); ++i) {
        vmap[keep_v[i]] = static_cast<long long>(i);
        out.images.push_back(doc.images[keep_v[i]]);
    }
    if (doc.gold) {
        std::vector<GoldEdge> gold;
        for (const auto& [s, v] : *doc.gold)
            if (smap[s] >= 0 && vmap[v] >= 0)
                gold.emplace_back(static_cast<std::size_t>(smap[s]),
                                  static_cast<std::size_t>(vmap[v]));
        out.gold = std::move(gold);
    }
    return out;
}

}  // namespace docalign
