#pragma once

#include <string>
#include <vector>

#include "docalign/corpus.hpp"
#include "docalign/error.hpp"

namespace docalign {

// How raw sentence vectors are produced before the trainable projection:
// either looked up from a precomputed feature table or mean-pooled from a
// frozen word-embedding table.
enum class TextEncoderKind { feat, mean_embed };

inline TextEncoderKind text_encoder_from_string(const std::string& s) {
    if (s == "feat") return TextEncoderKind::feat;
    if (s == "mean_embed") return TextEncoderKind::mean_embed;
    fail(Errc::config, "unknown text encoder '" + s + "'");
}

inline std::string to_string(TextEncoderKind k) {
    return k == TextEncoderKind::feat ? "feat" : "mean_embed";
}

inline std::vector<std::vector<double>> sentence_feature_vectors(const Document& doc,
                                                                 const Corpus& corpus,
                                                                 TextEncoderKind kind,
                                                                 std::size_t max_tokens) {
    std::vector<std::vector<double>> out;
    out.reserve(doc.sentences.size());
    if (kind == TextEncoderKind::feat) {
        require(corpus.sentence_features != nullptr, Errc::config,
                "sentence feature table required for text encoder 'feat'");
        for (const auto& s : doc.sentences) {
            require(s.feat.has_value(), Errc::validation,
                    "document '" + doc.id + "': sentence '" + s.id + "' has no feature id");
            out.push_back(corpus.sentence_features->at(*s.feat));
        }
    } else {
        require(corpus.embeddings != nullptr, Errc::config,
                "embedding table required for text encoder 'mean_embed'");
        for (const auto& s : doc.sentences) {
            require(s.tokens.has_value(), Errc::validation,
                    "document '" + doc.id + "': sentence '" + s.id + "' has no tokens");
            out.push_back(embed_sentence_mean(*s.tokens, *corpus.embeddings, max_tokens).vec);
        }
    }
    return out;
}

inline std::vector<std::vector<double>> image_feature_vectors(const Document& doc,
                                                              const Corpus& corpus) {
    require(corpus.image_features != nullptr, Errc::config, "image feature table required");
    std::vector<std::vector<double>> out;
    out.reserve(doc.images.size());
    for (const auto& v : doc.images) out.push_back(corpus.image_features->at(v.feat));
    return out;
}

}  // namespace docalign
