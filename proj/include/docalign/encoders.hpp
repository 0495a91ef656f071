#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "docalign/error.hpp"
#include "docalign/matrix.hpp"
#include "docalign/rng.hpp"

namespace docalign {

enum class Side { sentence, image };

// Per-modality affine projections into the shared space. Outputs are
// L2-normalized, so downstream similarity is plain dot products.
struct EncoderParams {
    std::size_t d_multi = 0;
    Mat W_s;                   // D_s x d_multi
    std::vector<double> b_s;   // d_multi
    Mat W_v;                   // D_v x d_multi
    std::vector<double> b_v;   // d_multi

    std::size_t input_dim(Side side) const {
        return side == Side::sentence ? W_s.rows() : W_v.rows();
    }
    const Mat& W(Side side) const { return side == Side::sentence ? W_s : W_v; }
    const std::vector<double>& b(Side side) const {
        return side == Side::sentence ? b_s : b_v;
    }
};

// Glorot-uniform weights, zero biases. Sentence side is drawn first, so the
// layout of the random stream is part of the determinism contract.
inline EncoderParams init_params(std::size_t d_sentence, std::size_t d_image,
                                 std::size_t d_multi, Rng& rng) {
    require(d_sentence >= 1 && d_image >= 1 && d_multi >= 1, Errc::validation,
            "init_params: dimensions must be positive");
    EncoderParams p;
    p.d_multi = d_multi;
    p.W_s = Mat(d_sentence, d_multi);
    p.W_v = Mat(d_image, d_multi);
    p.b_s.assign(d_multi, 0.0);
    p.b_v.assign(d_multi, 0.0);
    const double lim_s = std::sqrt(6.0 / static_cast<double>(d_sentence + d_multi));
    const double lim_v = std::sqrt(6.0 / static_cast<double>(d_image + d_multi));
    for (auto& w : p.W_s.data()) w = rng.uniform(-lim_s, lim_s);
    for (auto& w : p.W_v.data()) w = rng.uniform(-lim_v, lim_v);
    return p;
}

inline std::vector<double> l2_normalize(const std::vector<double>& v) {
    const double n = norm2(v);
    require(n > 1e-12, Errc::numeric, "l2_normalize: near-zero input norm");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

// Gradient through y = v / ||v|| given the unit output and ||v||:
// dv = (g - (g . y) y) / ||v||.
inline std::vector<double> l2_normalize_backward(const std::vector<double>& unit, double norm,
                                                 const std::vector<double>& upstream) {
    const double proj = dot(upstream, unit);
    std::vector<double> out(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) out[i] = (upstream[i] - proj * unit[i]) / norm;
    return out;
}

// Everything backward() needs about one forward call: post-dropout inputs,
// the sampled masks (empty in eval mode), unit outputs and pre-norm norms.
struct ForwardCache {
    Side side = Side::sentence;
    double keep_prob = 1.0;
    std::vector<std::vector<double>> inputs;  // after dropout scaling
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<std::vector<double>> outputs;  // unit vectors
    std::vector<double> norms;
};

// out_i = l2_normalize(W^T drop(x_i) + b). Inverted dropout on the inputs,
// active only in train mode.
inline std::pair<std::vector<std::vector<double>>, ForwardCache> encode(
    const std::vector<std::vector<double>>& features, Side side, const EncoderParams& params,
    bool train_mode, double dropout_p, Rng& rng) {
    require(dropout_p >= 0.0 && dropout_p < 1.0, Errc::validation, "encode: bad dropout p");
    const Mat& W = params.W(side);
    const auto& b = params.b(side);
    const std::size_t d_in = W.rows(), d_out = params.d_multi;

    ForwardCache cache;
    cache.side = side;
    cache.keep_prob = 1.0 - dropout_p;
    std::vector<std::vector<double>> outputs;
    outputs.reserve(features.size());

    const bool drop = train_mode && dropout_p > 0.0;
    for (const auto& x : features) {
        require(x.size() == d_in, Errc::validation, "encode: feature dimension mismatch");
        std::vector<double> xd = x;
        if (drop) {
            std::vector<std::uint8_t> mask(d_in);
            for (std::size_t i = 0; i < d_in; ++i) {
                mask[i] = rng.uniform() >= dropout_p ? 1 : 0;
                xd[i] = mask[i] ? xd[i] / cache.keep_prob : 0.0;
            }
            cache.masks.push_back(std::move(mask));
        }
        std::vector<double> y = b;
        for (std::size_t i = 0; i < d_in; ++i)
            if (xd[i] != 0.0) axpy(xd[i], W.row(i), y.data(), d_out);
        const double n = norm2(y);
        require(n > 1e-12, Errc::numeric, "encode: near-zero pre-normalization norm");
        std::vector<double> out(d_out);
        for (std::size_t i = 0; i < d_out; ++i) out[i] = y[i] / n;
        cache.inputs.push_back(std::move(xd));
        cache.norms.push_back(n);
        cache.outputs.push_back(out);
        outputs.push_back(std::move(out));
    }
    return {std::move(outputs), std::move(cache)};
}

struct ParamGrads {
    Mat gW_s;
    std::vector<double> gb_s;
    Mat gW_v;
    std::vector<double> gb_v;

    explicit ParamGrads(const EncoderParams& p)
        : gW_s(p.W_s.rows(), p.W_s.cols()),
          gb_s(p.d_multi, 0.0),
          gW_v(p.W_v.rows(), p.W_v.cols()),
          gb_v(p.d_multi, 0.0) {}

    Mat& gW(Side side) { return side == Side::sentence ? gW_s : gW_v; }
    std::vector<double>& gb(Side side) { return side == Side::sentence ? gb_s : gb_v; }

    bool all_finite() const {
        auto ok = [](const std::vector<double>& v) {
            for (double x : v)
                if (!std::isfinite(x)) return false;
            return true;
        };
        return gW_s.all_finite() && gW_v.all_finite() && ok(gb_s) && ok(gb_v);
    }
};

// Accumulates exact parameter gradients for one forward call. When
// input_grads is given, gradients w.r.t. the raw features (through the
// dropout masks) are written there as well.
inline void encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                             const std::vector<std::vector<double>>& upstream,
                             ParamGrads& grads,
                             std::vector<std::vector<double>>* input_grads = nullptr) {
    require(upstream.size() == cache.outputs.size(), Errc::validation,
            "encoder_backward: cache/upstream mismatch");
    const Mat& W = params.W(cache.side);
    Mat& gW = grads.gW(cache.side);
    auto& gb = grads.gb(cache.side);
    const std::size_t d_in = W.rows(), d_out = params.d_multi;

    for (std::size_t item = 0; item < upstream.size(); ++item) {
        require(upstream[item].size() == d_out, Errc::validation,
                "encoder_backward: upstream dimension mismatch");
        const auto gy =
            l2_normalize_backward(cache.outputs[item], cache.norms[item], upstream[item]);
        const auto& xd = cache.inputs[item];
        for (std::size_t i = 0; i < d_in; ++i)
            if (xd[i] != 0.0) axpy(xd[i], gy.data(), gW.row(i), d_out);
        axpy(1.0, gy.data(), gb.data(), d_out);
        if (input_grads) {
            std::vector<double> gx(d_in, 0.0);
            const bool dropped = !cache.masks.empty();
            for (std::size_t i = 0; i < d_in; ++i) {
                if (dropped && !cache.masks[item][i]) continue;
                gx[i] = dot(W.row(i), gy.data(), d_out) / (dropped ? cache.keep_prob : 1.0);
            }
            (*input_grads)[item] = std::move(gx);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint file: JSON with the projection matrices (row-major), the
// training config echo, the epoch and the dev loss that selected it.

struct Checkpoint {
    EncoderParams params;
    nlohmann::json config;
    std::size_t epoch = 0;
    double dev_loss = 0.0;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
    const auto& p = ckpt.params;
    return nlohmann::json{{"d_multi", p.d_multi},
                          {"D_s", p.W_s.rows()},
                          {"D_v", p.W_v.rows()},
                          {"W_s", p.W_s.data()},
                          {"b_s", p.b_s},
                          {"W_v", p.W_v.data()},
                          {"b_v", p.b_v},
                          {"config", ckpt.config},
                          {"epoch", ckpt.epoch},
                          {"dev_loss", ckpt.dev_loss}};
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), Errc::io, "cannot write checkpoint: " + path.string());
    out << checkpoint_to_json(ckpt).dump(2) << '\n';
    require(out.good(), Errc::io, "write failed: " + path.string());
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    Checkpoint ckpt;
    try {
        auto& p = ckpt.params;
        p.d_multi = j.at("d_multi").get<std::size_t>();
        const auto ds = j.at("D_s").get<std::size_t>();
        const auto dv = j.at("D_v").get<std::size_t>();
        p.W_s = Mat(ds, p.d_multi);
        p.W_s.data() = j.at("W_s").get<std::vector<double>>();
        p.W_v = Mat(dv, p.d_multi);
        p.W_v.data() = j.at("W_v").get<std::vector<double>>();
        p.b_s = j.at("b_s").get<std::vector<double>>();
        p.b_v = j.at("b_v").get<std::vector<double>>();
        require(p.W_s.data().size() == ds * p.d_multi && p.W_v.data().size() == dv * p.d_multi &&
                    p.b_s.size() == p.d_multi && p.b_v.size() == p.d_multi,
                Errc::parse, "checkpoint: inconsistent shapes");
        ckpt.config = j.value("config", nlohmann::json::object());
        ckpt.epoch = j.value("epoch", std::size_t{0});
        ckpt.dev_loss = j.value("dev_loss", 0.0);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, std::string("checkpoint: ") + e.what());
    }
    return ckpt;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io, "cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse, std::string("checkpoint: ") + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace docalign
