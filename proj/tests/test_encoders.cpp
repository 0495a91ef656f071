#include <catch_amalgamated.hpp>

#include "docalign/encoders.hpp"
#include "docalign/simfn.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using docalign::encode;
using docalign::encoder_backward;
using docalign::EncoderParams;
using docalign::ForwardCache;
using docalign::init_params;
using docalign::KPolicy;
using docalign::KPolicyKind;
using docalign::l2_normalize;
using docalign::l2_normalize_backward;
using docalign::Mat;
using docalign::ParamGrads;
using docalign::Rng;
using docalign::Side;

namespace {

std::vector<double> random_vec(std::size_t d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

std::vector<std::vector<double>> random_vecs(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_vec(d, rng));
    return out;
}

EncoderParams random_params(std::size_t ds, std::size_t dv, std::size_t dm, Rng& rng) {
    EncoderParams p = init_params(ds, dv, dm, rng);
    // biases nonzero so their gradients are exercised
    for (auto& b : p.b_s) b = 0.1 * rng.uniform(-1.0, 1.0);
    for (auto& b : p.b_v) b = 0.1 * rng.uniform(-1.0, 1.0);
    return p;
}

double* param_entry(EncoderParams& p, std::size_t flat) {
    if (flat < p.W_s.size()) return &p.W_s.data()[flat];
    flat -= p.W_s.size();
    if (flat < p.b_s.size()) return &p.b_s[flat];
    flat -= p.b_s.size();
    if (flat < p.W_v.size()) return &p.W_v.data()[flat];
    flat -= p.W_v.size();
    return &p.b_v[flat];
}

double grad_entry(const ParamGrads& g, std::size_t flat) {
    if (flat < g.gW_s.size()) return g.gW_s.data()[flat];
    flat -= g.gW_s.size();
    if (flat < g.gb_s.size()) return g.gb_s[flat];
    flat -= g.gb_s.size();
    if (flat < g.gW_v.size()) return g.gW_v.data()[flat];
    flat -= g.gW_v.size();
    return g.gb_v[flat];
}

std::size_t param_count(const EncoderParams& p) {
    return p.W_s.size() + p.b_s.size() + p.W_v.size() + p.b_v.size();
}

}  // namespace

TEST_CASE("init is deterministic with zero biases and Glorot variance") {
    Rng a(42), b(42);
    const auto p1 = init_params(30, 40, 50, a);
    const auto p2 = init_params(30, 40, 50, b);
    REQUIRE(p1.W_s.data() == p2.W_s.data());
    REQUIRE(p1.W_v.data() == p2.W_v.data());
    for (double x : p1.b_s) REQUIRE(x == 0.0);
    for (double x : p1.b_v) REQUIRE(x == 0.0);

    Rng big(7);
    const std::size_t ds = 1000, dm = 1000;  // 10^6 draws on the sentence side
    EncoderParams wide = init_params(ds, 10, dm, big);
    double sq = 0.0;
    for (double w : wide.W_s.data()) sq += w * w;
    const double var = sq / static_cast<double>(wide.W_s.size());
    REQUIRE(var == Catch::Approx(2.0 / (ds + dm)).epsilon(0.10));
}

TEST_CASE("l2_normalize basics") {
    REQUIRE(l2_normalize({3.0, 4.0}) == std::vector<double>{0.6, 0.8});
    const std::vector<double> u{1.0, 0.0};
    REQUIRE(l2_normalize(u) == u);
    REQUIRE_THROWS_AS(l2_normalize({0.0, 0.0}), docalign::Error);
}

TEST_CASE("l2_normalize backward matches finite differences") {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        auto v = random_vec(6, rng);
        if (docalign::norm2(v) < 0.3) continue;
        const auto upstream = random_vec(6, rng);
        const auto unit = l2_normalize(v);
        const auto grad = l2_normalize_backward(unit, docalign::norm2(v), upstream);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double fd = oracles::central_diff(
                [&](double x) {
                    auto w = v;
                    w[i] = x;
                    return docalign::dot(l2_normalize(w), upstream);
                },
                v[i], 1e-6);
            REQUIRE(oracles::rel_err(fd, grad[i]) < 1e-7);
        }
    }
}

TEST_CASE("identity projection passes unit inputs through in eval mode") {
    EncoderParams p;
    p.d_multi = 2;
    p.W_s = Mat(2, 2);
    p.W_s(0, 0) = p.W_s(1, 1) = 1.0;
    p.W_v = p.W_s;
    p.b_s = {0.0, 0.0};
    p.b_v = {0.0, 0.0};
    Rng rng(1);
    const std::vector<std::vector<double>> in{{0.6, 0.8}};
    auto [out, cache] = encode(in, Side::sentence, p, false, 0.0, rng);
    REQUIRE(out[0][0] == Catch::Approx(0.6).margin(1e-15));
    REQUIRE(out[0][1] == Catch::Approx(0.8).margin(1e-15));
}

TEST_CASE("train mode with p=0 equals eval mode") {
    Rng rng(3);
    const auto p = random_params(5, 5, 4, rng);
    const auto feats = random_vecs(3, 5, rng);
    Rng r1(9), r2(10);
    auto [a, ca] = encode(feats, Side::sentence, p, true, 0.0, r1);
    auto [b, cb] = encode(feats, Side::sentence, p, false, 0.4, r2);
    REQUIRE(a == b);
}

TEST_CASE("encoded outputs are unit vectors") {
    Rng rng(4);
    const auto p = random_params(6, 6, 5, rng);
    const auto feats = random_vecs(4, 6, rng);
    auto [out, cache] = encode(feats, Side::image, p, false, 0.0, rng);
    for (const auto& v : out) REQUIRE(std::abs(docalign::norm2(v) - 1.0) < 1e-9);
}

TEST_CASE("backward matches finite differences through a dot-product head") {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        auto p = random_params(4, 4, 3, rng);
        const auto feats = random_vecs(2, 4, rng);
        const auto head = random_vecs(2, 3, rng);  // fixed readout vectors

        auto loss_of = [&](EncoderParams& params) {
            Rng unused(0);
            auto [out, cache] = encode(feats, Side::sentence, params, false, 0.0, unused);
            double loss = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) loss += docalign::dot(out[i], head[i]);
            return loss;
        };

        Rng unused(0);
        auto [out, cache] = encode(feats, Side::sentence, p, false, 0.0, unused);
        ParamGrads grads(p);
        encoder_backward(p, cache, head, grads);

        for (int probe = 0; probe < 25; ++probe) {
            const std::size_t flat = rng.below(param_count(p));
            double* w = param_entry(p, flat);
            const double keep = *w;
            const double fd = oracles::central_diff(
                [&](double x) {
                    *w = x;
                    const double value = loss_of(p);
                    *w = keep;
                    return value;
                },
                keep, 1e-5);
            REQUIRE(oracles::rel_err(fd, grad_entry(grads, flat)) < 1e-5);
        }
    }
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    Rng rng(6);
    const auto p = random_params(4, 4, 3, rng);
    const auto feats = random_vecs(2, 4, rng);
    auto [out, cache] = encode(feats, Side::image, p, false, 0.0, rng);
    ParamGrads grads(p);
    encoder_backward(p, cache, {{0, 0, 0}, {0, 0, 0}}, grads);
    for (double g : grads.gW_v.data()) REQUIRE(g == 0.0);
    for (double g : grads.gb_v) REQUIRE(g == 0.0);
}

TEST_CASE("dropout masks are sampled in forward and reused in backward") {
    Rng rng(7);
    const auto p = random_params(8, 8, 4, rng);
    const auto feats = random_vecs(3, 8, rng);
    Rng drop_rng(123);
    auto [out, cache] = encode(feats, Side::sentence, p, true, 0.5, drop_rng);
    REQUIRE(cache.masks.size() == 3);

    // the cached inputs are exactly mask * x / keep
    for (std::size_t i = 0; i < feats.size(); ++i)
        for (std::size_t d = 0; d < feats[i].size(); ++d) {
            const double expect = cache.masks[i][d] ? feats[i][d] / cache.keep_prob : 0.0;
            REQUIRE(cache.inputs[i][d] == expect);
        }

    // input gradients vanish exactly where the forward mask dropped
    ParamGrads grads(p);
    std::vector<std::vector<double>> input_grads(3, std::vector<double>(8, 0.0));
    const auto upstream = random_vecs(3, 4, rng);
    encoder_backward(p, cache, upstream, grads, &input_grads);
    for (std::size_t i = 0; i < feats.size(); ++i)
        for (std::size_t d = 0; d < 8; ++d)
            if (!cache.masks[i][d]) REQUIRE(input_grads[i][d] == 0.0);
}

TEST_CASE("full pipeline gradients match finite differences for every simfn") {
    Rng rng(99);
    const KPolicy half{KPolicyKind::half_min};
    std::vector<std::function<docalign::SimValue(const Mat&)>> sims = {
        [](const Mat& m) { return docalign::sim_dc(m); },
        [&](const Mat& m) { return docalign::sim_tk(m, half); },
        [](const Mat& m) { return docalign::sim_ap(m); },
    };

    for (auto& sim : sims) {
        auto p = random_params(5, 6, 4, rng);
        const auto sents = random_vecs(3, 5, rng);
        const auto imgs = random_vecs(4, 6, rng);

        auto loss_of = [&](EncoderParams& params) {
            Rng unused(0);
            auto [es, cs] = encode(sents, Side::sentence, params, false, 0.0, unused);
            auto [ev, cv] = encode(imgs, Side::image, params, false, 0.0, unused);
            return sim(docalign::cosine_matrix(es, ev)).value;
        };

        Rng unused(0);
        auto [es, cs] = encode(sents, Side::sentence, p, false, 0.0, unused);
        auto [ev, cv] = encode(imgs, Side::image, p, false, 0.0, unused);
        const auto sv = sim(docalign::cosine_matrix(es, ev));

        // dL/d(encoded vectors) from the matrix subgradient
        std::vector<std::vector<double>> ges(es.size(), std::vector<double>(4, 0.0));
        std::vector<std::vector<double>> gev(ev.size(), std::vector<double>(4, 0.0));
        for (std::size_t i = 0; i < es.size(); ++i)
            for (std::size_t j = 0; j < ev.size(); ++j) {
                const double g = sv.grad(i, j);
                if (g == 0.0) continue;
                docalign::axpy(g, ev[j].data(), ges[i].data(), 4);
                docalign::axpy(g, es[i].data(), gev[j].data(), 4);
            }
        ParamGrads grads(p);
        encoder_backward(p, cs, ges, grads);
        encoder_backward(p, cv, gev, grads);

        for (int probe = 0; probe < 40; ++probe) {
            const std::size_t flat = rng.below(param_count(p));
            double* w = param_entry(p, flat);
            const double keep = *w;
            const double fd = oracles::central_diff(
                [&](double x) {
                    *w = x;
                    const double value = loss_of(p);
                    *w = keep;
                    return value;
                },
                keep, 1e-5);
            REQUIRE(oracles::rel_err(fd, grad_entry(grads, flat)) < 1e-4);
        }
    }
}

TEST_CASE("checkpoint JSON round-trips bit-exactly") {
    Rng rng(17);
    docalign::Checkpoint ckpt;
    ckpt.params = random_params(7, 9, 5, rng);
    ckpt.config = {{"simfn", "ap"}, {"lr", 1e-4}};
    ckpt.epoch = 12;
    ckpt.dev_loss = 0.03125 + 1e-17;

    testutil::TempDir dir;
    const auto path = dir.path / "ckpt.json";
    docalign::save_checkpoint(ckpt, path);
    const auto loaded = docalign::load_checkpoint(path);
    REQUIRE(loaded.params.W_s.data() == ckpt.params.W_s.data());
    REQUIRE(loaded.params.W_v.data() == ckpt.params.W_v.data());
    REQUIRE(loaded.params.b_s == ckpt.params.b_s);
    REQUIRE(loaded.params.b_v == ckpt.params.b_v);
    REQUIRE(loaded.epoch == ckpt.epoch);
    REQUIRE(loaded.dev_loss == ckpt.dev_loss);
}
