#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "docalign/corpus.hpp"
#include "docalign/error.hpp"
#include "docalign/features.hpp"
#include "docalign/matrix.hpp"
#include "docalign/rng.hpp"

namespace docalign {

// Mean squared distance of the L2-normalized vectors to their centroid.
inline double spread(const std::vector<std::vector<double>>& vectors) {
    require(!vectors.empty(), Errc::validation, "spread: need at least one vector");
    const std::size_t d = vectors.front().size();
    std::vector<std::vector<double>> unit;
    unit.reserve(vectors.size());
    for (const auto& v : vectors) {
        require(v.size() == d, Errc::validation, "spread: dimension mismatch");
        const double n = norm2(v);
        require(n > 1e-12, Errc::validation, "spread: zero vector");
        std::vector<double> u(d);
        for (std::size_t i = 0; i < d; ++i) u[i] = v[i] / n;
        unit.push_back(std::move(u));
    }
    std::vector<double> centroid(d, 0.0);
    for (const auto& u : unit) axpy(1.0, u.data(), centroid.data(), d);
    for (double& c : centroid) c /= static_cast<double>(unit.size());
    double total = 0.0;
    for (const auto& u : unit) {
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) sq += (u[i] - centroid[i]) * (u[i] - centroid[i]);
        total += sq;
    }
    return total / static_cast<double>(unit.size());
}

struct PcaResult {
    Mat reduced;                    // N x dims
    Mat components;                 // dims x d, rows are unit principal axes
    std::vector<double> eigenvalues;
    std::vector<double> explained_ratio;
    bool rank_deficient = false;
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a small symmetric matrix. Returns
// eigenvalues descending with matching columns of V.
inline void jacobi_eigen(Mat a, std::vector<double>& values, Mat& vectors) {
    const std::size_t n = a.rows();
    vectors = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i) vectors(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = vectors(i, p), viq = vectors(i, q);
                    vectors(i, p) = c * vip - s * viq;
                    vectors(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return values[x] > values[y]; });
    Mat sorted_v(n, n);
    std::vector<double> sorted_w(n);
    for (std::size_t k = 0; k < n; ++k) {
        sorted_w[k] = values[order[k]];
        for (std::size_t i = 0; i < n; ++i) sorted_v(i, k) = vectors(i, order[k]);
    }
    values = std::move(sorted_w);
    vectors = std::move(sorted_v);
}

// Modified Gram-Schmidt on the columns of q (d x k). Returns false if a
// column collapses (rank deficiency); that column is re-seeded by the caller.
inline bool orthonormalize_columns(Mat& q) {
    const std::size_t d = q.rows(), k = q.cols();
    for (std::size_t col = 0; col < k; ++col) {
        for (std::size_t prev = 0; prev < col; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += q(i, col) * q(i, prev);
            for (std::size_t i = 0; i < d; ++i) q(i, col) -= proj * q(i, prev);
        }
        double n = 0.0;
        for (std::size_t i = 0; i < d; ++i) n += q(i, col) * q(i, col);
        n = std::sqrt(n);
        if (n < 1e-150) return false;
        for (std::size_t i = 0; i < d; ++i) q(i, col) /= n;
    }
    return true;
}

}  // namespace detail

// Projection onto the top principal components of the centered data, by
// subspace iteration with Rayleigh-Ritz extraction (relative eigenvalue
// tolerance 1e-9). Component signs are fixed by making each component's
// largest-magnitude coordinate positive. When the data has rank below
// `dims`, trailing components are zeroed and the flag is set.
inline PcaResult pca_reduce(const std::vector<std::vector<double>>& vectors,
                            std::size_t dims = 20) {
    const std::size_t n = vectors.size();
    require(n >= 2, Errc::validation, "pca_reduce: need at least two vectors");
    const std::size_t d = vectors.front().size();
    for (const auto& v : vectors)
        require(v.size() == d, Errc::validation, "pca_reduce: dimension mismatch");
    require(dims >= 1 && dims <= d, Errc::validation, "pca_reduce: dims out of range");
    require(n > dims, Errc::validation, "pca_reduce: need more vectors than dims");

    std::vector<double> mean(d, 0.0);
    for (const auto& v : vectors) axpy(1.0, v.data(), mean.data(), d);
    for (double& m : mean) m /= static_cast<double>(n);

    Mat centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = vectors[i][j] - mean[j];

    Mat cov(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = centered.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            if (row[a] == 0.0) continue;
            axpy(row[a], row, cov.row(a), d);
        }
    }
    for (auto& v : cov.data()) v /= static_cast<double>(n);
    double total_var = 0.0;
    for (std::size_t a = 0; a < d; ++a) total_var += cov(a, a);

    PcaResult out;
    out.components = Mat(dims, d);
    out.eigenvalues.assign(dims, 0.0);
    out.explained_ratio.assign(dims, 0.0);
    out.reduced = Mat(n, dims);

    if (total_var <= 1e-300) {
        out.rank_deficient = true;  // all points identical
        return out;
    }

    // deterministic start basis
    Rng rng(0x9e3779b97f4a7c15ULL);
    Mat q(d, dims);
    for (auto& v : q.data()) v = rng.gaussian();
    require(detail::orthonormalize_columns(q), Errc::numeric, "pca_reduce: degenerate start");

    std::vector<double> eig_prev(dims, 0.0), eig(dims, 0.0);
    Mat small(dims, dims), rot;
    std::vector<double> small_w;
    for (int iter = 0; iter < 1000; ++iter) {
        // z = cov * q
        Mat z(d, dims);
        for (std::size_t a = 0; a < d; ++a) {
            const double* crow = cov.row(a);
            for (std::size_t b = 0; b < d; ++b) {
                if (crow[b] == 0.0) continue;
                axpy(crow[b], q.row(b), z.row(a), dims);
            }
        }
        if (!detail::orthonormalize_columns(z)) {
            // rank below dims: restart the dead directions randomly
            for (auto& v : z.data()) v += 1e-12 * rng.gaussian();
            require(detail::orthonormalize_columns(z), Errc::numeric,
                    "pca_reduce: orthonormalization failed");
        }
        q = std::move(z);

        // Rayleigh-Ritz: diagonalize q^T cov q
        Mat cq(d, dims);
        for (std::size_t a = 0; a < d; ++a) {
            const double* crow = cov.row(a);
            for (std::size_t b = 0; b < d; ++b) {
                if (crow[b] == 0.0) continue;
                axpy(crow[b], q.row(b), cq.row(a), dims);
            }
        }
        for (std::size_t x = 0; x < dims; ++x)
            for (std::size_t y = 0; y < dims; ++y) {
                double s = 0.0;
                for (std::size_t a = 0; a < d; ++a) s += q(a, x) * cq(a, y);
                small(x, y) = s;
            }
        detail::jacobi_eigen(small, small_w, rot);
        Mat q_rot(d, dims);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t y = 0; y < dims; ++y) {
                double s = 0.0;
                for (std::size_t x = 0; x < dims; ++x) s += q(a, x) * rot(x, y);
                q_rot(a, y) = s;
            }
        q = std::move(q_rot);
        eig = small_w;

        double delta = 0.0;
        for (std::size_t k = 0; k < dims; ++k)
            delta = std::max(delta, std::abs(eig[k] - eig_prev[k]));
        if (delta <= 1e-9 * std::max(std::abs(eig[0]), 1e-300)) break;
        eig_prev = eig;
    }

    const double eig_floor = 1e-12 * std::max(eig[0], 0.0);
    for (std::size_t k = 0; k < dims; ++k) {
        if (eig[k] <= eig_floor) {
            out.rank_deficient = true;  // pad with zero components
            continue;
        }
        out.eigenvalues[k] = eig[k];
        out.explained_ratio[k] = eig[k] / total_var;
        // sign convention: largest-magnitude coordinate positive
        std::size_t arg = 0;
        for (std::size_t a = 1; a < d; ++a)
            if (std::abs(q(a, k)) > std::abs(q(arg, k))) arg = a;
        const double sign = q(arg, k) < 0.0 ? -1.0 : 1.0;
        for (std::size_t a = 0; a < d; ++a) out.components(k, a) = sign * q(a, k);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dims; ++k)
            out.reduced(i, k) = dot(centered.row(i), out.components.row(k), d);
    return out;
}

struct OlsFit {
    std::vector<double> coefficients;  // intercept first
    double r_squared = 0.0;
    double f_statistic = 0.0;
    std::size_t dof_model = 0;
    std::size_t dof_residual = 0;
};

// Ordinary least squares through the normal equations (Gaussian elimination
// with partial pivoting). Errors out on rank-deficient designs.
inline OlsFit ols_fit(const Mat& x, const std::vector<double>& y) {
    const std::size_t n = x.rows(), p = x.cols();
    require(y.size() == n, Errc::validation, "ols_fit: length mismatch");
    require(n > p + 1, Errc::validation, "ols_fit: need more observations than parameters");

    const std::size_t q = p + 1;  // with intercept
    Mat a(q, q);
    std::vector<double> rhs(q, 0.0);
    auto design = [&](std::size_t i, std::size_t col) {
        return col == 0 ? 1.0 : x(i, col - 1);
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c1 = 0; c1 < q; ++c1) {
            const double d1 = design(i, c1);
            rhs[c1] += d1 * y[i];
            for (std::size_t c2 = 0; c2 < q; ++c2) a(c1, c2) += d1 * design(i, c2);
        }
    }

    double scale = 0.0;
    for (std::size_t c = 0; c < q; ++c) scale = std::max(scale, std::abs(a(c, c)));

    // elimination with partial pivoting
    std::vector<std::size_t> perm(q);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t col = 0; col < q; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < q; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (piv != col) {
            for (std::size_t c = 0; c < q; ++c) std::swap(a(col, c), a(piv, c));
            std::swap(rhs[col], rhs[piv]);
        }
        require(std::abs(a(col, col)) > 1e-12 * std::max(scale, 1e-300), Errc::validation,
                "ols_fit: rank-deficient design");
        for (std::size_t r = col + 1; r < q; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < q; ++c) a(r, c) -= f * a(col, c);
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> beta(q, 0.0);
    for (std::size_t col = q; col-- > 0;) {
        double s = rhs[col];
        for (std::size_t c = col + 1; c < q; ++c) s -= a(col, c) * beta[c];
        beta[col] = s / a(col, col);
    }

    double mean_y = 0.0;
    for (double v : y) mean_y += v;
    mean_y /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = beta[0];
        for (std::size_t c = 1; c < q; ++c) pred += beta[c] * x(i, c - 1);
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
    }

    OlsFit fit;
    fit.coefficients = std::move(beta);
    fit.dof_model = p;
    fit.dof_residual = n - p - 1;
    if (ss_tot <= 1e-300) {
        fit.r_squared = 0.0;  // constant response
        fit.f_statistic = 0.0;
        return fit;
    }
    fit.r_squared = 1.0 - ss_res / ss_tot;
    const double denom = (1.0 - fit.r_squared) / static_cast<double>(fit.dof_residual);
    fit.f_statistic = denom <= 0.0
                          ? std::numeric_limits<double>::infinity()
                          : (fit.r_squared / static_cast<double>(p)) / denom;
    return fit;
}

struct RegressionModel {
    OlsFit fit;
    std::vector<std::size_t> dropped_columns;  // removed to restore full rank
};

struct DifficultyRow {
    std::string doc_id;
    double auc = 0.0;
    double image_spread = 0.0;
    double text_spread = 0.0;
};

struct DifficultyReport {
    RegressionModel spread_only;
    RegressionModel spread_plus_content;
    std::vector<DifficultyRow> per_document;
    std::size_t content_dims = 0;
};

namespace detail {

// Drops linearly dependent (or constant) columns, left to right, so that
// ols_fit sees a full-rank design. Earlier columns win ties, which keeps the
// spread regressors when content features collapse.
inline std::pair<Mat, std::vector<std::size_t>> prune_columns(const Mat& x) {
    const std::size_t n = x.rows(), p = x.cols();
    std::vector<std::size_t> keep;
    std::vector<std::vector<double>> basis;  // orthonormalized kept columns (centered)
    std::vector<std::size_t> dropped;
    for (std::size_t c = 0; c < p; ++c) {
        std::vector<double> col(n);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, c);
        mean /= static_cast<double>(n);
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = x(i, c) - mean;
            scale = std::max(scale, std::abs(col[i]));
        }
        if (scale <= 1e-12) {
            dropped.push_back(c);  // constant column duplicates the intercept
            continue;
        }
        std::vector<double> resid = col;
        for (const auto& b : basis) {
            const double proj = dot(resid, b);
            for (std::size_t i = 0; i < n; ++i) resid[i] -= proj * b[i];
        }
        const double rn = norm2(resid);
        if (rn <= 1e-9 * norm2(col)) {
            dropped.push_back(c);
            continue;
        }
        for (double& v : resid) v /= rn;
        basis.push_back(std::move(resid));
        keep.push_back(c);
    }
    Mat pruned(n, keep.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < keep.size(); ++k) pruned(i, k) = x(i, keep[k]);
    return {std::move(pruned), std::move(dropped)};
}

}  // namespace detail

// Regresses per-document AUC on spread features alone, then on spread plus
// PCA-reduced content features (mean-pooled sentence and image vectors,
// concatenated). Nested designs, so the second R^2 can never be smaller.
inline DifficultyReport difficulty_regression(
    const std::vector<std::pair<std::string, double>>& per_doc_auc, const Corpus& corpus,
    std::size_t content_dims = 20, TextEncoderKind text_encoder = TextEncoderKind::feat,
    std::size_t max_tokens = 20) {
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& doc : corpus.documents) by_id[doc.id] = &doc;

    const std::size_t n = per_doc_auc.size();
    require(n >= 5, Errc::validation, "difficulty_regression: need at least five documents");

    DifficultyReport report;
    std::vector<double> auc(n);
    Mat spreads(n, 2);
    std::vector<std::vector<double>> content;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [doc_id, doc_auc_value] = per_doc_auc[i];
        auto it = by_id.find(doc_id);
        require(it != by_id.end(), Errc::validation,
                "difficulty_regression: unknown document '" + doc_id + "'");
        const Document& doc = *it->second;
        auto sent = sentence_feature_vectors(doc, corpus, text_encoder, max_tokens);
        auto img = image_feature_vectors(doc, corpus);
        const double img_spread = spread(img);
        const double txt_spread = spread(sent);
        spreads(i, 0) = img_spread;
        spreads(i, 1) = txt_spread;
        auc[i] = doc_auc_value;

        std::vector<double> pooled(sent.front().size() + img.front().size(), 0.0);
        for (const auto& v : sent) axpy(1.0, v.data(), pooled.data(), v.size());
        for (std::size_t j = 0; j < sent.front().size(); ++j)
            pooled[j] /= static_cast<double>(sent.size());
        const std::size_t off = sent.front().size();
        for (const auto& v : img) axpy(1.0, v.data(), pooled.data() + off, v.size());
        for (std::size_t j = 0; j < img.front().size(); ++j)
            pooled[off + j] /= static_cast<double>(img.size());
        content.push_back(std::move(pooled));

        report.per_document.push_back({doc_id, doc_auc_value, img_spread, txt_spread});
    }

    // the full design needs n > 3 + dims observations
    const std::size_t dims = std::min({content_dims, content.front().size(), n - 4});
    report.content_dims = dims;
    const PcaResult pca = pca_reduce(content, dims);

    auto fit_model = [&](const Mat& design) {
        auto [pruned, dropped] = detail::prune_columns(design);
        RegressionModel model;
        model.fit = ols_fit(pruned, auc);
        model.dropped_columns = std::move(dropped);
        return model;
    };

    report.spread_only = fit_model(spreads);

    Mat full(n, 2 + dims);
    for (std::size_t i = 0; i < n; ++i) {
        full(i, 0) = spreads(i, 0);
        full(i, 1) = spreads(i, 1);
        for (std::size_t k = 0; k < dims; ++k) full(i, 2 + k) = pca.reduced(i, k);
    }
    report.spread_plus_content = fit_model(full);
    return report;
}

inline nlohmann::json regression_model_to_json(const RegressionModel& m) {
    return nlohmann::json{{"r2", m.fit.r_squared},
                          {"f", m.fit.f_statistic},
                          {"dof", {{"model", m.fit.dof_model}, {"residual", m.fit.dof_residual}}},
                          {"coefficients", m.fit.coefficients},
                          {"dropped_columns", m.dropped_columns}};
}

inline nlohmann::json difficulty_report_to_json(const DifficultyReport& r) {
    nlohmann::json per_doc = nlohmann::json::array();
    for (const auto& row : r.per_document)
        per_doc.push_back({{"doc_id", row.doc_id},
                           {"auc", row.auc},
                           {"image_spread", row.image_spread},
                           {"text_spread", row.text_spread}});
    return nlohmann::json{{"spread_only", regression_model_to_json(r.spread_only)},
                          {"spread_plus_content", regression_model_to_json(r.spread_plus_content)},
                          {"content_dims", r.content_dims},
                          {"per_document", std::move(per_doc)}};
}

}  // namespace docalign
