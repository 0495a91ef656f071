#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "docalign/assignment.hpp"
#include "docalign/error.hpp"
#include "docalign/matrix.hpp"

namespace docalign {

// Structured set-similarity value plus its subgradient with respect to the
// similarity-matrix entries. The gradient is exact for the selection the
// forward pass made (argmax ties break to the lowest index; matchings are
// treated as constant in the backward pass).
struct SimValue {
    double value = 0.0;
    Mat grad;
};

enum class KPolicyKind { full_min, half_min };

// Resolves the per-document link budget k from the matrix shape.
struct KPolicy {
    KPolicyKind kind = KPolicyKind::full_min;

    std::size_t resolve(std::size_t n, std::size_t m) const {
        const std::size_t mn = std::min(n, m);
        return kind == KPolicyKind::full_min ? mn : (mn + 1) / 2;
    }
};

// Sentence x image cosine matrix. Inputs are expected to be unit vectors
// (the encoders normalize), so entries are plain dot products.
inline Mat cosine_matrix(const std::vector<std::vector<double>>& sent_vecs,
                         const std::vector<std::vector<double>>& img_vecs) {
    require(!sent_vecs.empty() && !img_vecs.empty(), Errc::validation,
            "cosine_matrix: empty vector set");
    const std::size_t d = sent_vecs.front().size();
    for (const auto& v : sent_vecs) {
        require(v.size() == d, Errc::validation, "cosine_matrix: dimension mismatch");
        require(norm2(v) > 1e-12, Errc::validation, "cosine_matrix: zero-norm vector");
    }
    for (const auto& v : img_vecs) {
        require(v.size() == d, Errc::validation, "cosine_matrix: dimension mismatch");
        require(norm2(v) > 1e-12, Errc::validation, "cosine_matrix: zero-norm vector");
    }
    Mat m(sent_vecs.size(), img_vecs.size());
    for (std::size_t i = 0; i < sent_vecs.size(); ++i)
        for (std::size_t j = 0; j < img_vecs.size(); ++j)
            m(i, j) = dot(sent_vecs[i], img_vecs[j]);
    return m;
}

namespace detail {

inline void check_sim_matrix(const Mat& m) {
    require(m.rows() >= 1 && m.cols() >= 1, Errc::validation, "simfn: empty matrix");
    require(m.all_finite(), Errc::numeric, "simfn: non-finite entry");
}

// (value, argmax) per row; ties go to the lowest column.
inline void row_maxes(const Mat& m, std::vector<double>& vals, std::vector<std::size_t>& args) {
    vals.assign(m.rows(), 0.0);
    args.assign(m.rows(), 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* r = m.row(i);
        double best = r[0];
        std::size_t arg = 0;
        for (std::size_t j = 1; j < m.cols(); ++j)
            if (r[j] > best) {
                best = r[j];
                arg = j;
            }
        vals[i] = best;
        args[i] = arg;
    }
}

inline void col_maxes(const Mat& m, std::vector<double>& vals, std::vector<std::size_t>& args) {
    vals.assign(m.cols(), m.row(0)[0]);
    args.assign(m.cols(), 0);
    for (std::size_t j = 0; j < m.cols(); ++j) vals[j] = m(0, j);
    for (std::size_t i = 1; i < m.rows(); ++i) {
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (r[j] > vals[j]) {
                vals[j] = r[j];
                args[j] = i;
            }
    }
}

// Indices of the k largest values, favoring lower indices on ties; returned
// ascending so sums run in the same order as the dense variant.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& vals, std::size_t k) {
    std::vector<std::size_t> order(vals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace detail

// Dense correspondence: every sentence pulls in its best image and vice
// versa; value = mean row max + mean column max.
inline SimValue sim_dc(const Mat& m) {
    detail::check_sim_matrix(m);
    const std::size_t n = m.rows(), cols = m.cols();
    std::vector<double> rv, cv;
    std::vector<std::size_t> ra, ca;
    detail::row_maxes(m, rv, ra);
    detail::col_maxes(m, cv, ca);

    double row_sum = 0.0, col_sum = 0.0;
    SimValue out;
    out.grad = Mat(n, cols);
    for (std::size_t i = 0; i < n; ++i) {
        row_sum += rv[i];
        out.grad(i, ra[i]) += 1.0 / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < cols; ++j) {
        col_sum += cv[j];
        out.grad(ca[j], j) += 1.0 / static_cast<double>(cols);
    }
    out.value = row_sum / static_cast<double>(n) + col_sum / static_cast<double>(cols);
    return out;
}

// Top-k correspondence: only the k strongest row maxes and k strongest
// column maxes participate, each direction normalized by its own k. With
// k = n = m this reduces to sim_dc exactly.
inline SimValue sim_tk(const Mat& m, const KPolicy& policy) {
    detail::check_sim_matrix(m);
    const std::size_t n = m.rows(), cols = m.cols();
    const std::size_t k = policy.resolve(n, cols);
    const std::size_t kr = std::min(k, n), kc = std::min(k, cols);

    std::vector<double> rv, cv;
    std::vector<std::size_t> ra, ca;
    detail::row_maxes(m, rv, ra);
    detail::col_maxes(m, cv, ca);

    SimValue out;
    out.grad = Mat(n, cols);
    double row_sum = 0.0, col_sum = 0.0;
    for (std::size_t i : detail::top_k_indices(rv, kr)) {
        row_sum += rv[i];
        out.grad(i, ra[i]) += 1.0 / static_cast<double>(kr);
    }
    for (std::size_t j : detail::top_k_indices(cv, kc)) {
        col_sum += cv[j];
        out.grad(ca[j], j) += 1.0 / static_cast<double>(kc);
    }
    out.value = row_sum / static_cast<double>(kr) + col_sum / static_cast<double>(kc);
    return out;
}

// Assignment similarity: mean weight of the optimal (optionally capped)
// bipartite matching; gradient is x*/r on the matched cells.
inline SimValue sim_ap(const Mat& m, std::optional<KPolicy> cap = std::nullopt) {
    detail::check_sim_matrix(m);
    AssignmentSolution sol = cap ? solve_assignment_capped(m, cap->resolve(m.rows(), m.cols()))
                                 : solve_assignment(m);
    SimValue out;
    out.grad = Mat(m.rows(), m.cols());
    const double inv_r = 1.0 / static_cast<double>(sol.r);
    for (auto [i, j] : sol.matches) out.grad(i, j) = inv_r;
    out.value = sol.total * inv_r;
    return out;
}

}  // namespace docalign
