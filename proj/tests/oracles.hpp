// Test-only reference implementations, deliberately independent of the
// library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "docalign/matrix.hpp"
#include "docalign/rng.hpp"

namespace oracles {

using docalign::Mat;

inline Mat random_matrix(std::size_t n, std::size_t m, docalign::Rng& rng, double lo = 0.0,
                         double hi = 1.0) {
    Mat out(n, m);
    for (auto& v : out.data()) v = rng.uniform(lo, hi);
    return out;
}

// Best total over matchings of *exactly* cardinality k, by plain recursion.
inline double best_total_exactly(const Mat& m, std::size_t k) {
    const std::size_t n = m.rows(), cols = m.cols();
    double best = -1e300;
    std::vector<char> used(cols, 0);
    std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t row,
                                                                    std::size_t placed,
                                                                    double total) {
        if (placed == k) {
            best = std::max(best, total);
            return;
        }
        if (row == n || n - row < k - placed) return;
        rec(row + 1, placed, total);
        for (std::size_t j = 0; j < cols; ++j) {
            if (used[j]) continue;
            used[j] = 1;
            rec(row + 1, placed + 1, total + m(row, j));
            used[j] = 0;
        }
    };
    rec(0, 0, 0.0);
    return best;
}

// Best total over matchings with at most k edges (the empty one included).
inline double best_total_at_most(const Mat& m, std::size_t k) {
    double best = 0.0;
    for (std::size_t t = 1; t <= k; ++t) best = std::max(best, best_total_exactly(m, t));
    return best;
}

// Gap between the best and second-best exactly-k matching totals.
inline double optimal_gap_exactly(const Mat& m, std::size_t k) {
    const std::size_t n = m.rows(), cols = m.cols();
    double best = -1e300, second = -1e300;
    std::vector<char> used(cols, 0);
    std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t row,
                                                                    std::size_t placed,
                                                                    double total) {
        if (placed == k) {
            if (total > best) {
                second = best;
                best = total;
            } else if (total > second) {
                second = total;
            }
            return;
        }
        if (row == n || n - row < k - placed) return;
        rec(row + 1, placed, total);
        for (std::size_t j = 0; j < cols; ++j) {
            if (used[j]) continue;
            used[j] = 1;
            rec(row + 1, placed + 1, total + m(row, j));
            used[j] = 0;
        }
    };
    rec(0, 0, 0.0);
    return best - second;
}

// Pair-counting AUROC: wins + half-ties over positive/negative score pairs.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<char>& positive) {
    double wins = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        ++n_pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    for (std::size_t j = 0; j < scores.size(); ++j)
        if (!positive[j]) ++n_neg;
    return 100.0 * wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Top-C scan: repeatedly take the largest remaining entry (ties by cell
// index) and count gold hits.
inline double scan_precision_at(const Mat& m, const std::vector<std::pair<std::size_t, std::size_t>>& gold,
                                std::size_t c) {
    const std::size_t cells = m.rows() * m.cols();
    const std::size_t take = std::min(c, cells);
    std::vector<char> taken(cells, 0);
    std::size_t hits = 0;
    for (std::size_t round = 0; round < take; ++round) {
        std::size_t arg = cells;
        for (std::size_t i = 0; i < cells; ++i) {
            if (taken[i]) continue;
            if (arg == cells || m.data()[i] > m.data()[arg]) arg = i;
        }
        taken[arg] = 1;
        for (const auto& [s, v] : gold)
            if (s * m.cols() + v == arg) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(take);
}

// Central finite difference of a scalar function at x, step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

}  // namespace oracles
