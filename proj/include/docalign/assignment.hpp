#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "docalign/error.hpp"
#include "docalign/matrix.hpp"

namespace docalign {

// One-to-one matching over a rectangular similarity matrix: row/column indices
// appear at most once, total is the sum of matched entries, r = |matches|.
struct AssignmentSolution {
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // sorted by row
    double total = 0.0;
    std::size_t r = 0;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Successive shortest augmenting paths on the min-cost transform
// (cost = max_entry - value, so costs are non-negative and Dijkstra with
// potentials applies). Augmenting from *all* free rows at once means that
// after t augmentations the matching is the best one among all matchings of
// cardinality exactly t, which is what the capped variant needs.
inline AssignmentSolution solve_by_augmentation(const Mat& m, std::size_t target) {
    const std::size_t n = m.rows(), cols = m.cols();
    require(n >= 1 && cols >= 1, Errc::validation, "assignment: empty matrix");
    require(m.all_finite(), Errc::numeric, "assignment: non-finite entry");

    double shift = m.data()[0];
    for (double v : m.data()) shift = std::max(shift, v);

    auto cost = [&](std::size_t i, std::size_t j) { return shift - m(i, j); };

    std::vector<double> pot_row(n, 0.0), pot_col(cols, 0.0);
    std::vector<int> match_row(n, -1), match_col(cols, -1);

    std::vector<double> dist(cols), dist_row(n);
    std::vector<int> pred(cols);
    std::vector<char> done(cols);

    for (std::size_t round = 0; round < target; ++round) {
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(dist_row.begin(), dist_row.end(), kInf);
        std::fill(pred.begin(), pred.end(), -1);
        std::fill(done.begin(), done.end(), 0);

        for (std::size_t i = 0; i < n; ++i) {
            if (match_row[i] != -1) continue;
            dist_row[i] = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double d = cost(i, j) - pot_row[i] - pot_col[j];
                if (d < dist[j]) {
                    dist[j] = d;
                    pred[j] = static_cast<int>(i);
                }
            }
        }

        int end_col = -1;
        for (;;) {
            int jmin = -1;
            double best = kInf;
            for (std::size_t j = 0; j < cols; ++j) {
                if (!done[j] && dist[j] < best) {
                    best = dist[j];
                    jmin = static_cast<int>(j);
                }
            }
            require(jmin >= 0, Errc::numeric, "assignment: no augmenting path");
            done[jmin] = 1;
            if (match_col[jmin] == -1) {
                end_col = jmin;
                break;
            }
            const std::size_t i = static_cast<std::size_t>(match_col[jmin]);
            dist_row[i] = dist[jmin];  // matched edges are tight
            for (std::size_t j = 0; j < cols; ++j) {
                if (done[j]) continue;
                const double d = dist_row[i] + cost(i, j) - pot_row[i] - pot_col[j];
                if (d < dist[j]) {
                    dist[j] = d;
                    pred[j] = static_cast<int>(i);
                }
            }
        }

        const double path_len = dist[end_col];
        for (std::size_t j = 0; j < cols; ++j)
            if (done[j]) pot_col[j] += dist[j] - path_len;
        for (std::size_t i = 0; i < n; ++i)
            if (dist_row[i] < kInf) pot_row[i] += path_len - dist_row[i];

        int j = end_col;
        for (;;) {
            const int i = pred[j];
            match_col[j] = i;
            const int prev = match_row[i];
            match_row[i] = j;
            if (prev == -1) break;
            j = prev;
        }
    }

    AssignmentSolution sol;
    for (std::size_t i = 0; i < n; ++i) {
        if (match_row[i] != -1) {
            sol.matches.emplace_back(i, static_cast<std::size_t>(match_row[i]));
            sol.total += m(i, static_cast<std::size_t>(match_row[i]));
        }
    }
    sol.r = sol.matches.size();
    return sol;
}

}  // namespace detail

// Maximum-total matching at full rank: r = min(n, m) by convention even when
// entries are negative; sparser matchings are the capped variant's job.
inline AssignmentSolution solve_assignment(const Mat& m) {
    return detail::solve_by_augmentation(m, std::min(m.rows(), m.cols()));
}

// Maximum-total matching of cardinality exactly k (k augmenting rounds on the
// shifted cost). With non-negative entries this coincides with the best
// matching of cardinality <= k; at k = min(n, m) it equals solve_assignment.
inline AssignmentSolution solve_assignment_capped(const Mat& m, std::size_t k) {
    require(k >= 1 && k <= std::min(m.rows(), m.cols()), Errc::validation,
            "assignment: cap out of range");
    return detail::solve_by_augmentation(m, k);
}

// Exhaustive oracle. Without a cap it optimizes over full-rank matchings,
// mirroring solve_assignment's convention; with cap k it optimizes over all
// matchings with at most k edges (the empty matching included). Ties break to
// the lexicographically smallest match set.
inline AssignmentSolution brute_force_assignment(const Mat& m,
                                                 std::optional<std::size_t> cap = std::nullopt) {
    const std::size_t n = m.rows(), cols = m.cols();
    require(n >= 1 && cols >= 1, Errc::validation, "assignment: empty matrix");
    require(std::max(n, cols) <= 8, Errc::validation, "brute force: instance too large");
    require(m.all_finite(), Errc::numeric, "assignment: non-finite entry");
    if (cap)
        require(*cap >= 1 && *cap <= std::min(n, cols), Errc::validation,
                "assignment: cap out of range");

    // best[i][mask][t]: max total over rows i.. using columns outside mask,
    // placing exactly t more edges.
    const std::size_t masks = std::size_t{1} << cols;
    const std::size_t tmax = std::min(n, cols);
    auto idx = [&](std::size_t i, std::size_t mask, std::size_t t) {
        return (i * masks + mask) * (tmax + 1) + t;
    };
    std::vector<double> best((n + 1) * masks * (tmax + 1), -detail::kInf);
    for (std::size_t mask = 0; mask < masks; ++mask) best[idx(n, mask, 0)] = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t mask = 0; mask < masks; ++mask) {
            for (std::size_t t = 0; t <= tmax; ++t) {
                double v = best[idx(i + 1, mask, t)];
                if (t > 0) {
                    for (std::size_t j = 0; j < cols; ++j) {
                        if (mask & (std::size_t{1} << j)) continue;
                        const double cand =
                            best[idx(i + 1, mask | (std::size_t{1} << j), t - 1)];
                        if (cand > -detail::kInf) v = std::max(v, m(i, j) + cand);
                    }
                }
                best[idx(i, mask, t)] = v;
            }
        }
    }

    std::size_t want = tmax;  // full-rank convention
    double target = best[idx(0, 0, tmax)];
    if (cap) {
        want = 0;
        target = 0.0;  // empty matching
        for (std::size_t t = 1; t <= *cap; ++t) {
            if (best[idx(0, 0, t)] > target) {
                target = best[idx(0, 0, t)];
                want = t;
            }
        }
    }

    // Reconstruct the lexicographically smallest optimal match set: prefer
    // matching earlier rows, and smaller columns, whenever the optimum is
    // still reachable.
    AssignmentSolution sol;
    std::size_t mask = 0, left = want;
    double need = target;
    const double tol = 1e-9 * (1.0 + std::abs(target));
    for (std::size_t i = 0; i < n && left > 0; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (mask & (std::size_t{1} << j)) continue;
            const double rest = best[idx(i + 1, mask | (std::size_t{1} << j), left - 1)];
            if (rest > -detail::kInf && m(i, j) + rest >= need - tol) {
                sol.matches.emplace_back(i, j);
                mask |= std::size_t{1} << j;
                need -= m(i, j);
                --left;
                break;
            }
        }
        // no feasible column keeps the optimum -> row i stays unmatched
    }
    sol.r = sol.matches.size();
    for (auto [i, j] : sol.matches) sol.total += m(i, j);
    return sol;
}

}  // namespace docalign
