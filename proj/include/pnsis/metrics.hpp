#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pnsis/errors.hpp"

namespace pnsis {

// Mann-Whitney ROC-AUC with midranks for ties: P(score_pos > score_neg) plus
// half the tie probability, computed exactly from the rank sum.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ArgumentError("roc_auc: size mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ArgumentError("roc_auc: labels must be 0/1");
        n_pos += y;
    }
    if (n_pos == 0 || n_pos == n)
        throw ArgumentError("roc_auc: undefined with a single class");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n - n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw ArgumentError("mean: empty input");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace pnsis
