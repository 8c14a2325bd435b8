#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace pnsis {

// Order-independent exact accumulation of doubles (Shewchuk partials, same
// scheme as Python's math.fsum). The returned value is the correctly rounded
// true sum, so summing a multiset of terms gives a bit-identical result
// regardless of insertion order. Used wherever exact permutation invariance
// or exact symmetry of a summed quantity is part of the contract.
class ExactSum {
public:
    void add(double x) {
        std::size_t i = 0;
        for (std::size_t j = 0; j < partials_.size(); ++j) {
            double y = partials_[j];
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            double hi = x + y;
            double lo = y - (hi - x);
            if (lo != 0.0) partials_[i++] = lo;
            x = hi;
        }
        partials_.resize(i);
        partials_.push_back(x);
    }

    double value() const {
        if (partials_.empty()) return 0.0;
        std::size_t j = partials_.size() - 1;
        double hi = partials_[j];
        double lo = 0.0;
        while (j > 0) {
            double x = hi;
            double y = partials_[--j];
            hi = x + y;
            double yr = hi - x;
            lo = y - yr;
            if (lo != 0.0) break;
        }
        // Round-half-even correction against the next partial down.
        if (j > 0 && ((lo < 0.0 && partials_[j - 1] < 0.0) ||
                      (lo > 0.0 && partials_[j - 1] > 0.0))) {
            double y = lo * 2.0;
            double x = hi + y;
            double yr = x - hi;
            if (y == yr) hi = x;
        }
        return hi;
    }

    void reset() { partials_.clear(); }

private:
    std::vector<double> partials_;
};

inline double exact_dot(const double* a, const double* b, std::size_t n) {
    // Products themselves round, but identically for any operand order, so the
    // result is still order-invariant over the multiset of (a_i, b_i) pairs.
    ExactSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(a[i] * b[i]);
    return s.value();
}

}  // namespace pnsis
