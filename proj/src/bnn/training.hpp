#pragma once

// Shared pieces of the two training loops.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "hybridflow/bnn.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/rng.hpp"

namespace hybridflow::bnn::detail {

/// One permutation per epoch from a dedicated stream.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(split_seed(seed, 0x5u), static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    return order;
}

inline void check_finite(double loss, const TrainTrace& trace, int epoch, const char* who) {
    if (std::isfinite(loss)) return;
    throw NumericalError(fmt::format("{}: loss became non-finite in epoch {}", who, epoch), loss, trace.loss);
}

/// Per-example likelihood term: value, d/d prediction and d/d log sigma2.
struct NllTerms {
    double nll;
    double d_value;
    double d_log_sigma2;
};

inline NllTerms nll_terms(double value, double target, double sigma2) {
    const double r = value - target;
    if (sigma2 == 0.0) return {gaussian_nll(r, sigma2), 0.0, 0.0};
    return {gaussian_nll(r, sigma2), r / sigma2, 0.5 - r * r / (2.0 * sigma2)};
}

} // namespace hybridflow::bnn::detail
