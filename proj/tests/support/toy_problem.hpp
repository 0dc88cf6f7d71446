#pragma once

// One-dimensional regression with a 90/10 density split, used to check that
// both Bayesian backends widen their predictive spread where data is scarce.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hybridflow/bnn.hpp"

namespace toy {

inline double truth(double x) { return 2.0 + std::sin(3.0 * x); }

// Sparse region [-1, 0), dense region [0, 1].
inline constexpr double lo = -1.0, mid = 0.0, hi = 1.0;

struct Data {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
};

/// sparse_fraction of the points fall in [lo, mid), the rest in [mid, hi].
inline Data make_training(std::size_t n, std::uint64_t seed, double sparse_fraction = 0.1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sparse(lo, mid), dense(mid, hi);
    Data d;
    const auto n_sparse = static_cast<std::size_t>(std::lround(sparse_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i < n_sparse ? sparse(rng) : dense(rng);
        d.x.push_back({x});
        d.y.push_back(truth(x));
    }
    return d;
}

inline hybridflow::bnn::MLPArchitecture architecture() {
    hybridflow::bnn::MLPArchitecture a;
    a.layer_sizes = {1, 32, 32, 1};
    a.output_link = hybridflow::bnn::OutputLink::identity;
    return a;
}

inline hybridflow::bnn::OptimizerSettings optimizer() {
    hybridflow::bnn::OptimizerSettings o;
    o.kind = hybridflow::bnn::OptimizerKind::adam;
    o.learning_rate = 1e-3;
    o.batch_size = 32;
    o.epochs = 1000;
    o.plateau_patience = 50;
    o.min_learning_rate = 1e-5;
    o.grad_clip = 1e5;
    return o;
}

inline hybridflow::bnn::McDropoutSettings dropout_settings() {
    hybridflow::bnn::McDropoutSettings s;
    s.p_mc = 0.05;
    s.noise.sigma2 = 1e-3;
    s.optimizer = optimizer();
    s.init_output_scale = 1.0;
    return s;
}

inline hybridflow::bnn::BbpSettings bbp_settings() {
    hybridflow::bnn::BbpSettings s;
    s.n_samples = 3;
    s.noise.sigma2 = 1e-3;
    s.optimizer = optimizer();
    s.optimizer.epochs = 300;
    return s;
}

} // namespace toy
