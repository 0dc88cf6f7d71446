#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "hybridflow/bnn.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/kernels.hpp"

namespace hybridflow::bnn {

const char* to_string(Activation a) {
    switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    }
    return "unknown";
}

const char* to_string(OutputLink l) { return l == OutputLink::exp ? "exp" : "identity"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw InputDomainError(fmt::format("unknown activation '{}'", s));
}

OutputLink output_link_from_string(const std::string& s) {
    if (s == "exp") return OutputLink::exp;
    if (s == "identity") return OutputLink::identity;
    throw InputDomainError(fmt::format("unknown output link '{}'", s));
}

void MLPArchitecture::validate() const {
    if (layer_sizes.size() < 3)
        throw InputDomainError("MLPArchitecture: need an input, at least one hidden and an output layer");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw InputDomainError("MLPArchitecture: layer sizes must be > 0");
    if (!(link_clamp > 0.0)) throw InputDomainError("MLPArchitecture: link_clamp must be > 0");
}

std::size_t MLPArchitecture::n_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
    return n;
}

std::size_t MLPArchitecture::weight_offset(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
    return n;
}

std::size_t MLPArchitecture::bias_offset(std::size_t layer) const {
    return weight_offset(layer) + layer_sizes[layer + 1] * layer_sizes[layer];
}

std::vector<double> MLPArchitecture::weight_indicator() const {
    std::vector<double> ind(n_params(), 0.0);
    for (std::size_t l = 0; l < n_layers(); ++l)
        std::fill_n(ind.begin() + static_cast<std::ptrdiff_t>(weight_offset(l)), layer_sizes[l + 1] * layer_sizes[l],
                    1.0);
    return ind;
}

double apply_link(const MLPArchitecture& arch, double x) {
    if (arch.output_link == OutputLink::identity) return x;
    return std::exp(std::clamp(x, -arch.link_clamp, arch.link_clamp));
}

double link_derivative(const MLPArchitecture& arch, double x) {
    if (arch.output_link == OutputLink::identity) return 1.0;
    if (x < -arch.link_clamp || x > arch.link_clamp) return 0.0;
    return std::exp(x);
}

namespace {

double activate(Activation a, double x) {
    switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
    }
    return x;
}

double activate_derivative(Activation a, double x) {
    switch (a) {
    case Activation::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
    }
    return 1.0;
}

void check_mask(const MLPArchitecture& arch, const DropoutMask& mask) {
    if (mask.keep.size() != arch.n_layers() - 1)
        throw InputDomainError(fmt::format("dropout mask has {} layers, expected {}", mask.keep.size(),
                                           arch.n_layers() - 1));
    for (std::size_t l = 0; l < mask.keep.size(); ++l)
        if (mask.keep[l].size() != arch.layer_sizes[l + 1])
            throw InputDomainError(fmt::format("dropout mask layer {} has {} units, expected {}", l,
                                               mask.keep[l].size(), arch.layer_sizes[l + 1]));
}

} // namespace

DropoutMask sample_mask(const MLPArchitecture& arch, double p_drop, Rng& rng) {
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw InputDomainError(fmt::format("dropout p={} outside [0,1)", p_drop));
    DropoutMask m;
    m.keep.resize(arch.n_layers() - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < arch.n_layers(); ++l) {
        m.keep[l].resize(arch.layer_sizes[l + 1]);
        for (double& k : m.keep[l]) k = u(rng) < p_drop ? 0.0 : 1.0;
    }
    return m;
}

DropoutMask keep_all_mask(const MLPArchitecture& arch) {
    DropoutMask m;
    m.keep.resize(arch.n_layers() - 1);
    for (std::size_t l = 0; l + 1 < arch.n_layers(); ++l) m.keep[l].assign(arch.layer_sizes[l + 1], 1.0);
    return m;
}

std::vector<double> forward(const MLPArchitecture& arch, std::span<const double> params,
                            std::span<const double> input, const DropoutMask* mask, ForwardCache* cache) {
    if (params.size() != arch.n_params())
        throw InputDomainError(fmt::format("forward: {} parameters, architecture needs {}", params.size(),
                                           arch.n_params()));
    if (input.size() != arch.input_size())
        throw InputDomainError(fmt::format("forward: input has {} entries, expected {}", input.size(),
                                           arch.input_size()));
    if (mask != nullptr) check_mask(arch, *mask);
    const auto& k = kernels::active();
    const std::size_t L = arch.n_layers();

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.pre.resize(L);
    c.post.resize(L + 1);
    c.mask = mask;
    c.post[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t rows = arch.layer_sizes[l + 1], cols = arch.layer_sizes[l];
        c.pre[l].resize(rows);
        k.affine(params.data() + arch.weight_offset(l), params.data() + arch.bias_offset(l), c.post[l].data(),
                 c.pre[l].data(), rows, cols);
        auto& out = c.post[l + 1];
        out.resize(rows);
        if (l + 1 < L) {
            for (std::size_t r = 0; r < rows; ++r) out[r] = activate(arch.activation, c.pre[l][r]);
            if (mask != nullptr)
                for (std::size_t r = 0; r < rows; ++r) out[r] *= mask->keep[l][r];
        } else {
            for (std::size_t r = 0; r < rows; ++r) out[r] = apply_link(arch, c.pre[l][r]);
        }
    }
    return c.post[L];
}

void backprop(const MLPArchitecture& arch, std::span<const double> params, const ForwardCache& cache,
              std::span<const double> upstream, std::span<double> grad) {
    const std::size_t L = arch.n_layers();
    if (upstream.size() != arch.output_size())
        throw InputDomainError("backprop: upstream gradient size does not match the output layer");
    if (grad.size() != arch.n_params() || params.size() != arch.n_params())
        throw InputDomainError("backprop: parameter/gradient size mismatch");
    if (cache.pre.size() != L || cache.post.size() != L + 1)
        throw InputDomainError("backprop: cache does not belong to this architecture");
    const auto& k = kernels::active();

    std::vector<double> delta(upstream.size());
    for (std::size_t r = 0; r < delta.size(); ++r) delta[r] = upstream[r] * link_derivative(arch, cache.pre[L - 1][r]);

    std::vector<double> back;
    for (std::size_t l = L; l-- > 0;) {
        const std::size_t rows = arch.layer_sizes[l + 1], cols = arch.layer_sizes[l];
        k.rank1_update(grad.data() + arch.weight_offset(l), 1.0, delta.data(), cache.post[l].data(), rows, cols);
        k.axpy(1.0, delta.data(), grad.data() + arch.bias_offset(l), rows);
        if (l == 0) break;
        back.assign(cols, 0.0);
        k.affine_transposed_acc(params.data() + arch.weight_offset(l), delta.data(), back.data(), rows, cols);
        for (std::size_t c = 0; c < cols; ++c) {
            double d = back[c] * activate_derivative(arch.activation, cache.pre[l - 1][c]);
            if (cache.mask != nullptr) d *= cache.mask->keep[l - 1][c];
            back[c] = d;
        }
        delta.swap(back);
    }
}

std::vector<double> backprop(const MLPArchitecture& arch, std::span<const double> params,
                             std::span<const double> input, std::span<const double> upstream,
                             const DropoutMask* mask) {
    ForwardCache cache;
    forward(arch, params, input, mask, &cache);
    std::vector<double> grad(arch.n_params(), 0.0);
    backprop(arch, params, cache, upstream, grad);
    return grad;
}

Params he_init(const MLPArchitecture& arch, Rng& rng, double output_scale) {
    arch.validate();
    Params p(arch.n_params(), 0.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t l = 0; l < arch.n_layers(); ++l) {
        const std::size_t rows = arch.layer_sizes[l + 1], cols = arch.layer_sizes[l];
        double scale = std::sqrt(2.0 / static_cast<double>(cols));
        if (l + 1 == arch.n_layers()) scale *= output_scale;
        double* w = p.data() + arch.weight_offset(l);
        for (std::size_t i = 0; i < rows * cols; ++i) w[i] = scale * n01(rng);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Likelihood, data, optimizer
// ---------------------------------------------------------------------------

void NoiseModel::validate() const {
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
        throw InputDomainError(fmt::format("NoiseModel: sigma2 must be >= 0, got {}", sigma2));
    if (learnable && sigma2 == 0.0) throw InputDomainError("NoiseModel: a learnable sigma2 must start > 0");
}

double gaussian_nll(double residual, double sigma2) {
    if (sigma2 < 0.0) throw InputDomainError("gaussian_nll: sigma2 must be >= 0");
    if (sigma2 == 0.0) {
        if (residual == 0.0) return 0.0;
        throw NumericalError("gaussian_nll: zero noise variance with a nonzero residual (degenerate likelihood)",
                             residual);
    }
    constexpr double two_pi = 6.283185307179586;
    return 0.5 * std::log(two_pi * sigma2) + residual * residual / (2.0 * sigma2);
}

DirectObservation::DirectObservation(std::vector<std::vector<double>> inputs, std::vector<double> targets)
    : inputs_(std::move(inputs)), targets_(std::move(targets)) {
    if (inputs_.size() != targets_.size())
        throw InputDomainError("DirectObservation: inputs and targets differ in length");
    if (inputs_.empty()) throw InputDomainError("DirectObservation: empty dataset");
}

Observation DirectObservation::observe(std::size_t, std::span<const double> output, bool need_gradient) const {
    Observation o;
    o.value = output[0];
    if (need_gradient) {
        o.d_output.assign(output.size(), 0.0);
        o.d_output[0] = 1.0;
    }
    return o;
}

void OptimizerSettings::validate() const {
    if (!(learning_rate > 0.0)) throw InputDomainError("optimizer: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InputDomainError("optimizer: momentum must be in [0,1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0))
        throw InputDomainError("optimizer: invalid Adam constants");
    if (batch_size == 0) throw InputDomainError("optimizer: batch_size must be > 0");
    if (epochs < 1) throw InputDomainError("optimizer: epochs must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor <= 1.0))
        throw InputDomainError("optimizer: plateau_factor must be in (0,1]");
    if (plateau_patience < 1) throw InputDomainError("optimizer: plateau_patience must be >= 1");
    if (!(grad_clip >= 0.0)) throw InputDomainError("optimizer: grad_clip must be >= 0");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
    if (s == "adam") return OptimizerKind::adam;
    throw InputDomainError(fmt::format("unknown optimizer '{}'", s));
}

Optimizer::Optimizer(std::size_t n_params, const OptimizerSettings& settings)
    : settings_(settings), velocity_(n_params, 0.0),
      second_(settings.kind == OptimizerKind::adam ? n_params : 0, 0.0), lr_(settings.learning_rate),
      best_(std::numeric_limits<double>::infinity()) {
    settings_.validate();
}

void Optimizer::step(std::span<double> params, std::span<double> grad) {
    if (settings_.grad_clip > 0.0) {
        double sq = 0.0;
        for (double g : grad) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > settings_.grad_clip)
            for (double& g : grad) g *= settings_.grad_clip / norm;
    }
    if (settings_.kind == OptimizerKind::adam) {
        ++steps_;
        const double b1 = settings_.momentum, b2 = settings_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity_[i] = b1 * velocity_[i] + (1.0 - b1) * grad[i];
            second_[i] = b2 * second_[i] + (1.0 - b2) * grad[i] * grad[i];
            params[i] -= lr_ * (velocity_[i] / c1) / (std::sqrt(second_[i] / c2) + settings_.adam_epsilon);
        }
        return;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = settings_.momentum * velocity_[i] - lr_ * grad[i];
        params[i] += velocity_[i];
    }
}

bool Optimizer::end_epoch(double loss) {
    if (loss < best_ - settings_.plateau_tolerance * std::abs(best_) || !std::isfinite(best_)) {
        best_ = loss;
        stale_ = 0;
        return false;
    }
    if (++stale_ < settings_.plateau_patience) return false;
    stale_ = 0;
    const double next = std::max(lr_ * settings_.plateau_factor, settings_.min_learning_rate);
    const bool reduced = next < lr_;
    lr_ = next;
    return reduced;
}

Moments predictive_moments(std::span<const double> samples, double sigma2) {
    if (samples.empty()) throw InputDomainError("predictive_moments: no samples");
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (double x : samples) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    return {mean, sigma2 + m2 / static_cast<double>(n)};
}

} // namespace hybridflow::bnn
