#include <cmath>

#include <fmt/format.h>

#include "hybridflow/bnn.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/kernels.hpp"
#include "hybridflow/parallel.hpp"
#include "training.hpp"

namespace hybridflow::bnn {

namespace {

constexpr double log_two_pi = 1.8378770664093453;

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
    if (!(y > 0.0)) throw InputDomainError("softplus_inverse: argument must be > 0");
    return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

void GaussianPrior::validate(std::size_t n_params) const {
    if (mean.size() != n_params || std.size() != n_params)
        throw InputDomainError(fmt::format("GaussianPrior: expected {} entries, got {}/{}", n_params, mean.size(),
                                           std.size()));
    for (std::size_t i = 0; i < std.size(); ++i)
        if (!(std[i] > 0.0) || !std::isfinite(std[i]))
            throw InputDomainError(fmt::format("GaussianPrior: std[{}] = {} (degenerate prior)", i, std[i]));
}

GaussianPrior GaussianPrior::shared(std::size_t n_params, double mean, double std) {
    GaussianPrior p{std::vector<double>(n_params, mean), std::vector<double>(n_params, std)};
    p.validate(n_params);
    return p;
}

std::vector<double> VariationalPosterior::sigma() const {
    std::vector<double> s(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) s[i] = softplus(rho[i]);
    return s;
}

void VariationalPosterior::validate(std::size_t n_params) const {
    if (mu.size() != n_params || rho.size() != n_params)
        throw InputDomainError(fmt::format("VariationalPosterior: expected {} entries, got {}/{}", n_params,
                                           mu.size(), rho.size()));
    for (double r : rho)
        if (!std::isfinite(r) || !(softplus(r) > 0.0))
            throw InputDomainError("VariationalPosterior: every sigma must be > 0");
}

VariationalPosterior VariationalPosterior::from_mean_std(std::span<const double> mean, std::span<const double> std) {
    if (mean.size() != std.size()) throw InputDomainError("from_mean_std: size mismatch");
    VariationalPosterior q;
    q.mu.assign(mean.begin(), mean.end());
    q.rho.resize(std.size());
    for (std::size_t i = 0; i < std.size(); ++i) q.rho[i] = softplus_inverse(std[i]);
    return q;
}

WeightSample bbp_sample(const VariationalPosterior& posterior, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    WeightSample s;
    s.eps.resize(posterior.mu.size());
    s.w.resize(posterior.mu.size());
    for (std::size_t i = 0; i < s.w.size(); ++i) {
        s.eps[i] = n01(rng);
        s.w[i] = posterior.mu[i] + softplus(posterior.rho[i]) * s.eps[i];
    }
    return s;
}

WeightSample bbp_sample(const VariationalPosterior& posterior, std::uint64_t seed) {
    Rng rng(seed);
    return bbp_sample(posterior, rng);
}

double log_gaussian(double x, double mean, double std) {
    const double z = (x - mean) / std;
    return -0.5 * log_two_pi - std::log(std) - 0.5 * z * z;
}

double kl_divergence(const VariationalPosterior& posterior, const GaussianPrior& prior) {
    prior.validate(posterior.mu.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < posterior.mu.size(); ++i) {
        const double sq = softplus(posterior.rho[i]);
        const double sp = prior.std[i];
        const double d = posterior.mu[i] - prior.mean[i];
        kl += std::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
    }
    return kl;
}

BbpLossTerms bbp_loss(const VariationalPosterior& posterior, const GaussianPrior& prior,
                      std::span<const WeightSample> samples, const MLPArchitecture& arch,
                      const ObservationModel& data, std::span<const std::size_t> batch, std::size_t n_data,
                      const NoiseModel& noise, std::vector<double>* grad_mu, std::vector<double>* grad_rho,
                      unsigned threads) {
    const std::size_t n = arch.n_params();
    posterior.validate(n);
    prior.validate(n);
    if (samples.empty()) throw InputDomainError("bbp_loss: no weight samples");
    if (batch.empty()) throw InputDomainError("bbp_loss: empty batch");
    if (n_data == 0) throw InputDomainError("bbp_loss: n_data must be > 0");
    const bool want_grad = grad_mu != nullptr || grad_rho != nullptr;
    const double c = 1.0 / static_cast<double>(n_data);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double inv_s = 1.0 / static_cast<double>(samples.size());
    const auto sigma = posterior.sigma();
    const auto& kern = kernels::active();

    BbpLossTerms terms;
    std::vector<double> gmu(want_grad ? n : 0, 0.0), grho(want_grad ? n : 0, 0.0);
    std::vector<double> dw(n);
    for (const auto& s : samples) {
        if (s.w.size() != n || s.eps.size() != n) throw InputDomainError("bbp_loss: weight sample size mismatch");
        double log_q = 0.0, log_p = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            log_q += log_gaussian(s.w[i], posterior.mu[i], sigma[i]);
            log_p += log_gaussian(s.w[i], prior.mean[i], prior.std[i]);
        }

        std::vector<double> nll(batch.size());
        std::vector<std::vector<double>> per_example(want_grad ? batch.size() : 0);
        parallel_for(
            batch.size(),
            [&](std::size_t k) {
                ForwardCache cache;
                const auto out = forward(arch, s.w, data.input(batch[k]), nullptr, want_grad ? &cache : nullptr);
                const auto obs = data.observe(batch[k], out, want_grad);
                const auto t = detail::nll_terms(obs.value, data.target(batch[k]), noise.sigma2);
                nll[k] = t.nll;
                if (want_grad) {
                    auto& g = per_example[k];
                    g.assign(n, 0.0);
                    std::vector<double> upstream(obs.d_output.size());
                    for (std::size_t j = 0; j < upstream.size(); ++j)
                        upstream[j] = t.d_value * inv_b * obs.d_output[j];
                    backprop(arch, s.w, cache, upstream, g);
                }
            },
            threads);
        double nll_mean = 0.0;
        for (double v : nll) nll_mean += v * inv_b;

        terms.log_q += log_q * inv_s;
        terms.log_prior += log_p * inv_s;
        terms.nll += nll_mean * inv_s;

        if (want_grad) {
            std::fill(dw.begin(), dw.end(), 0.0);
            for (const auto& g : per_example) kern.axpy(1.0, g.data(), dw.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                // -log P contributes (w - m)/s^2; the log q terms through w and
                // through mu cancel, leaving -1/sigma on the sigma pathway.
                const double z = (s.w[i] - prior.mean[i]) / (prior.std[i] * prior.std[i]);
                const double d = dw[i] + c * z;
                const double ds = sigmoid(posterior.rho[i]);
                gmu[i] += d * inv_s;
                grho[i] += (d * s.eps[i] - c / sigma[i]) * ds * inv_s;
            }
        }
    }
    terms.total = c * (terms.log_q - terms.log_prior) + terms.nll;
    if (grad_mu) *grad_mu = std::move(gmu);
    if (grad_rho) *grad_rho = grho;
    return terms;
}

BbpNet bbp_train(const MLPArchitecture& arch, const ObservationModel& data, const GaussianPrior& prior,
                 const VariationalPosterior& init, const BbpSettings& settings, std::uint64_t seed,
                 TrainTrace* trace, const EpochCallback& on_epoch) {
    arch.validate();
    const std::size_t n = arch.n_params();
    prior.validate(n);
    init.validate(n);
    settings.noise.validate();
    settings.optimizer.validate();
    if (settings.n_samples < 1) throw InputDomainError("bbp_train: n_samples must be >= 1");
    const std::size_t n_data = data.size();
    if (n_data == 0) throw InputDomainError("bbp_train: empty dataset");

    BbpNet net{arch, init, prior, settings.noise, seed};
    const auto& opt = settings.optimizer;
    Optimizer sgd(2 * n, opt);
    std::vector<double> theta(2 * n);
    std::copy(init.mu.begin(), init.mu.end(), theta.begin());
    std::copy(init.rho.begin(), init.rho.end(), theta.begin() + static_cast<std::ptrdiff_t>(n));
    TrainTrace local;
    TrainTrace& tr = trace ? *trace : local;

    std::vector<double> gmu, grho, grad(2 * n);
    std::vector<WeightSample> samples(static_cast<std::size_t>(settings.n_samples));
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const auto order = detail::epoch_order(n_data, seed, epoch);
        const std::uint64_t epoch_seed = split_seed(split_seed(seed, 3), static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        tr.learning_rate.push_back(sgd.learning_rate());
        std::uint64_t batch_index = 0;
        for (std::size_t start = 0; start < n_data; start += opt.batch_size, ++batch_index) {
            const std::size_t end = std::min(n_data, start + opt.batch_size);
            std::span<const std::size_t> batch(order.data() + start, end - start);
            const std::uint64_t batch_seed = split_seed(epoch_seed, batch_index);
            for (std::size_t s = 0; s < samples.size(); ++s)
                samples[s] = bbp_sample(net.posterior, split_seed(batch_seed, s));
            const auto terms = bbp_loss(net.posterior, prior, samples, arch, data, batch, n_data, net.noise, &gmu,
                                        &grho, opt.threads);
            detail::check_finite(terms.total, tr, epoch, "bbp_train");
            epoch_loss += terms.total * static_cast<double>(batch.size());
            std::copy(gmu.begin(), gmu.end(), grad.begin());
            std::copy(grho.begin(), grho.end(), grad.begin() + static_cast<std::ptrdiff_t>(n));
            sgd.step(theta, grad);
            std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(n), net.posterior.mu.begin());
            std::copy(theta.begin() + static_cast<std::ptrdiff_t>(n), theta.end(), net.posterior.rho.begin());
        }
        epoch_loss /= static_cast<double>(n_data);
        detail::check_finite(epoch_loss, tr, epoch, "bbp_train");
        tr.loss.push_back(epoch_loss);
        sgd.end_epoch(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return net;
}

WeightSample prediction_weights(const BbpNet& net, std::uint64_t seed, std::size_t t) {
    return bbp_sample(net.posterior, split_seed(seed, t));
}

PredictiveSummary bbp_predict(const BbpNet& net, std::span<const double> input, std::size_t T,
                              const NoiseModel& noise, std::uint64_t seed) {
    if (T < 2) throw InputDomainError("bbp_predict: T must be >= 2");
    noise.validate();
    PredictiveSummary s;
    s.samples.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto w = prediction_weights(net, seed, t);
        s.samples[t] = forward(net.arch, w.w, input);
    }
    const std::size_t m = net.arch.output_size();
    s.mean.resize(m);
    s.variance.resize(m);
    std::vector<double> column(T);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t t = 0; t < T; ++t) column[t] = s.samples[t][j];
        const auto mom = predictive_moments(column, noise.sigma2);
        s.mean[j] = mom.mean;
        s.variance[j] = mom.variance;
    }
    return s;
}

} // namespace hybridflow::bnn
