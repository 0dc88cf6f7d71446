#include <cmath>

#include <fmt/format.h>

#include "hybridflow/bnn.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/kernels.hpp"
#include "hybridflow/parallel.hpp"
#include "training.hpp"

namespace hybridflow::bnn {

double DropoutNet::weight_decay(std::size_t n_data) const {
    if (n_data == 0) throw InputDomainError("weight_decay: empty dataset");
    return (1.0 - p_mc) / (2.0 * static_cast<double>(n_data));
}

double mc_dropout_loss(const DropoutNet& net, const ObservationModel& data, std::span<const std::size_t> batch,
                       std::span<const DropoutMask> masks, std::size_t n_data, std::vector<double>* grad,
                       double* grad_log_sigma2, unsigned threads) {
    if (batch.empty()) throw InputDomainError("mc_dropout_loss: empty batch");
    if (masks.size() != batch.size()) throw InputDomainError("mc_dropout_loss: one mask per example is required");
    const std::size_t n = net.arch.n_params();
    const double sigma2 = net.noise.sigma2;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    std::vector<double> nll(batch.size()), d_ls(batch.size());
    std::vector<std::vector<double>> per_example(grad ? batch.size() : 0);
    parallel_for(
        batch.size(),
        [&](std::size_t k) {
            ForwardCache cache;
            const auto out = forward(net.arch, net.params, data.input(batch[k]), &masks[k], grad ? &cache : nullptr);
            const auto obs = data.observe(batch[k], out, grad != nullptr);
            const auto t = detail::nll_terms(obs.value, data.target(batch[k]), sigma2);
            nll[k] = t.nll;
            d_ls[k] = t.d_log_sigma2;
            if (grad) {
                auto& g = per_example[k];
                g.assign(n, 0.0);
                std::vector<double> upstream(obs.d_output.size());
                for (std::size_t j = 0; j < upstream.size(); ++j) upstream[j] = t.d_value * inv_b * obs.d_output[j];
                backprop(net.arch, net.params, cache, upstream, g);
            }
        },
        threads);

    // Summation in batch order keeps the result independent of scheduling.
    double loss = 0.0, dls = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        loss += nll[k] * inv_b;
        dls += d_ls[k] * inv_b;
    }
    const double lambda = net.weight_decay(n_data);
    const auto indicator = net.arch.weight_indicator();
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += indicator[i] * net.params[i] * net.params[i];
    loss += lambda * sq;

    if (grad) {
        grad->assign(n, 0.0);
        const auto& kern = kernels::active();
        for (const auto& g : per_example) kern.axpy(1.0, g.data(), grad->data(), n);
        for (std::size_t i = 0; i < n; ++i) (*grad)[i] += 2.0 * lambda * indicator[i] * net.params[i];
    }
    if (grad_log_sigma2) *grad_log_sigma2 = dls;
    return loss;
}

DropoutNet mc_dropout_train(const MLPArchitecture& arch, const ObservationModel& data,
                            const McDropoutSettings& settings, std::uint64_t seed, TrainTrace* trace,
                            const EpochCallback& on_epoch) {
    arch.validate();
    settings.noise.validate();
    settings.optimizer.validate();
    if (!(settings.p_mc >= 0.0 && settings.p_mc < 1.0))
        throw InputDomainError(fmt::format("mc_dropout_train: p_mc={} outside [0,1)", settings.p_mc));
    const std::size_t n_data = data.size();
    if (n_data == 0) throw InputDomainError("mc_dropout_train: empty dataset");

    DropoutNet net;
    net.arch = arch;
    net.p_mc = settings.p_mc;
    net.noise = settings.noise;
    net.seed = seed;
    Rng init_rng = make_rng(seed, 1);
    net.params = he_init(arch, init_rng, settings.init_output_scale);

    const auto& opt = settings.optimizer;
    Optimizer sgd(arch.n_params() + 1, opt);
    std::vector<double> theta(net.params);
    theta.push_back(std::log(std::max(net.noise.sigma2, 1e-300)));
    TrainTrace local;
    TrainTrace& tr = trace ? *trace : local;

    std::vector<double> grad;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const auto order = detail::epoch_order(n_data, seed, epoch);
        const std::uint64_t mask_seed = split_seed(split_seed(seed, 2), static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        tr.learning_rate.push_back(sgd.learning_rate());
        for (std::size_t start = 0; start < n_data; start += opt.batch_size) {
            const std::size_t end = std::min(n_data, start + opt.batch_size);
            std::span<const std::size_t> batch(order.data() + start, end - start);
            std::vector<DropoutMask> masks;
            masks.reserve(batch.size());
            for (std::size_t idx : batch) {
                Rng r = make_rng(mask_seed, idx);
                masks.push_back(sample_mask(arch, net.p_mc, r));
            }
            double g_ls = 0.0;
            const double loss = mc_dropout_loss(net, data, batch, masks, n_data, &grad, &g_ls, opt.threads);
            detail::check_finite(loss, tr, epoch, "mc_dropout_train");
            epoch_loss += loss * static_cast<double>(batch.size());
            grad.push_back(net.noise.learnable ? g_ls : 0.0);
            sgd.step(theta, grad);
            std::copy(theta.begin(), theta.end() - 1, net.params.begin());
            if (net.noise.learnable) net.noise.sigma2 = std::exp(theta.back());
        }
        epoch_loss /= static_cast<double>(n_data);
        detail::check_finite(epoch_loss, tr, epoch, "mc_dropout_train");
        tr.loss.push_back(epoch_loss);
        sgd.end_epoch(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return net;
}

DropoutMask prediction_mask(const DropoutNet& net, std::uint64_t seed, std::size_t t) {
    Rng r = make_rng(seed, t);
    return sample_mask(net.arch, net.p_mc, r);
}

PredictiveSummary mc_dropout_predict(const DropoutNet& net, std::span<const double> input, std::size_t T,
                                     const NoiseModel& noise, std::uint64_t seed) {
    if (T < 2) throw InputDomainError("mc_dropout_predict: T must be >= 2");
    noise.validate();
    PredictiveSummary s;
    s.samples.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto mask = prediction_mask(net, seed, t);
        s.samples[t] = forward(net.arch, net.params, input, &mask);
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

PriorInit init_prior_from_dropout(const DropoutNet& net, std::size_t n_mask_samples, double inflation,
                                  double floor, std::uint64_t seed) {
    if (n_mask_samples < 2) throw InputDomainError("init_prior_from_dropout: n_mask_samples must be >= 2");
    if (!(inflation > 0.0) || !(floor > 0.0))
        throw InputDomainError("init_prior_from_dropout: inflation and floor must be > 0");
    const auto& arch = net.arch;
    const std::size_t n = arch.n_params();
    std::vector<double> mean(n, 0.0), m2(n, 0.0);
    std::vector<double> w(n);
    for (std::size_t s = 0; s < n_mask_samples; ++s) {
        Rng r = make_rng(seed, s);
        const auto mask = sample_mask(arch, net.p_mc, r);
        w = net.params;
        // A dropped hidden unit removes the weights leaving it.
        for (std::size_t l = 1; l < arch.n_layers(); ++l) {
            const std::size_t rows = arch.layer_sizes[l + 1], cols = arch.layer_sizes[l];
            double* wl = w.data() + arch.weight_offset(l);
            for (std::size_t rr = 0; rr < rows; ++rr)
                for (std::size_t c = 0; c < cols; ++c) wl[rr * cols + c] *= mask.keep[l - 1][c];
        }
        const double count = static_cast<double>(s + 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = w[i] - mean[i];
            mean[i] += d / count;
            m2[i] += d * (w[i] - mean[i]);
        }
    }
    std::vector<double> floored(n), prior_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        floored[i] = std::max(std::sqrt(m2[i] / static_cast<double>(n_mask_samples)), floor);
        prior_std[i] = floored[i] * inflation;
    }
    PriorInit out;
    out.prior.mean = mean;
    out.prior.std = prior_std;
    out.posterior = VariationalPosterior::from_mean_std(mean, floored);
    return out;
}

} // namespace hybridflow::bnn
