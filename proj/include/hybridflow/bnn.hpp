#pragma once

// Small fully connected network with manual reverse mode, and two Bayesian
// training backends: MC dropout and Bayes by Backprop.
//
// Parameters live in one flat vector, layer by layer: the weight matrix
// (rows = outputs, row-major) followed by the bias vector.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hybridflow/rng.hpp"

namespace hybridflow::bnn {

enum class Activation { tanh, relu, identity };
enum class OutputLink { exp, identity };

const char* to_string(Activation a);
const char* to_string(OutputLink l);
Activation activation_from_string(const std::string& s);
OutputLink output_link_from_string(const std::string& s);

struct MLPArchitecture {
    std::vector<std::size_t> layer_sizes{10, 32, 32, 10};
    Activation activation = Activation::tanh;
    /// exp(clamp(x, +-link_clamp)): positive multiplicative correction, 1 at x = 0.
    OutputLink output_link = OutputLink::exp;
    double link_clamp = 4.0;

    void validate() const;
    std::size_t n_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t n_params() const;
    std::size_t weight_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const;
    /// 1 for weight-matrix entries, 0 for biases.
    std::vector<double> weight_indicator() const;
};

double apply_link(const MLPArchitecture& arch, double x);
double link_derivative(const MLPArchitecture& arch, double x);

using Params = std::vector<double>;

/// Keep flags (0 or 1) per hidden unit, one vector per hidden layer. A dropped
/// unit zeroes its outgoing connections; no rescaling is applied.
struct DropoutMask {
    std::vector<std::vector<double>> keep;
};

DropoutMask sample_mask(const MLPArchitecture& arch, double p_drop, Rng& rng);
DropoutMask keep_all_mask(const MLPArchitecture& arch);

struct ForwardCache {
    std::vector<std::vector<double>> pre;  // per layer, before activation / link
    std::vector<std::vector<double>> post; // post[0] = input; post[l+1] = output of layer l (masked)
    const DropoutMask* mask = nullptr;
};

/// Linked network outputs. Throws InputDomainError on shape mismatch.
std::vector<double> forward(const MLPArchitecture& arch, std::span<const double> params,
                            std::span<const double> input, const DropoutMask* mask = nullptr,
                            ForwardCache* cache = nullptr);

/// Accumulates d(upstream . output)/d params into grad, using the cache of a
/// forward pass with the same params.
void backprop(const MLPArchitecture& arch, std::span<const double> params, const ForwardCache& cache,
              std::span<const double> upstream, std::span<double> grad);

/// Convenience form: runs the forward pass and returns fresh gradients.
std::vector<double> backprop(const MLPArchitecture& arch, std::span<const double> params,
                             std::span<const double> input, std::span<const double> upstream,
                             const DropoutMask* mask = nullptr);

/// He-normal weights (std sqrt(2/fan_in)), zero biases; the last layer is
/// scaled by output_scale so an exp link starts close to 1.
Params he_init(const MLPArchitecture& arch, Rng& rng, double output_scale = 0.01);

// ---------------------------------------------------------------------------
// Likelihood and data
// ---------------------------------------------------------------------------

struct NoiseModel {
    double sigma2 = 1e-4; // variance of the (standardized) observation noise
    bool learnable = false;
    void validate() const;
};

/// 0.5 log(2 pi sigma2) + r^2 / (2 sigma2). sigma2 = 0 is accepted only with r = 0.
double gaussian_nll(double residual, double sigma2);

/// The scalar quantity the likelihood is placed on, as a function of the
/// network output for one example.
struct Observation {
    double value = 0.0;
    std::vector<double> d_output; // d value / d output; empty when not requested
};

class ObservationModel {
public:
    virtual ~ObservationModel() = default;
    virtual std::size_t size() const = 0;
    virtual std::span<const double> input(std::size_t i) const = 0;
    virtual double target(std::size_t i) const = 0;
    virtual Observation observe(std::size_t i, std::span<const double> output, bool need_gradient) const = 0;
};

/// Observation = output[0]; the plain regression setting.
class DirectObservation final : public ObservationModel {
public:
    DirectObservation(std::vector<std::vector<double>> inputs, std::vector<double> targets);
    std::size_t size() const override { return targets_.size(); }
    std::span<const double> input(std::size_t i) const override { return inputs_[i]; }
    double target(std::size_t i) const override { return targets_[i]; }
    Observation observe(std::size_t i, std::span<const double> output, bool need_gradient) const override;

private:
    std::vector<std::vector<double>> inputs_;
    std::vector<double> targets_;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

enum class OptimizerKind { sgd_momentum, adam };
const char* to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::sgd_momentum;
    double learning_rate = 1e-3;
    double momentum = 0.9; // also Adam's first-moment decay
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t batch_size = 64;
    int epochs = 100;
    /// Epochs without a relative improvement of plateau_tolerance before the step is scaled.
    int plateau_patience = 5;
    double plateau_factor = 0.5;
    double plateau_tolerance = 1e-3;
    double min_learning_rate = 1e-8;
    /// Rescale the batch gradient to at most this L2 norm; 0 disables.
    double grad_clip = 0.0;
    /// Workers for per-example evaluation inside a batch; 0 = hardware concurrency.
    unsigned threads = 1;
    void validate() const;
};

struct TrainTrace {
    std::vector<double> loss;          // mean loss per epoch
    std::vector<double> learning_rate; // step size used in each epoch
};

/// Called after each epoch with (epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// Gradient-descent stepper: heavy-ball momentum or Adam, with the plateau schedule.
class Optimizer {
public:
    Optimizer(std::size_t n_params, const OptimizerSettings& settings);
    void step(std::span<double> params, std::span<double> grad);
    /// Plateau schedule; returns true when the step size was reduced.
    bool end_epoch(double loss);
    double learning_rate() const { return lr_; }

private:
    OptimizerSettings settings_;
    std::vector<double> velocity_;
    std::vector<double> second_;
    long steps_ = 0;
    double lr_;
    double best_;
    int stale_ = 0;
};

// ---------------------------------------------------------------------------
// MC dropout
// ---------------------------------------------------------------------------

struct DropoutNet {
    MLPArchitecture arch;
    Params params;
    double p_mc = 0.1;
    NoiseModel noise;
    std::uint64_t seed = 0;

    /// (1 - p_mc) / (2 N)
    double weight_decay(std::size_t n_data) const;
};

struct McDropoutSettings {
    double p_mc = 0.1;
    NoiseModel noise;
    OptimizerSettings optimizer;
    double init_output_scale = 0.01;
};

/// Mean NLL over the batch plus the weight-decay penalty on weight matrices.
/// masks[k] belongs to batch[k]. When grad is given (size n_params) the
/// gradient is written there; grad_log_sigma2 receives d loss / d log sigma2.
double mc_dropout_loss(const DropoutNet& net, const ObservationModel& data, std::span<const std::size_t> batch,
                       std::span<const DropoutMask> masks, std::size_t n_data, std::vector<double>* grad = nullptr,
                       double* grad_log_sigma2 = nullptr, unsigned threads = 1);

DropoutNet mc_dropout_train(const MLPArchitecture& arch, const ObservationModel& data,
                            const McDropoutSettings& settings, std::uint64_t seed, TrainTrace* trace = nullptr,
                            const EpochCallback& on_epoch = {});

/// Moments of a set of scalar draws: mean and sigma2 + (1/T) sum y^2 - mean^2.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};
Moments predictive_moments(std::span<const double> samples, double sigma2);

struct PredictiveSummary {
    std::vector<double> mean;     // per output
    std::vector<double> variance; // per output, includes sigma2
    std::vector<std::vector<double>> samples; // samples[t][output]
};

/// Draw t uses the mask stream split_seed(seed, t), so draws can run in any order.
DropoutMask prediction_mask(const DropoutNet& net, std::uint64_t seed, std::size_t t);

PredictiveSummary mc_dropout_predict(const DropoutNet& net, std::span<const double> input, std::size_t T,
                                     const NoiseModel& noise, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bayes by Backprop
// ---------------------------------------------------------------------------

double softplus(double x);
double softplus_inverse(double y);

struct GaussianPrior {
    std::vector<double> mean;
    std::vector<double> std;
    void validate(std::size_t n_params) const;
    static GaussianPrior shared(std::size_t n_params, double mean, double std);
};

struct VariationalPosterior {
    std::vector<double> mu;
    std::vector<double> rho; // sigma = softplus(rho)
    std::vector<double> sigma() const;
    void validate(std::size_t n_params) const;
    static VariationalPosterior from_mean_std(std::span<const double> mean, std::span<const double> std);
};

struct WeightSample {
    Params w;
    std::vector<double> eps;
};

WeightSample bbp_sample(const VariationalPosterior& posterior, Rng& rng);
WeightSample bbp_sample(const VariationalPosterior& posterior, std::uint64_t seed);

double log_gaussian(double x, double mean, double std);
/// KL(q || prior) for diagonal Gaussians.
double kl_divergence(const VariationalPosterior& posterior, const GaussianPrior& prior);

struct BbpLossTerms {
    double log_q = 0.0;     // mean over samples of log q(w | theta)
    double log_prior = 0.0; // mean over samples of log P(w)
    double nll = 0.0;       // mean over samples of the batch-mean NLL
    double total = 0.0;     // (log_q - log_prior) / n_data + nll
};

/// Monte-Carlo free energy for one batch over the given weight samples, scaled
/// per data point. Gradients (if requested) are w.r.t. (mu, rho) through the
/// reparameterization w = mu + softplus(rho) eps with eps held fixed.
BbpLossTerms bbp_loss(const VariationalPosterior& posterior, const GaussianPrior& prior,
                      std::span<const WeightSample> samples, const MLPArchitecture& arch,
                      const ObservationModel& data, std::span<const std::size_t> batch, std::size_t n_data,
                      const NoiseModel& noise, std::vector<double>* grad_mu = nullptr,
                      std::vector<double>* grad_rho = nullptr, unsigned threads = 1);

struct BbpNet {
    MLPArchitecture arch;
    VariationalPosterior posterior;
    GaussianPrior prior;
    NoiseModel noise;
    std::uint64_t seed = 0;
};

struct BbpSettings {
    int n_samples = 3;
    NoiseModel noise;
    OptimizerSettings optimizer;
};

BbpNet bbp_train(const MLPArchitecture& arch, const ObservationModel& data, const GaussianPrior& prior,
                 const VariationalPosterior& init, const BbpSettings& settings, std::uint64_t seed,
                 TrainTrace* trace = nullptr, const EpochCallback& on_epoch = {});

/// Draw t uses the weight stream split_seed(seed, t).
WeightSample prediction_weights(const BbpNet& net, std::uint64_t seed, std::size_t t);

PredictiveSummary bbp_predict(const BbpNet& net, std::span<const double> input, std::size_t T,
                              const NoiseModel& noise, std::uint64_t seed);

struct PriorInit {
    GaussianPrior prior;
    VariationalPosterior posterior;
};

/// Empirical per-parameter mean/std of dropout-masked realizations of a
/// trained network (a dropped unit's outgoing weights count as 0). The std is
/// floored first, then multiplied by inflation.
PriorInit init_prior_from_dropout(const DropoutNet& net, std::size_t n_mask_samples, double inflation = 1.5,
                                  double floor = 0.01, std::uint64_t seed = 0);

} // namespace hybridflow::bnn
