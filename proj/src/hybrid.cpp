#include "hybridflow/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "hybridflow/errors.hpp"
#include "hybridflow/parallel.hpp"
#include "hybridflow/rng.hpp"

namespace hybridflow::hybrid {

flow::BoundaryConditions PhysicsSetup::at(double q_liq_std) const {
    flow::BoundaryConditions bc = base_bc;
    bc.q_liq_std = q_liq_std;
    return bc;
}

FeatureScaler FeatureScaler::fit(const std::vector<plant::DatasetRow>& train) {
    if (train.empty()) throw InputDomainError("FeatureScaler: empty training split");
    const std::size_t n = train.front().re_features.size();
    FeatureScaler s;
    s.mean.assign(n, 0.0);
    s.std.assign(n, 0.0);
    const auto count = static_cast<double>(train.size());
    double tm = 0.0;
    for (const auto& r : train) {
        if (r.re_features.size() != n) throw InputDomainError("FeatureScaler: rows differ in feature count");
        for (std::size_t i = 0; i < n; ++i) s.mean[i] += r.re_features[i] / count;
        tm += r.p_in_plant / count;
    }
    double tv = 0.0;
    for (const auto& r : train) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = r.re_features[i] - s.mean[i];
            s.std[i] += d * d / count;
        }
        tv += (r.p_in_plant - tm) * (r.p_in_plant - tm) / count;
    }
    for (auto& v : s.std) v = std::sqrt(v);
    s.target_mean = tm;
    s.target_std = std::sqrt(tv);
    // A single row (or identical rows) has no spread; fall back to unit scale.
    for (std::size_t i = 0; i < n; ++i)
        if (!(s.std[i] > 0.0)) s.std[i] = std::max(std::abs(s.mean[i]), 1.0);
    if (!(s.target_std > 0.0)) s.target_std = std::max(std::abs(tm), 1.0);
    return s;
}

std::vector<double> FeatureScaler::transform(const std::vector<double>& re) const {
    if (re.size() != mean.size())
        throw InputDomainError(fmt::format("FeatureScaler: {} features, fitted on {}", re.size(), mean.size()));
    std::vector<double> z(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) z[i] = (re[i] - mean[i]) / std[i];
    return z;
}

void FeatureScaler::validate(std::size_t n_features) const {
    if (mean.size() != n_features || std.size() != n_features)
        throw InputDomainError(fmt::format("FeatureScaler: expected {} features", n_features));
    for (double s : std)
        if (!(s > 0.0)) throw InputDomainError("FeatureScaler: every std must be > 0");
    if (!(target_std > 0.0)) throw InputDomainError("FeatureScaler: target std must be > 0");
}

const char* to_string(Backend b) { return b == Backend::bbp ? "bbp" : "mc"; }

Backend backend_from_string(const std::string& s) {
    if (s == "mc" || s == "mc_dropout") return Backend::mc_dropout;
    if (s == "bbp") return Backend::bbp;
    throw InputDomainError(fmt::format("unknown backend '{}' (expected mc or bbp)", s));
}

const bnn::MLPArchitecture& HybridModel::arch() const {
    return backend == Backend::bbp ? bbp.arch : dropout.arch;
}

void HybridModel::validate() const {
    physics.pipe.validate();
    const auto& a = arch();
    a.validate();
    const auto n = static_cast<std::size_t>(physics.pipe.n_cells);
    if (a.input_size() != n || a.output_size() != n)
        throw InputDomainError(fmt::format("hybrid model: network is {} -> {} but the pipe has {} cells",
                                           a.input_size(), a.output_size(), n));
    scaler.validate(n);
    noise.validate();
    if (backend == Backend::mc_dropout) {
        if (dropout.params.size() != a.n_params()) throw InputDomainError("hybrid model: parameter count mismatch");
    } else {
        bbp.posterior.validate(a.n_params());
        bbp.prior.validate(a.n_params());
    }
}

flow::GridState baseline_state(const PhysicsSetup& physics, const flow::BoundaryConditions& bc) {
    return flow::simple_solve(physics.pipe, bc, physics.fluid, physics.solver);
}

std::vector<double> extract_features(const PhysicsSetup& physics, const flow::BoundaryConditions& bc) {
    return baseline_state(physics, bc).re_mix;
}

flow::FrictionVector friction_from_output(const flow::FrictionVector& baseline, const std::vector<double>& output) {
    if (output.size() != baseline.xi.size())
        throw InputDomainError(fmt::format("friction_from_output: {} outputs for {} cells", output.size(),
                                           baseline.xi.size()));
    flow::FrictionVector f;
    f.xi.resize(output.size());
    for (std::size_t i = 0; i < output.size(); ++i) f.xi[i] = baseline.xi[i] * output[i];
    return f;
}

flow::FrictionVector friction_from_network(const HybridModel& model, const std::vector<double>& scaled_features,
                                           const flow::FrictionVector& baseline, std::span<const double> weights,
                                           const bnn::DropoutMask* mask) {
    const auto out = bnn::forward(model.arch(), weights, scaled_features, mask);
    return friction_from_output(baseline, out);
}

flow::GridState hybrid_solve(const PhysicsSetup& physics, const flow::BoundaryConditions& bc,
                             const flow::FrictionVector& friction, const flow::GridState* warm_start) {
    try {
        return flow::simple_solve(physics.pipe, bc, physics.fluid, physics.solver, &friction, warm_start);
    } catch (const NumericalError& e) {
        std::string xi;
        for (double v : friction.xi) xi += fmt::format("{}{:.6g}", xi.empty() ? "" : " ", v);
        throw NumericalError(fmt::format("{} (friction: {})", e.what(), xi), e.residual(), e.trace());
    }
}

double hybrid_forward(const PhysicsSetup& physics, const flow::BoundaryConditions& bc,
                      const flow::FrictionVector& friction, const flow::GridState* warm_start) {
    return flow::inlet_pressure(hybrid_solve(physics, bc, friction, warm_start));
}

void SensitivitySettings::validate() const {
    if (!(rel_step > 0.0 && rel_step < 0.1)) throw InputDomainError("sensitivity: rel_step must be in (0, 0.1)");
    if (!(tol_pressure > 0.0)) throw InputDomainError("sensitivity: tol_pressure must be > 0");
    if (!(relax > 0.0 && relax <= 1.0)) throw InputDomainError("sensitivity: relax must be in (0, 1]");
}

std::vector<double> pressure_sensitivity(const PhysicsSetup& physics, const flow::BoundaryConditions& bc,
                                         const flow::FrictionVector& friction, const flow::GridState& base,
                                         const SensitivitySettings& settings) {
    settings.validate();
    const std::size_t n = friction.xi.size();
    if (!base.converged) throw InputDomainError("pressure_sensitivity: base state is not converged");
    PhysicsSetup tight = physics;
    tight.solver.tol_pressure = settings.tol_pressure;
    tight.solver.relax = settings.relax;
    std::vector<double> grad(n);
    flow::FrictionVector f = friction;
    for (std::size_t i = 0; i < n; ++i) {
        const double h = settings.rel_step * friction.xi[i];
        double p[2];
        for (int side = 0; side < 2; ++side) {
            f.xi[i] = friction.xi[i] + (side == 0 ? h : -h);
            try {
                p[side] = flow::inlet_pressure(flow::simple_solve(tight.pipe, bc, tight.fluid, tight.solver, &f, &base));
            } catch (const NumericalError& e) {
                throw NumericalError(fmt::format("pressure_sensitivity: perturbed solve failed in cell {}: {}", i,
                                                 e.what()),
                                     e.residual(), e.trace());
            }
        }
        f.xi[i] = friction.xi[i];
        grad[i] = (p[0] - p[1]) / (2.0 * h);
    }
    return grad;
}

HybridObservation::HybridObservation(const PhysicsSetup& physics, const bnn::MLPArchitecture& arch,
                                     const FeatureScaler& scaler, const std::vector<plant::DatasetRow>& rows,
                                     const SensitivitySettings& sensitivity, unsigned threads)
    : physics_(physics), arch_(arch), scaler_(scaler), sensitivity_(sensitivity), rows_(rows) {
    if (rows_.empty()) throw InputDomainError("HybridObservation: no rows");
    sensitivity_.validate();
    const auto n = static_cast<std::size_t>(physics_.pipe.n_cells);
    if (arch_.input_size() != n || arch_.output_size() != n)
        throw InputDomainError("HybridObservation: network widths must equal the number of cells");
    inputs_.resize(rows_.size());
    targets_.resize(rows_.size());
    baselines_.resize(rows_.size());
    solves_.assign(rows_.size(), 0);
    parallel_for(
        rows_.size(),
        [&](std::size_t i) {
            baselines_[i] = baseline_state(physics_, physics_.at(rows_[i].q_liq_std));
            inputs_[i] = scaler_.transform(rows_[i].re_features);
            targets_[i] = scaler_.scale_target(rows_[i].p_in_plant);
        },
        threads);
}

bnn::Observation HybridObservation::observe(std::size_t i, std::span<const double> output, bool need_gradient) const {
    const auto bc = physics_.at(rows_[i].q_liq_std);
    const auto& base = baselines_[i];
    const auto f = friction_from_output(base.friction, {output.begin(), output.end()});
    const auto state = hybrid_solve(physics_, bc, f, &base);
    ++solves_[i];
    bnn::Observation o;
    o.value = scaler_.scale_target(flow::inlet_pressure(state));
    if (!need_gradient) return o;

    const auto dp = pressure_sensitivity(physics_, bc, f, state, sensitivity_);
    solves_[i] += 2 * dp.size();
    // output already carries the link; d xi_i / d output_i = baseline_i.
    o.d_output.resize(output.size());
    for (std::size_t k = 0; k < output.size(); ++k) o.d_output[k] = dp[k] * base.friction.xi[k] / scaler_.target_std;
    return o;
}

std::size_t HybridObservation::solve_count() const {
    return std::accumulate(solves_.begin(), solves_.end(), std::size_t{0});
}

HybridModel train_hybrid(const PhysicsSetup& physics, const std::vector<plant::DatasetRow>& train_rows,
                         Backend backend, const TrainSettings& settings, std::uint64_t seed,
                         const bnn::DropoutNet* prior_source, const TrainLog& log) {
    if (train_rows.empty()) throw InputDomainError("train_hybrid: empty training split");
    HybridModel model;
    model.physics = physics;
    model.backend = backend;
    model.seed = seed;
    model.scaler = FeatureScaler::fit(train_rows);
    const HybridObservation data(physics, settings.arch, model.scaler, train_rows, settings.sensitivity,
                                 settings.threads);
    auto say = [&](const std::string& s) {
        if (log) log(s);
    };
    auto epoch_logger = [&](const char* stage) {
        return [&, stage](int epoch, double loss) {
            say(fmt::format("{} epoch {} loss {:.6g} solves {}", stage, epoch + 1, loss, data.solve_count()));
        };
    };

    if (backend == Backend::mc_dropout) {
        model.dropout = bnn::mc_dropout_train(settings.arch, data, settings.dropout, seed, nullptr,
                                              epoch_logger("mc"));
        model.noise = model.dropout.noise;
        model.bbp.arch = settings.arch;
        return model;
    }

    bnn::DropoutNet stage;
    if (prior_source) {
        if (prior_source->arch.layer_sizes != settings.arch.layer_sizes)
            throw InputDomainError("train_hybrid: prior source network has a different architecture");
        stage = *prior_source;
        say("bbp prior from the supplied dropout network");
    } else {
        say("bbp prior: running the MC dropout pre-stage");
        stage = bnn::mc_dropout_train(settings.arch, data, settings.dropout, split_seed(seed, 11), nullptr,
                                      epoch_logger("pre-stage"));
    }
    const auto init = bnn::init_prior_from_dropout(stage, settings.prior_mask_samples, settings.prior_inflation,
                                                   settings.prior_floor, split_seed(seed, 12));
    model.bbp = bnn::bbp_train(settings.arch, data, init.prior, init.posterior, settings.bbp, seed, nullptr,
                               epoch_logger("bbp"));
    model.noise = model.bbp.noise;
    model.dropout.arch = settings.arch;
    return model;
}

PredictionDistribution predict(const HybridModel& model, const flow::BoundaryConditions& bc, std::size_t T,
                               std::uint64_t seed, unsigned threads) {
    return predict(model, bc, baseline_state(model.physics, bc), T, seed, threads);
}

PredictionDistribution predict(const HybridModel& model, const flow::BoundaryConditions& bc,
                               const flow::GridState& baseline, std::size_t T, std::uint64_t seed,
                               unsigned threads) {
    if (T < 2) throw InputDomainError("predict: T must be >= 2");
    const auto features = model.scaler.transform(baseline.re_mix);
    std::vector<double> p(T, 0.0);
    std::vector<char> ok(T, 0);
    parallel_for(
        T,
        [&](std::size_t t) {
            flow::FrictionVector f;
            if (model.backend == Backend::mc_dropout) {
                const auto mask = bnn::prediction_mask(model.dropout, seed, t);
                f = friction_from_network(model, features, baseline.friction, model.dropout.params, &mask);
            } else {
                const auto w = bnn::prediction_weights(model.bbp, seed, t);
                f = friction_from_network(model, features, baseline.friction, w.w);
            }
            try {
                p[t] = hybrid_forward(model.physics, bc, f, &baseline);
                ok[t] = 1;
                return;
            } catch (const NumericalError&) {
            }
            try {
                PhysicsSetup retry = model.physics;
                retry.solver.max_iter *= 2;
                p[t] = hybrid_forward(retry, bc, f, nullptr);
                ok[t] = 1;
            } catch (const NumericalError&) {
            }
        },
        threads);

    PredictionDistribution d;
    for (std::size_t t = 0; t < T; ++t) {
        if (ok[t])
            d.samples.push_back(p[t]);
        else
            ++d.excluded;
    }
    if (static_cast<double>(d.excluded) > 0.05 * static_cast<double>(T) || d.samples.size() < 2)
        throw NumericalError(fmt::format("predict: {} of {} passes failed at q_liq = {}", d.excluded, T,
                                         bc.q_liq_std));
    const double s2 = model.noise.sigma2 * model.scaler.target_std * model.scaler.target_std;
    const auto m = bnn::predictive_moments(d.samples, s2);
    d.mean = m.mean;
    d.variance = m.variance;
    d.ci95_half_width = 1.96 * std::sqrt(d.variance);
    return d;
}

double mape(const std::vector<double>& predicted, const std::vector<double>& target) {
    if (predicted.size() != target.size() || target.empty())
        throw InputDomainError("mape: need equally sized, non-empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 0.0) throw InputDomainError("mape: zero target");
        s += std::abs((predicted[i] - target[i]) / target[i]);
    }
    return 100.0 * s / static_cast<double>(target.size());
}

std::vector<Band> case_bands(int test_case) {
    if (test_case == 1) return {{"low", 0.05, 0.15}, {"high", 0.15, 0.25}};
    if (test_case == 2) return {{"low", 0.05, 0.15}, {"high", 0.25, 0.30}};
    throw InputDomainError(fmt::format("unknown test case {} (expected 1 or 2)", test_case));
}

const BandStats& EvalReport::band(const std::string& name) const {
    for (const auto& b : bands)
        if (b.name == name) return b;
    throw InputDomainError("EvalReport: no band '" + name + "'");
}

namespace {

std::string band_of(const std::vector<Band>& bands, double q) {
    // Ranges share their boundary; the upper band owns it.
    for (auto it = bands.rbegin(); it != bands.rend(); ++it)
        if (q >= it->q_lo && q <= it->q_hi) return it->name;
    throw InputDomainError(fmt::format("evaluate: q_liq = {} is outside every band", q));
}

BandStats summarize(const std::string& name, const std::vector<const RowRecord*>& rows) {
    BandStats b;
    b.name = name;
    b.n = rows.size();
    if (rows.empty()) return b;
    std::vector<double> mean, untuned, target;
    double ci = 0.0;
    for (const auto* r : rows) {
        mean.push_back(r->mean);
        untuned.push_back(r->untuned);
        target.push_back(r->target);
        ci += r->ci95_half_width;
    }
    b.mape_tuned = mape(mean, target);
    b.mape_untuned = mape(untuned, target);
    b.ci95_mean = ci / static_cast<double>(rows.size());
    return b;
}

} // namespace

EvalReport evaluate(const HybridModel& model, const std::vector<plant::DatasetRow>& test_rows, int test_case,
                    std::size_t replications, std::size_t T, std::uint64_t seed, unsigned threads) {
    if (test_rows.empty()) throw InputDomainError("evaluate: empty test split");
    if (replications < 1) throw InputDomainError("evaluate: replications must be >= 1");
    const auto bands = case_bands(test_case);
    EvalReport rep;
    rep.backend = to_string(model.backend);
    rep.test_case = test_case;
    rep.replications = replications;
    rep.passes = T;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
        const auto& row = test_rows[i];
        const auto bc = model.physics.at(row.q_liq_std);
        const auto base = baseline_state(model.physics, bc);
        const double untuned = flow::inlet_pressure(base);
        const std::string band = band_of(bands, row.q_liq_std);
        for (std::size_t r = 0; r < replications; ++r) {
            const auto d = predict(model, bc, base, T, split_seed(split_seed(seed, i), r), threads);
            RowRecord rec;
            rec.q_liq_std = row.q_liq_std;
            rec.target = row.p_in_plant;
            rec.mean = d.mean;
            rec.ci95_half_width = d.ci95_half_width;
            rec.untuned = untuned;
            rec.replication = static_cast<int>(r);
            rec.excluded = d.excluded;
            rec.band = band;
            rep.excluded_total += d.excluded;
            rep.records.push_back(rec);
        }
    }
    std::vector<const RowRecord*> all;
    for (const auto& b : bands) {
        std::vector<const RowRecord*> in;
        for (const auto& r : rep.records)
            if (r.band == b.name) in.push_back(&r);
        rep.bands.push_back(summarize(b.name, in));
    }
    for (const auto& r : rep.records) all.push_back(&r);
    rep.bands.push_back(summarize("entire", all));
    return rep;
}

void write_report_table(std::ostream& out, const EvalReport& report) {
    out << fmt::format("Case {} - backend {} ({} replications x {} passes)\n", report.test_case, report.backend,
                       report.replications, report.passes);
    out << fmt::format("{:<10} {:>6} {:>14} {:>14} {:>14}\n", "band", "rows", "MAPE untuned", "MAPE tuned",
                       "CI95 [bar]");
    for (const auto& b : report.bands) {
        std::string label = b.name;
        if (!label.empty()) label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
        out << fmt::format("{:<10} {:>6} {:>13.2f}% {:>13.2f}% {:>14.3f}\n", label, b.n, b.mape_untuned,
                           b.mape_tuned, b.ci95_mean / 1e5);
    }
    if (report.excluded_total > 0) out << fmt::format("excluded passes: {}\n", report.excluded_total);
}

void write_trace_csv(std::ostream& out, const EvalReport& report) {
    out << "q_liq,target,mean,ci95_low,ci95_high,backend,case\n";
    for (const auto& r : report.records)
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", r.q_liq_std, r.target, r.mean,
                           r.mean - r.ci95_half_width, r.mean + r.ci95_half_width, report.backend,
                           report.test_case);
}

} // namespace hybridflow::hybrid
