// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criteria 5-8 run the full default experiment twice (several minutes).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "hybridflow/bnn.hpp"
#include "hybridflow/config.hpp"
#include "hybridflow/drift_flux.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/hybrid.hpp"
#include "hybridflow/plant.hpp"
#include "hybridflow/repro.hpp"
#include "hybridflow/rng.hpp"
#include "support/toy_problem.hpp"

using namespace hybridflow;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    std::vector<std::string> notes; // printed indented under the verdict
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

flow::BoundaryConditions at(double q) {
    flow::BoundaryConditions bc;
    bc.q_liq_std = q;
    return bc;
}

Outcome physics_conservation() {
    const config::RunConfig cfg;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> q(0.05, 0.30);
    const double tol = cfg.solver.tol_pressure / cfg.pipe.dx();
    double worst_mass = 0.0, worst_mom = 0.0, slowest = 0.0;
    int unconverged = 0;
    for (int k = 0; k < 100; ++k) {
        const auto t0 = Clock::now();
        const auto s = flow::simple_solve(cfg.pipe, at(q(rng)), cfg.fluid, cfg.solver);
        slowest = std::max(slowest, seconds_since(t0));
        if (!s.converged) {
            ++unconverged;
            continue;
        }
        const double total = s.mass_flow_gas[0] + s.mass_flow_liq[0];
        for (std::size_t f = 0; f < s.mass_flow_gas.size(); ++f)
            worst_mass = std::max(worst_mass, std::abs(s.mass_flow_gas[f] + s.mass_flow_liq[f] - total) / total);
        for (double r : flow::momentum_residuals(s, cfg.pipe)) worst_mom = std::max(worst_mom, std::abs(r));
    }
    Outcome o;
    o.pass = unconverged == 0 && worst_mass <= 1e-8 && worst_mom <= tol && slowest < 1.0;
    o.detail = fmt::format("100 solves, {} unconverged; mass flux {:.2e} rel (<= 1e-8); momentum {:.3g} Pa/m "
                           "(<= {:.3g}); slowest {:.4f} s (< 1 s)",
                           unconverged, worst_mass, worst_mom, tol, slowest);
    return o;
}

Outcome colebrook_fidelity() {
    const double d = 0.2;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> log_re(std::log10(4000.0), 8.0), log_rr(-6.0, -1.5);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double re = std::pow(10.0, log_re(rng));
        const double eps = d * std::pow(10.0, log_rr(rng));
        worst = std::max(worst, std::abs(flow::colebrook_residual(flow::colebrook_friction(re, eps, d), re, eps, d)));
    }
    const double rough = flow::colebrook_fully_rough(1.5e-4 * d, d);
    const double rel = std::abs(rough / 3.24e-3 - 1.0);
    Outcome o;
    o.pass = worst < 1e-12 && rel < 1e-4;
    o.detail = fmt::format("max residual {:.2e} over 1000 pairs (< 1e-12); fully rough {:.6e}, {:.2e} rel from "
                           "3.24e-3 (< 1e-4)",
                           worst, rough, rel);
    return o;
}

double network_gradient_error() {
    const auto arch = config::RunConfig::default_training().arch;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n01;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        bnn::Params p(arch.n_params());
        for (auto& v : p) v = 0.3 * n01(rng);
        std::vector<double> x(arch.input_size()), up(arch.output_size());
        for (auto& v : x) v = n01(rng);
        for (auto& v : up) v = n01(rng);
        Rng mr(static_cast<std::uint64_t>(trial));
        const auto mask = bnn::sample_mask(arch, 0.1, mr);
        const auto g = bnn::backprop(arch, p, x, up, &mask);

        std::vector<double> fd(p.size());
        constexpr double h = 1e-6;
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            const auto yp = bnn::forward(arch, pp, x, &mask), ym = bnn::forward(arch, pm, x, &mask);
            double s = 0.0;
            for (std::size_t j = 0; j < up.size(); ++j) s += up[j] * (yp[j] - ym[j]);
            fd[i] = s / (2.0 * h);
        }
        double scale = 0.0;
        for (double v : fd) scale = std::max(scale, std::abs(v));
        for (std::size_t i = 0; i < p.size(); ++i)
            worst = std::max(worst, std::abs(g[i] - fd[i]) /
                                        std::max({std::abs(g[i]), std::abs(fd[i]), 1e-3 * scale}));
    }
    return worst;
}

double hybrid_gradient_error() {
    plant::SamplingPlan plan;
    plan.train = {{0.05, 0.15, 4}, {0.15, 0.25, 12}};
    plan.test_case1 = {{0.05, 0.15, 1}, {0.15, 0.25, 1}};
    plan.test_case2 = {{0.05, 0.15, 1}, {0.25, 0.30, 1}};
    const auto train = plant::select(plant::generate_dataset(plant::PlantConfig{}, at(0.2), plan, 13), plant::Split::train);
    const std::vector<plant::DatasetRow> pick = {train[1], train[9]};

    hybrid::PhysicsSetup ph;
    ph.solver.tol_pressure = 1e-6; // the loss itself is differenced
    const auto arch = config::RunConfig::default_training().arch;
    const auto scaler = hybrid::FeatureScaler::fit(train);
    const hybrid::HybridObservation data(ph, arch, scaler, pick, hybrid::SensitivitySettings{});
    const std::vector<std::size_t> batch = {0, 1};
    const std::vector<bnn::DropoutMask> masks(2, bnn::keep_all_mask(arch));

    Rng rng(21);
    std::uniform_int_distribution<std::size_t> which(0, arch.n_params() - 1);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        bnn::DropoutNet net;
        net.arch = arch;
        net.params = bnn::he_init(arch, rng, 0.3);
        net.p_mc = 0.1;
        net.noise.sigma2 = 1.0;
        std::vector<double> grad(arch.n_params());
        const double loss = bnn::mc_dropout_loss(net, data, batch, masks, pick.size(), &grad);
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));

        const std::size_t k = which(rng);
        const double h = 1e-5;
        auto moved = net;
        moved.params[k] += h;
        const double fd = (bnn::mc_dropout_loss(moved, data, batch, masks, pick.size()) - loss) / h;
        worst = std::max(worst, std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-3 * gmax));
    }
    return worst;
}

Outcome gradient_suite() {
    const double net = network_gradient_error();
    const double chain = hybrid_gradient_error();
    Outcome o;
    o.pass = net < 1e-5 && chain < 5e-3;
    o.detail = fmt::format("network {:.2e} (< 1e-5); through physics {:.2e} (< 5e-3); 20 trials each", net, chain);
    return o;
}

Outcome dropout_degeneracy() {
    const auto arch = config::RunConfig::default_training().arch;
    Rng rng(5);
    bool ok = true;
    double worst = 0.0;

    // Network alone.
    bnn::DropoutNet net;
    net.arch = arch;
    net.params = bnn::he_init(arch, rng, 0.5);
    net.p_mc = 0.0;
    bnn::NoiseModel noise;
    noise.sigma2 = 1e-4;
    std::vector<double> x(arch.input_size(), 0.3);
    const auto a = bnn::mc_dropout_predict(net, x, 200, noise, 1);
    const auto b = bnn::mc_dropout_predict(net, x, 200, noise, 2);
    const auto f = bnn::forward(arch, net.params, x);
    for (std::size_t j = 0; j < f.size(); ++j) {
        ok = ok && a.variance[j] == noise.sigma2 && a.mean[j] == f[j] && b.mean[j] == a.mean[j];
        worst = std::max(worst, std::abs(a.variance[j] / noise.sigma2 - 1.0));
    }

    // Through the physics, in Pa^2.
    plant::SamplingPlan plan;
    plan.train = {{0.05, 0.15, 4}, {0.15, 0.25, 12}};
    plan.test_case1 = {{0.05, 0.15, 1}, {0.15, 0.25, 1}};
    plan.test_case2 = {{0.05, 0.15, 1}, {0.25, 0.30, 1}};
    const auto train = plant::select(plant::generate_dataset(plant::PlantConfig{}, at(0.2), plan, 4), plant::Split::train);
    hybrid::HybridModel m;
    m.backend = hybrid::Backend::mc_dropout;
    m.dropout = net;
    m.bbp.arch = arch;
    m.noise = noise;
    m.scaler = hybrid::FeatureScaler::fit(train);
    const double s2 = m.noise.sigma2 * m.scaler.target_std * m.scaler.target_std;
    for (double q : {0.07, 0.18, 0.28}) {
        const auto d1 = hybrid::predict(m, at(q), 50, 11);
        const auto d2 = hybrid::predict(m, at(q), 50, 12);
        ok = ok && d1.mean == d2.mean && std::all_of(d1.samples.begin(), d1.samples.end(),
                                                     [&](double s) { return s == d1.samples.front(); });
        const double rel = std::abs(d1.variance / s2 - 1.0);
        worst = std::max(worst, rel);
        ok = ok && rel <= 4.0 * std::numeric_limits<double>::epsilon();
    }
    Outcome o;
    o.pass = ok;
    o.detail = fmt::format("variance vs sigma2 max rel {:.1e} (machine precision); means identical across seeds",
                           worst);
    return o;
}

struct ReproRuns {
    repro::Result first, second;
    double first_seconds = 0.0;
    std::string error;
};

ReproRuns run_repro_twice() {
    ReproRuns r;
    const config::RunConfig cfg;
    const auto root = fs::temp_directory_path() / "hybridflow_acceptance";
    fs::remove_all(root);
    try {
        const auto t0 = Clock::now();
        r.first = repro::run(cfg, root / "first");
        r.first_seconds = seconds_since(t0);
        r.second = repro::run(cfg, root / "second");
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

const repro::Check* find_check(const repro::Result& res, const std::string& name) {
    for (const auto& c : res.checks)
        if (c.name == name) return &c;
    return nullptr;
}

Outcome checks_named(const ReproRuns& runs, const std::vector<std::string>& suffixes) {
    Outcome o;
    if (!runs.error.empty()) {
        o.detail = "repro failed: " + runs.error;
        return o;
    }
    o.pass = true;
    int held = 0, total = 0;
    for (const char* be : {"mc", "bbp"}) {
        for (const auto& s : suffixes) {
            const auto* c = find_check(runs.first, std::string(be) + " " + s);
            ++total;
            if (!c) {
                o.pass = false;
                o.notes.push_back(fmt::format("missing check '{} {}'", be, s));
                continue;
            }
            held += c->pass;
            o.pass = o.pass && c->pass;
            o.notes.push_back(fmt::format("{} {} ({})", c->pass ? "holds:" : "FAILS:", c->name, c->detail));
        }
    }
    o.detail = fmt::format("{} of {} sub-checks hold", held, total);
    return o;
}

Outcome case1_structure(const ReproRuns& runs) {
    auto o = checks_named(runs, {"case 1: tuned MAPE < untuned MAPE", "case 1: high-band MAPE < low-band MAPE",
                                 "case 1: low-band CI > high-band CI", "case 1: tuned MAPE < 0.5 x untuned MAPE"});
    if (runs.error.empty()) {
        const bool fast = runs.first_seconds < 1800.0;
        o.pass = o.pass && fast;
        o.notes.push_back(fmt::format("{} repro runtime {:.0f} s (< 1800 s)", fast ? "holds:" : "FAILS:",
                                      runs.first_seconds));
    }
    return o;
}

Outcome case2_structure(const ReproRuns& runs) {
    return checks_named(runs, {"case 2: extrapolated CI >= 1.5 x low-band CI",
                               "case 2: extrapolated MAPE > case-1 high-band MAPE"});
}

Outcome backend_comparison(const ReproRuns& runs) {
    Outcome o;
    if (!runs.error.empty()) {
        o.detail = "repro failed: " + runs.error;
        return o;
    }
    const auto& r = runs.first.reports;
    bool recorded = runs.first.summary.find("BBP mean CI larger than MC dropout mean CI") != std::string::npos;
    for (int c = 1; c <= 2; ++c) {
        const double mc = (c == 1 ? r.mc_case1 : r.mc_case2).band("entire").ci95_mean;
        const double bbp = (c == 1 ? r.bbp_case1 : r.bbp_case2).band("entire").ci95_mean;
        recorded = recorded && std::isfinite(mc) && std::isfinite(bbp) && mc > 0.0 && bbp > 0.0;
        o.notes.push_back(fmt::format("case {}: BBP {:.4f} bar, MC dropout {:.4f} bar; BBP larger: {}", c, bbp / 1e5,
                                      mc / 1e5, bbp > mc ? "yes" : "no"));
    }
    o.pass = recorded;
    o.detail = "mean CI widths for both backends recorded in the summary (reported, not gated)";
    return o;
}

Outcome determinism(const ReproRuns& runs) {
    Outcome o;
    if (!runs.error.empty()) {
        o.detail = "repro failed: " + runs.error;
        return o;
    }
    o.pass = !runs.first.summary.empty() && runs.first.summary == runs.second.summary;
    o.detail = fmt::format("two runs, summaries of {} and {} bytes, {}", runs.first.summary.size(),
                           runs.second.summary.size(), o.pass ? "byte-identical" : "DIFFERENT");
    return o;
}

double untuned_mape(const plant::PlantConfig& cfg, const std::vector<plant::DatasetRow>& rows) {
    std::vector<double> model, target;
    for (const auto& r : rows) {
        model.push_back(flow::inlet_pressure(flow::simple_solve(cfg.pipe, at(r.q_liq_std), cfg.fluid, cfg.model_solver)));
        target.push_back(r.p_in_plant);
    }
    return hybrid::mape(model, target);
}

Outcome plant_sanity() {
    const config::RunConfig cfg;
    auto same = cfg.plant_config();
    same.mismatch = plant::Mismatch::none();
    same.noise_std = 0.0;
    const auto seed = config::Seeds::from(cfg.experiment.seed).data;
    const double none = untuned_mape(same, plant::generate_dataset(same, cfg.boundary, cfg.experiment.plan, seed));
    const auto def = cfg.plant_config();
    const double mism = untuned_mape(def, plant::generate_dataset(def, cfg.boundary, cfg.experiment.plan, seed));
    Outcome o;
    o.pass = none < 1e-6 && mism >= 5.0 && mism <= 25.0;
    o.detail = fmt::format("no mismatch {:.2e}% (< 1e-6); default mismatch {:.3f}% (in [5, 25]); 1540 rows each",
                           none, mism);
    return o;
}

Outcome toy_calibration() {
    using namespace bnn;
    const auto d = toy::make_training(400, 5);
    DirectObservation data(d.x, d.y);
    const auto arch = toy::architecture();
    const auto ds = toy::dropout_settings();
    const auto dropout = mc_dropout_train(arch, data, ds, 1);
    const auto init = init_prior_from_dropout(dropout, 200, 1.5, 0.01, 3);
    const auto bs = toy::bbp_settings();
    const auto bbp = bbp_train(arch, data, init.prior, init.posterior, bs, 2);
    const auto held = toy::make_training(300, 99);

    Outcome o;
    o.pass = true;
    auto check = [&](const char* name, const std::function<PredictiveSummary(const std::vector<double>&)>& predict) {
        double sd_sparse = 0.0, sd_dense = 0.0;
        int n_sparse = 0, n_dense = 0;
        for (int i = 0; i <= 100; ++i) {
            const double x = toy::lo + (toy::hi - toy::lo) * i / 100.0;
            const double sd = std::sqrt(predict({x}).variance[0]);
            (x < toy::mid ? sd_sparse : sd_dense) += sd;
            ++(x < toy::mid ? n_sparse : n_dense);
        }
        sd_sparse /= n_sparse;
        sd_dense /= n_dense;
        // Held-out points drawn like the training set, so in distribution.
        int covered = 0;
        for (std::size_t i = 0; i < held.y.size(); ++i) {
            const auto p = predict(held.x[i]);
            covered += std::abs(p.mean[0] - held.y[i]) <= 1.96 * std::sqrt(p.variance[0]);
        }
        const double coverage = static_cast<double>(covered) / static_cast<double>(held.y.size());
        const bool ok = sd_sparse > sd_dense && coverage >= 0.85;
        o.pass = o.pass && ok;
        o.notes.push_back(fmt::format("{} {}: sd sparse {:.4f} > dense {:.4f}; coverage {:.3f} (>= 0.85)",
                                      ok ? "holds:" : "FAILS:", name, sd_sparse, sd_dense, coverage));
    };
    check("mc dropout", [&](const std::vector<double>& x) { return mc_dropout_predict(dropout, x, 200, ds.noise, 7); });
    check("bbp", [&](const std::vector<double>& x) { return bbp_predict(bbp, x, 200, bs.noise, 7); });
    o.detail = "1-D toy, 90/10 density split, both backends";
    return o;
}

Outcome guarded(const std::function<Outcome()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what(), {}};
    }
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o) {
        std::cout << fmt::format("[{}] criterion {:>2}: {}: {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
        for (const auto& n : o.notes) std::cout << "           " << n << '\n';
        std::cout.flush();
        failures += !o.pass;
    };

    report(1, "physics conservation", guarded(physics_conservation));
    report(2, "colebrook fidelity", guarded(colebrook_fidelity));
    report(3, "gradient suite", guarded(gradient_suite));
    report(4, "p_mc = 0 degeneracy", guarded(dropout_degeneracy));

    const auto runs = run_repro_twice();
    report(5, "case 1 structure", guarded([&] { return case1_structure(runs); }));
    report(6, "case 2 structure", guarded([&] { return case2_structure(runs); }));
    report(7, "backend comparison", guarded([&] { return backend_comparison(runs); }));
    report(8, "repro determinism", guarded([&] { return determinism(runs); }));

    report(9, "plant sanity", guarded(plant_sanity));
    report(10, "toy uq calibration", guarded(toy_calibration));

    std::cout << fmt::format("{} of 10 criteria pass\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
