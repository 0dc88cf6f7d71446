// hybridflow: dataset generation, single solves, training, evaluation and the
// full reproduction run.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
// failure, 3 file or format error, 4 repro finished but a check failed.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hybridflow/checkpoint.hpp"
#include "hybridflow/config.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/hybrid.hpp"
#include "hybridflow/plant.hpp"
#include "hybridflow/repro.hpp"
#include "hybridflow/rng.hpp"

using namespace hybridflow;

namespace {

enum Exit { ok = 0, validation = 1, numerical = 2, io = 3, checks_failed = 4 };

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void log_line(const Common& c, const std::string& s) {
    if (!c.quiet) std::cerr << s << '\n';
}

config::RunConfig load(const Common& c) {
    std::string path = c.config_path;
    if (path.empty())
        if (const char* env = std::getenv("HYBRIDFLOW_CONFIG"); env && *env) path = env;
    config::RunConfig cfg;
    if (!path.empty()) cfg = config::load_config(path);
    if (c.seed) cfg.experiment.seed = *c.seed;
    cfg.validate();
    return cfg;
}

std::vector<plant::DatasetRow> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open dataset '{}'", path));
    return plant::read_dataset_csv(in);
}

template <class Fn>
void write_to(const std::string& path, Fn&& fn) {
    std::ofstream out(path);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path));
    fn(out);
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path));
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "Run configuration (JSON); default $HYBRIDFLOW_CONFIG, else built-in");
    cmd->add_option("--seed", c.seed, "Master seed (overrides experiment.seed)");
    cmd->add_flag("--quiet", c.quiet, "No progress log on standard error");
}

int cmd_gen_data(const Common& c, const std::string& out) {
    const auto cfg = load(c);
    const auto seeds = config::Seeds::from(cfg.experiment.seed);
    const auto rows = plant::generate_dataset(cfg.plant_config(), cfg.boundary, cfg.experiment.plan, seeds.data,
                                              cfg.experiment.threads);
    write_to(out, [&](std::ostream& o) { plant::write_dataset_csv(o, rows); });
    log_line(c, fmt::format("wrote {} rows to {}", rows.size(), out));
    log_line(c, repro::baseline_diagnostics(cfg.physics(), rows));
    return ok;
}

int cmd_solve(const Common& c, double q, const std::string& out) {
    auto cfg = load(c);
    auto bc = cfg.boundary;
    bc.q_liq_std = q;
    bc.validate();
    const auto state = flow::simple_solve(cfg.pipe, bc, cfg.fluid, cfg.solver);
    write_to(out, [&](std::ostream& o) { flow::write_profile_csv(o, state, cfg.pipe); });
    const double p_in = flow::inlet_pressure(state);
    std::cout << fmt::format("p_in = {:.6f} bar ({:.3f} Pa), {} iterations, residual {:.3g} Pa\n", p_in / 1e5, p_in,
                             state.iterations, state.residual);
    return ok;
}

int cmd_train(const Common& c, const std::string& backend_name, const std::string& data, const std::string& out,
              const std::string& prior_path) {
    const auto cfg = load(c);
    const auto backend = hybrid::backend_from_string(backend_name);
    const auto train = plant::select(read_rows(data), plant::Split::train);
    if (train.empty()) throw InputDomainError(fmt::format("dataset '{}' has no train rows", data));
    const auto seeds = config::Seeds::from(cfg.experiment.seed);

    std::optional<hybrid::HybridModel> prior;
    if (!prior_path.empty()) {
        if (backend != hybrid::Backend::bbp) throw InputDomainError("--prior only applies to --backend bbp");
        prior = checkpoint::load_model(prior_path);
        if (prior->backend != hybrid::Backend::mc_dropout)
            throw InputDomainError("--prior must be an mc dropout checkpoint");
    }
    const auto model = hybrid::train_hybrid(
        cfg.physics(), train, backend, cfg.training,
        backend == hybrid::Backend::bbp ? seeds.train_bbp : seeds.train_mc, prior ? &prior->dropout : nullptr,
        [&](const std::string& s) { log_line(c, s); });
    checkpoint::save_model(out, model);
    log_line(c, fmt::format("wrote {} checkpoint to {}", hybrid::to_string(backend), out));
    return ok;
}

int cmd_evaluate(const Common& c, const std::string& model_path, const std::string& data, int test_case,
                 const std::string& out, const std::string& trace) {
    const auto cfg = load(c);
    const auto model = checkpoint::load_model(model_path);
    const auto rows = plant::select(read_rows(data),
                                    test_case == 1 ? plant::Split::test_case1 : plant::Split::test_case2);
    const auto seeds = config::Seeds::from(cfg.experiment.seed);
    const auto rep = hybrid::evaluate(model, rows, test_case, cfg.experiment.replications, cfg.experiment.passes,
                                      split_seed(seeds.eval, static_cast<std::uint64_t>(test_case)),
                                      cfg.experiment.threads);
    hybrid::write_report_table(std::cout, rep);
    if (!out.empty()) write_to(out, [&](std::ostream& o) { o << checkpoint::report_to_json(rep).dump(2) << '\n'; });
    if (!trace.empty()) write_to(trace, [&](std::ostream& o) { hybrid::write_trace_csv(o, rep); });
    log_line(c, fmt::format("{} excluded passes", rep.excluded_total));
    return ok;
}

int cmd_repro(const Common& c, const std::string& out_dir) {
    const auto cfg = load(c);
    const auto res = repro::run(cfg, out_dir, [&](const std::string& s) { log_line(c, s); });
    std::cout << res.summary;
    return res.all_pass() ? ok : checks_failed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drift-flux pipe model with Bayesian friction correction"};
    app.require_subcommand(1);
    Common common;

    std::string out, data, backend = "mc", model, trace, prior;
    double qliq = 0.0;
    int test_case = 1;

    auto* gen = app.add_subcommand("gen-data", "Generate the plant dataset (CSV)");
    add_common(gen, common);
    gen->add_option("--out", out, "Output CSV")->required();

    auto* solve = app.add_subcommand("solve", "Solve the untuned model at one flow rate");
    add_common(solve, common);
    solve->add_option("--qliq", qliq, "Liquid rate at standard conditions [m3/s]")->required();
    solve->add_option("--out", out, "Profile CSV")->default_val("profile.csv");

    auto* train = app.add_subcommand("train", "Train a hybrid model");
    add_common(train, common);
    train->add_option("--backend", backend, "mc or bbp")->check(CLI::IsMember({"mc", "mc_dropout", "bbp"}));
    train->add_option("--data", data, "Dataset CSV")->required();
    train->add_option("--out", out, "Checkpoint path")->required();
    train->add_option("--prior", prior, "MC dropout checkpoint to build the BBP prior from");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a test case");
    add_common(evaluate, common);
    evaluate->add_option("--model", model, "Checkpoint")->required();
    evaluate->add_option("--data", data, "Dataset CSV")->required();
    evaluate->add_option("--case", test_case, "Test case")->check(CLI::IsMember({1, 2}));
    evaluate->add_option("--out", out, "Report JSON");
    evaluate->add_option("--trace", trace, "Prediction trace CSV");

    auto* rep = app.add_subcommand("repro", "Run the full experiment into a directory");
    add_common(rep, common);
    rep->add_option("--out", out, "Output directory")->default_val("repro_out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : validation;
    }

    try {
        if (*gen) return cmd_gen_data(common, out);
        if (*solve) return cmd_solve(common, qliq, out);
        if (*train) return cmd_train(common, backend, data, out, prior);
        if (*evaluate) return cmd_evaluate(common, model, data, test_case, out, trace);
        if (*rep) return cmd_repro(common, out);
    } catch (const InputDomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical;
    } catch (const FormatError& e) {
        std::cerr << "file error: " << e.what() << '\n';
        return io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io;
    }
    return validation;
}
