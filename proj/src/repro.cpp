#include "hybridflow/repro.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "hybridflow/checkpoint.hpp"
#include "hybridflow/errors.hpp"
#include "hybridflow/rng.hpp"

namespace hybridflow::repro {

namespace fs = std::filesystem;

namespace {

double bar(double pa) { return pa / 1e5; }

void backend_checks(std::vector<Check>& out, const std::string& be, const hybrid::EvalReport& c1,
                    const hybrid::EvalReport& c2) {
    const auto& e = c1.band("entire");
    const auto& lo = c1.band("low");
    const auto& hi = c1.band("high");
    out.push_back({be + " case 1: tuned MAPE < untuned MAPE", e.mape_tuned < e.mape_untuned,
                   fmt::format("{:.3f}% vs {:.3f}%", e.mape_tuned, e.mape_untuned)});
    out.push_back({be + " case 1: tuned MAPE < 0.5 x untuned MAPE", e.mape_tuned < 0.5 * e.mape_untuned,
                   fmt::format("{:.3f}% vs {:.3f}%", e.mape_tuned, 0.5 * e.mape_untuned)});
    out.push_back({be + " case 1: high-band MAPE < low-band MAPE", hi.mape_tuned < lo.mape_tuned,
                   fmt::format("{:.3f}% vs {:.3f}%", hi.mape_tuned, lo.mape_tuned)});
    out.push_back({be + " case 1: low-band CI > high-band CI", lo.ci95_mean > hi.ci95_mean,
                   fmt::format("{:.4f} vs {:.4f} bar", bar(lo.ci95_mean), bar(hi.ci95_mean))});

    const auto& ext = c2.band("high");
    const auto& lo2 = c2.band("low");
    out.push_back({be + " case 2: extrapolated CI >= 1.5 x low-band CI", ext.ci95_mean >= 1.5 * lo2.ci95_mean,
                   fmt::format("{:.4f} vs {:.4f} bar (ratio {:.2f})", bar(ext.ci95_mean), bar(1.5 * lo2.ci95_mean),
                               ext.ci95_mean / lo2.ci95_mean)});
    out.push_back({be + " case 2: extrapolated MAPE > case-1 high-band MAPE", ext.mape_tuned > hi.mape_tuned,
                   fmt::format("{:.3f}% vs {:.3f}%", ext.mape_tuned, hi.mape_tuned)});
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
    std::ofstream out(path);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
    fn(out);
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path.string()));
}

} // namespace

std::vector<Check> structural_checks(const Reports& r) {
    std::vector<Check> out;
    backend_checks(out, "mc", r.mc_case1, r.mc_case2);
    backend_checks(out, "bbp", r.bbp_case1, r.bbp_case2);
    for (int c = 1; c <= 2; ++c) {
        const auto& mc = (c == 1 ? r.mc_case1 : r.mc_case2).band("entire");
        const auto& bbp = (c == 1 ? r.bbp_case1 : r.bbp_case2).band("entire");
        Check k;
        k.name = fmt::format("case {}: BBP mean CI larger than MC dropout mean CI", c);
        k.pass = bbp.ci95_mean > mc.ci95_mean;
        k.detail = fmt::format("{:.4f} vs {:.4f} bar", bar(bbp.ci95_mean), bar(mc.ci95_mean));
        k.gating = false;
        out.push_back(k);
    }
    return out;
}

bool Result::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass || !c.gating; });
}

std::string baseline_diagnostics(const hybrid::PhysicsSetup& physics, const std::vector<plant::DatasetRow>& rows) {
    std::size_t total_iter = 0;
    int max_iter = 0;
    std::array<std::size_t, fluid::range_warning_count> tally{};
    for (const auto& r : rows) {
        const auto s = hybrid::baseline_state(physics, physics.at(r.q_liq_std));
        total_iter += static_cast<std::size_t>(s.iterations);
        max_iter = std::max(max_iter, s.iterations);
        for (int b = 0; b < fluid::range_warning_count; ++b)
            if (s.warnings & (1u << b)) ++tally[static_cast<std::size_t>(b)];
    }
    std::string out = fmt::format("untuned solves: {} rows, {} outer iterations in total, max {}", rows.size(),
                                  total_iter, max_iter);
    std::string warn;
    for (int b = 0; b < fluid::range_warning_count; ++b)
        if (tally[static_cast<std::size_t>(b)] > 0)
            warn += fmt::format("{}{} {}", warn.empty() ? "" : ", ", fluid::range_warning_name(b),
                                tally[static_cast<std::size_t>(b)]);
    out += "; correlation range warnings (solves affected): " + (warn.empty() ? std::string("none") : warn);
    return out;
}

std::string format_summary(const config::RunConfig& cfg, std::size_t n_rows, const Reports& reports,
                           const std::vector<Check>& checks) {
    std::ostringstream s;
    s << "hybridflow repro summary\n";
    s << fmt::format("seed {}; {} dataset rows; {} passes x {} replications per test row\n\n", cfg.experiment.seed,
                     n_rows, cfg.experiment.passes, cfg.experiment.replications);
    for (const auto* r : {&reports.mc_case1, &reports.bbp_case1, &reports.mc_case2, &reports.bbp_case2}) {
        hybrid::write_report_table(s, *r);
        s << '\n';
    }
    std::size_t held = 0, gating = 0;
    s << "checks\n";
    for (const auto& c : checks) {
        const char* tag = !c.gating ? (c.pass ? "INFO yes" : "INFO no ") : (c.pass ? "PASS    " : "FAIL    ");
        s << fmt::format("[{}] {} ({})\n", tag, c.name, c.detail);
        if (c.gating) {
            ++gating;
            if (c.pass) ++held;
        }
    }
    s << fmt::format("\n{} of {} checks hold\n", held, gating);
    return s.str();
}

Result run(const config::RunConfig& cfg, const fs::path& out_dir, const Log& log) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw FormatError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));

    std::ofstream run_log(out_dir / "run.log");
    if (!run_log) throw FormatError(fmt::format("cannot write '{}'", (out_dir / "run.log").string()));
    auto say = [&](const std::string& line) {
        run_log << line << '\n';
        run_log.flush();
        if (log) log(line);
    };

    const auto seeds = config::Seeds::from(cfg.experiment.seed);
    const auto physics = cfg.physics();
    const unsigned threads = cfg.experiment.threads;

    write_file(out_dir / "config.json", [&](std::ostream& o) { o << config::to_json(cfg).dump(2) << '\n'; });

    say(fmt::format("generating dataset (seed {})", cfg.experiment.seed));
    const auto rows = plant::generate_dataset(cfg.plant_config(), cfg.boundary, cfg.experiment.plan, seeds.data,
                                              threads);
    write_file(out_dir / "dataset.csv", [&](std::ostream& o) { plant::write_dataset_csv(o, rows); });
    const auto train = plant::select(rows, plant::Split::train);
    const auto case1 = plant::select(rows, plant::Split::test_case1);
    const auto case2 = plant::select(rows, plant::Split::test_case2);
    say(fmt::format("dataset: {} train, {} case-1, {} case-2 rows", train.size(), case1.size(), case2.size()));
    say(baseline_diagnostics(physics, rows));

    auto settings = cfg.training;
    say("training mc dropout");
    const auto mc = hybrid::train_hybrid(physics, train, hybrid::Backend::mc_dropout, settings, seeds.train_mc,
                                         nullptr, say);
    checkpoint::save_model((out_dir / "model_mc.json").string(), mc);
    say("training bbp (prior from the mc dropout network)");
    const auto bbp = hybrid::train_hybrid(physics, train, hybrid::Backend::bbp, settings, seeds.train_bbp,
                                          &mc.dropout, say);
    checkpoint::save_model((out_dir / "model_bbp.json").string(), bbp);

    auto eval = [&](const hybrid::HybridModel& m, const std::vector<plant::DatasetRow>& test, int c) {
        const auto rep = hybrid::evaluate(m, test, c, cfg.experiment.replications, cfg.experiment.passes,
                                          split_seed(seeds.eval, static_cast<std::uint64_t>(c)), threads);
        const std::string stem = fmt::format("{}_case{}", rep.backend, c);
        write_file(out_dir / ("report_" + stem + ".json"),
                   [&](std::ostream& o) { o << checkpoint::report_to_json(rep).dump(2) << '\n'; });
        write_file(out_dir / ("trace_" + stem + ".csv"), [&](std::ostream& o) { hybrid::write_trace_csv(o, rep); });
        say(fmt::format("evaluated {} case {}: {} records, {} excluded passes", rep.backend, c, rep.records.size(),
                        rep.excluded_total));
        return rep;
    };

    Result res;
    res.reports.mc_case1 = eval(mc, case1, 1);
    res.reports.mc_case2 = eval(mc, case2, 2);
    res.reports.bbp_case1 = eval(bbp, case1, 1);
    res.reports.bbp_case2 = eval(bbp, case2, 2);
    res.checks = structural_checks(res.reports);
    res.summary = format_summary(cfg, rows.size(), res.reports, res.checks);
    write_file(out_dir / "summary.txt", [&](std::ostream& o) { o << res.summary; });
    say(res.all_pass() ? "all checks hold" : "some checks failed; see summary.txt");
    return res;
}

} // namespace hybridflow::repro
