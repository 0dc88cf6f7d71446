#include "hybridflow/plant.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "hybridflow/errors.hpp"
#include "hybridflow/parallel.hpp"
#include "hybridflow/rng.hpp"

namespace hybridflow::plant {

bool Mismatch::is_none() const { return !emulsion_k && !density_bias && !slip && !friction_multiplier; }

Mismatch Mismatch::default_mismatch() {
    Mismatch m;
    m.emulsion_k = 1.5;
    m.density_bias = 0.05;
    flow::SlipClosure slip;
    slip.c0 = 1.15;
    m.slip = slip;
    m.friction_multiplier = std::vector<double>{1.2};
    return m;
}

flow::ClosureSet Mismatch::apply(const flow::ClosureSet& model, int n_cells) const {
    flow::ClosureSet c = model;
    if (emulsion_k) c.emulsion_k = *emulsion_k;
    if (density_bias) c.density_bias = *density_bias;
    if (slip) c.slip = *slip;
    if (friction_multiplier) {
        const auto& f = *friction_multiplier;
        if (f.size() == 1)
            c.friction_multiplier.assign(static_cast<std::size_t>(n_cells), f[0]);
        else if (f.size() == static_cast<std::size_t>(n_cells))
            c.friction_multiplier = f;
        else
            throw InputDomainError(fmt::format("mismatch: friction_multiplier needs 1 or {} entries, got {}",
                                               n_cells, f.size()));
    }
    return c;
}

namespace {

bool same_multipliers(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.empty() ? 1.0 : a[i];
        const double y = b.empty() ? 1.0 : b[i];
        if (x != y) return false;
    }
    return true;
}

} // namespace

void PlantConfig::validate() const {
    pipe.validate();
    fluid.validate();
    model_solver.validate();
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw InputDomainError(fmt::format("plant: noise_std must be >= 0, got {}", noise_std));
    if (mismatch.emulsion_k && *mismatch.emulsion_k < 0.0)
        throw InputDomainError("plant: emulsion_k must be >= 0");
    if (mismatch.density_bias && !(*mismatch.density_bias > -1.0))
        throw InputDomainError("plant: density_bias must be > -1");
    if (mismatch.friction_multiplier)
        for (double f : *mismatch.friction_multiplier)
            if (!(f > 0.0)) throw InputDomainError("plant: friction multipliers must be > 0");
    if (mismatch.is_none()) return;

    const auto& m = model_solver.closure;
    const auto p = mismatch.apply(m, pipe.n_cells);
    const bool changed = p.emulsion_k != m.emulsion_k || p.density_bias != m.density_bias ||
                         p.slip.model != m.slip.model || p.slip.c0 != m.slip.c0 ||
                         p.slip.horizontal_drift_factor != m.slip.horizontal_drift_factor ||
                         !same_multipliers(p.friction_multiplier, m.friction_multiplier,
                                           static_cast<std::size_t>(pipe.n_cells));
    if (!changed) throw InputDomainError("plant: mismatch does not change any closure of the model");
}

flow::SolverSettings PlantConfig::plant_solver() const {
    flow::SolverSettings s = model_solver;
    s.closure = mismatch.apply(model_solver.closure, pipe.n_cells);
    return s;
}

double plant_measure(const PlantConfig& cfg, const flow::BoundaryConditions& bc, std::uint64_t seed) {
    cfg.validate();
    const auto state = flow::simple_solve(cfg.pipe, bc, cfg.fluid, cfg.plant_solver());
    const double p_in = flow::inlet_pressure(state);
    if (cfg.noise_std == 0.0) return p_in;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    return p_in + noise(rng);
}

const char* to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::test_case1: return "test_case1";
    case Split::test_case2: return "test_case2";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test_case1") return Split::test_case1;
    if (s == "test_case2") return Split::test_case2;
    throw FormatError(fmt::format("unknown split tag '{}'", s));
}

void SamplingPlan::validate() const {
    if (retry_cap < 0) throw InputDomainError("sampling plan: retry_cap must be >= 0");
    for (const auto* group : {&train, &test_case1, &test_case2})
        for (const auto& r : *group)
            if (!(r.q_lo > 0.0) || !(r.q_hi >= r.q_lo))
                throw InputDomainError(fmt::format("sampling plan: bad range [{}, {}]", r.q_lo, r.q_hi));
    if (train.empty()) throw InputDomainError("sampling plan: no training ranges");
}

SamplingPlan SamplingPlan::table3() {
    SamplingPlan p;
    p.train = {{0.05, 0.15, 144}, {0.15, 0.25, 1296}};
    p.test_case1 = {{0.05, 0.15, 25}, {0.15, 0.25, 25}};
    p.test_case2 = {{0.05, 0.15, 25}, {0.25, 0.30, 25}};
    return p;
}

std::vector<double> model_features(const PlantConfig& cfg, const flow::BoundaryConditions& bc) {
    return flow::simple_solve(cfg.pipe, bc, cfg.fluid, cfg.model_solver).re_mix;
}

namespace {

struct Job {
    Split split;
    std::size_t range;
    std::size_t index;
    FlowRange bounds;
};

DatasetRow make_row(const PlantConfig& cfg, const flow::BoundaryConditions& base_bc, const Job& job,
                    std::uint64_t seed, int retry_cap) {
    const std::uint64_t row_seed =
        split_seed(split_seed(split_seed(seed, static_cast<std::uint64_t>(job.split)), job.range), job.index);
    for (int attempt = 0;; ++attempt) {
        Rng rng = make_rng(row_seed, static_cast<std::uint64_t>(attempt));
        std::uniform_real_distribution<double> q(job.bounds.q_lo, job.bounds.q_hi);
        flow::BoundaryConditions bc = base_bc;
        bc.q_liq_std = q(rng);
        try {
            DatasetRow row;
            row.q_liq_std = bc.q_liq_std;
            row.split = job.split;
            row.p_in_plant = plant_measure(cfg, bc, rng());
            row.re_features = model_features(cfg, bc);
            if (!(row.p_in_plant > bc.p_out))
                throw NumericalError(fmt::format("plant inlet pressure {} Pa not above p_out", row.p_in_plant));
            return row;
        } catch (const NumericalError&) {
            if (attempt >= retry_cap) throw;
        }
    }
}

} // namespace

std::vector<DatasetRow> generate_dataset(const PlantConfig& cfg, const flow::BoundaryConditions& base_bc,
                                         const SamplingPlan& plan, std::uint64_t seed, unsigned threads) {
    cfg.validate();
    base_bc.validate();
    plan.validate();

    std::vector<Job> jobs;
    auto add = [&](Split split, const std::vector<FlowRange>& ranges) {
        for (std::size_t r = 0; r < ranges.size(); ++r)
            for (std::size_t i = 0; i < ranges[r].count; ++i) jobs.push_back({split, r, i, ranges[r]});
    };
    add(Split::train, plan.train);
    add(Split::test_case1, plan.test_case1);
    // Case-2 ranges identical to a Case-1 range are copied from Case 1 afterwards.
    std::vector<FlowRange> case2_new;
    std::vector<std::size_t> case2_reuse;
    for (const auto& r : plan.test_case2) {
        const auto it = std::find_if(plan.test_case1.begin(), plan.test_case1.end(), [&](const FlowRange& c) {
            return c.q_lo == r.q_lo && c.q_hi == r.q_hi && c.count == r.count;
        });
        if (it != plan.test_case1.end())
            case2_reuse.push_back(static_cast<std::size_t>(it - plan.test_case1.begin()));
        else
            case2_new.push_back(r);
    }
    for (std::size_t r = 0; r < case2_new.size(); ++r)
        for (std::size_t i = 0; i < case2_new[r].count; ++i) jobs.push_back({Split::test_case2, r, i, case2_new[r]});

    std::vector<DatasetRow> rows(jobs.size());
    parallel_for(
        jobs.size(), [&](std::size_t k) { rows[k] = make_row(cfg, base_bc, jobs[k], seed, plan.retry_cap); },
        threads);

    for (std::size_t c1 : case2_reuse) {
        for (std::size_t k = 0; k < jobs.size(); ++k)
            if (jobs[k].split == Split::test_case1 && jobs[k].range == c1) {
                DatasetRow copy = rows[k];
                copy.split = Split::test_case2;
                rows.push_back(std::move(copy));
            }
    }

    std::stable_sort(rows.begin(), rows.end(), [](const DatasetRow& a, const DatasetRow& b) {
        if (a.split != b.split) return a.split < b.split;
        return a.q_liq_std < b.q_liq_std;
    });
    return rows;
}

std::vector<DatasetRow> select(const std::vector<DatasetRow>& rows, Split split) {
    std::vector<DatasetRow> out;
    for (const auto& r : rows)
        if (r.split == split) out.push_back(r);
    return out;
}

void write_dataset_csv(std::ostream& out, const std::vector<DatasetRow>& rows) {
    const std::size_t n = rows.empty() ? 0 : rows.front().re_features.size();
    out << "# format: " << dataset_format << '\n';
    out << "q_liq_std,p_in_plant";
    for (std::size_t i = 1; i <= n; ++i) out << ",re_" << i;
    out << ",split_tag\n";
    for (const auto& r : rows) {
        if (r.re_features.size() != n) throw InputDomainError("write_dataset_csv: rows differ in feature count");
        out << fmt::format("{:.17g},{:.17g}", r.q_liq_std, r.p_in_plant);
        for (double re : r.re_features) out << fmt::format(",{:.17g}", re);
        out << ',' << to_string(r.split) << '\n';
    }
}

namespace {

double parse_double(const std::string& s, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v))
        throw FormatError(fmt::format("dataset line {}: '{}' is not a number", line, s));
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

std::vector<DatasetRow> read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset: empty file");
    const std::string expected = std::string("# format: ") + dataset_format;
    if (line != expected)
        throw FormatError(fmt::format("dataset: expected '{}' on the first line, found '{}'", expected, line));
    if (!std::getline(in, line)) throw FormatError("dataset: missing header");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "q_liq_std" || header[1] != "p_in_plant" || header.back() != "split_tag")
        throw FormatError("dataset: unexpected header '" + line + "'");
    const std::size_t n = header.size() - 3;
    for (std::size_t i = 0; i < n; ++i)
        if (header[2 + i] != fmt::format("re_{}", i + 1))
            throw FormatError(fmt::format("dataset: header column {} should be re_{}", 3 + i, i + 1));

    std::vector<DatasetRow> rows;
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw FormatError(fmt::format("dataset line {}: {} columns, expected {}", line_no, cells.size(),
                                          header.size()));
        DatasetRow r;
        r.q_liq_std = parse_double(cells[0], line_no);
        r.p_in_plant = parse_double(cells[1], line_no);
        for (std::size_t i = 0; i < n; ++i) r.re_features.push_back(parse_double(cells[2 + i], line_no));
        r.split = split_from_string(cells.back());
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace hybridflow::plant
