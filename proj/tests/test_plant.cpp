#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "hybridflow/errors.hpp"
#include "hybridflow/plant.hpp"

using namespace hybridflow;
using namespace hybridflow::plant;

namespace {

flow::BoundaryConditions at(double q) {
    flow::BoundaryConditions bc;
    bc.q_liq_std = q;
    return bc;
}

double model_p_in(const PlantConfig& cfg, double q) {
    return flow::inlet_pressure(flow::simple_solve(cfg.pipe, at(q), cfg.fluid, cfg.model_solver));
}

double untuned_mape(const PlantConfig& cfg, const std::vector<DatasetRow>& rows) {
    double sum = 0.0;
    for (const auto& r : rows) sum += std::abs(model_p_in(cfg, r.q_liq_std) - r.p_in_plant) / r.p_in_plant;
    return 100.0 * sum / static_cast<double>(rows.size());
}

SamplingPlan small_plan() {
    SamplingPlan p;
    p.train = {{0.05, 0.15, 4}, {0.15, 0.25, 12}};
    p.test_case1 = {{0.05, 0.15, 3}, {0.15, 0.25, 3}};
    p.test_case2 = {{0.05, 0.15, 3}, {0.25, 0.30, 3}};
    return p;
}

std::string csv_of(const std::vector<DatasetRow>& rows) {
    std::ostringstream s;
    write_dataset_csv(s, rows);
    return s.str();
}

} // namespace

TEST_CASE("mismatch none reproduces the model") {
    PlantConfig cfg;
    cfg.mismatch = Mismatch::none();
    CHECK(cfg.mismatch.is_none());
    for (double q : {0.05, 0.12, 0.2, 0.3})
        CHECK(plant_measure(cfg, at(q), 1) == model_p_in(cfg, q));
}

TEST_CASE("more friction in the plant raises the inlet pressure") {
    PlantConfig cfg;
    cfg.mismatch = Mismatch::none();
    cfg.mismatch.friction_multiplier = std::vector<double>{1.15};
    for (double q : {0.08, 0.2, 0.28}) CHECK(plant_measure(cfg, at(q), 1) > model_p_in(cfg, q));
}

TEST_CASE("per-cell friction profile") {
    PlantConfig cfg;
    cfg.mismatch = Mismatch::none();
    std::vector<double> profile(static_cast<std::size_t>(cfg.pipe.n_cells), 1.0);
    profile.back() = 1.5;
    cfg.mismatch.friction_multiplier = profile;
    const auto c = cfg.plant_solver().closure;
    CHECK(c.friction_multiplier == profile);
    CHECK(plant_measure(cfg, at(0.2), 1) > model_p_in(cfg, 0.2));

    cfg.mismatch.friction_multiplier = std::vector<double>{1.0, 1.1};
    CHECK_THROWS_AS(cfg.plant_solver(), InputDomainError);
}

TEST_CASE("default mismatch closures") {
    const auto m = Mismatch::default_mismatch();
    PlantConfig cfg;
    const auto c = m.apply(cfg.model_solver.closure, cfg.pipe.n_cells);
    CHECK(c.emulsion_k == 1.5);
    CHECK(c.density_bias == 0.05);
    CHECK(c.slip.c0 == 1.15);
    CHECK(c.friction_multiplier == std::vector<double>(static_cast<std::size_t>(cfg.pipe.n_cells), 1.2));
    CHECK(cfg.model_solver.closure.slip.c0 == 1.2);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("plant config validation") {
    PlantConfig cfg;
    cfg.noise_std = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InputDomainError);

    cfg = PlantConfig{};
    cfg.mismatch = Mismatch::none();
    cfg.mismatch.emulsion_k = cfg.model_solver.closure.emulsion_k;
    CHECK_THROWS_AS(cfg.validate(), InputDomainError);

    cfg.mismatch = Mismatch::none();
    cfg.mismatch.friction_multiplier = std::vector<double>{1.0};
    CHECK_THROWS_AS(cfg.validate(), InputDomainError);

    cfg.mismatch.friction_multiplier = std::vector<double>{0.0};
    CHECK_THROWS_AS(cfg.validate(), InputDomainError);

    cfg.mismatch = Mismatch::none();
    cfg.mismatch.density_bias = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InputDomainError);

    cfg.mismatch = Mismatch::none();
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("measurement noise") {
    PlantConfig cfg;
    const double clean = plant_measure(cfg, at(0.2), 3);
    CHECK(plant_measure(cfg, at(0.2), 4) == clean);

    cfg.noise_std = 1000.0;
    const double a = plant_measure(cfg, at(0.2), 3);
    CHECK(plant_measure(cfg, at(0.2), 3) == a);
    CHECK(plant_measure(cfg, at(0.2), 4) != a);
    CHECK(a != clean);

    // Sample moments of the noise over seeds.
    const int n = 400;
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < n; ++s) {
        const double e = plant_measure(cfg, at(0.2), static_cast<std::uint64_t>(s)) - clean;
        sum += e;
        sum2 += e * e;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    CHECK(std::abs(mean) < 4.0 * 1000.0 / std::sqrt(double(n)));
    CHECK(sd == doctest::Approx(1000.0).epsilon(0.15));
}

TEST_CASE("split tags") {
    for (auto s : {Split::train, Split::test_case1, Split::test_case2}) CHECK(split_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(split_from_string("validation"), FormatError);
}

TEST_CASE("table 3 plan") {
    const auto p = SamplingPlan::table3();
    REQUIRE(p.train.size() == 2);
    CHECK(p.train[0].count == 144);
    CHECK(p.train[1].count == 1296);
    CHECK(p.train[0].q_lo == 0.05);
    CHECK(p.train[0].q_hi == 0.15);
    CHECK(p.train[1].q_hi == 0.25);
    CHECK(p.test_case1[0].count + p.test_case1[1].count == 50);
    CHECK(p.test_case2[1].q_lo == 0.25);
    CHECK(p.test_case2[1].q_hi == 0.30);

    SamplingPlan bad = p;
    bad.train[0].q_hi = 0.01;
    CHECK_THROWS_AS(bad.validate(), InputDomainError);
    bad = p;
    bad.train.clear();
    CHECK_THROWS_AS(bad.validate(), InputDomainError);
}

TEST_CASE("table 3 dataset") {
    PlantConfig cfg;
    const auto rows = generate_dataset(cfg, flow::BoundaryConditions{}, SamplingPlan::table3(), 1);
    const auto train = select(rows, Split::train);
    const auto c1 = select(rows, Split::test_case1);
    const auto c2 = select(rows, Split::test_case2);
    CHECK(rows.size() == 1540);
    CHECK(train.size() == 1440);
    CHECK(std::count_if(train.begin(), train.end(), [](const DatasetRow& r) { return r.q_liq_std < 0.15; }) == 144);
    CHECK(c1.size() == 50);
    CHECK(c2.size() == 50);
    for (const auto& r : c2) CHECK(((r.q_liq_std >= 0.05 && r.q_liq_std <= 0.15) || r.q_liq_std >= 0.25));
    CHECK(std::count_if(c2.begin(), c2.end(), [](const DatasetRow& r) { return r.q_liq_std >= 0.25; }) == 25);

    // Case 2 shares its low range with Case 1.
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(c2[i].q_liq_std == c1[i].q_liq_std);
        CHECK(c2[i].p_in_plant == c1[i].p_in_plant);
    }

    CHECK(std::is_sorted(rows.begin(), rows.end(), [](const DatasetRow& a, const DatasetRow& b) {
        return a.split != b.split ? a.split < b.split : a.q_liq_std < b.q_liq_std;
    }));
    for (const auto& r : rows) {
        CHECK(r.p_in_plant > flow::BoundaryConditions{}.p_out);
        CHECK(r.re_features.size() == static_cast<std::size_t>(cfg.pipe.n_cells));
    }

    const double untuned = untuned_mape(cfg, c1);
    MESSAGE("default mismatch, Case-1 untuned MAPE " << untuned << "%");
    CHECK(untuned > 5.0);
    CHECK(untuned < 25.0);
}

TEST_CASE("features are the untuned Reynolds numbers") {
    PlantConfig cfg;
    const auto rows = generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 5);
    for (std::size_t i = 0; i < rows.size(); i += 7) {
        const auto re = model_features(cfg, at(rows[i].q_liq_std));
        CHECK(rows[i].re_features == re);
    }
}

TEST_CASE("plant equals model sanity") {
    PlantConfig cfg;
    cfg.mismatch = Mismatch::none();
    const auto rows = generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 9);
    CHECK(untuned_mape(cfg, rows) < 1e-6);
}

TEST_CASE("dataset determinism") {
    PlantConfig cfg;
    const auto a = csv_of(generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 42, 1));
    const auto b = csv_of(generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 42, 1));
    const auto c = csv_of(generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 42, 3));
    const auto d = csv_of(generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 43, 1));
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a != d);
}

TEST_CASE("unsolvable rows exhaust the retry cap") {
    PlantConfig cfg;
    cfg.model_solver.max_iter = 1;
    SamplingPlan p = small_plan();
    p.retry_cap = 2;
    CHECK_THROWS_AS(generate_dataset(cfg, flow::BoundaryConditions{}, p, 1), NumericalError);
}

TEST_CASE("dataset csv round trip") {
    PlantConfig cfg;
    const auto rows = generate_dataset(cfg, flow::BoundaryConditions{}, small_plan(), 11);
    const auto text = csv_of(rows);
    CHECK(text.rfind("# format: hybridflow-dataset/1\nq_liq_std,p_in_plant,re_1,", 0) == 0);

    std::istringstream in(text);
    const auto back = read_dataset_csv(in);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].q_liq_std == rows[i].q_liq_std);
        CHECK(back[i].p_in_plant == rows[i].p_in_plant);
        CHECK(back[i].re_features == rows[i].re_features);
        CHECK(back[i].split == rows[i].split);
    }
    CHECK(csv_of(back) == text);
}

TEST_CASE("malformed dataset csv") {
    const std::string head = "# format: hybridflow-dataset/1\nq_liq_std,p_in_plant,re_1,re_2,split_tag\n";
    auto read = [](const std::string& s) {
        std::istringstream in(s);
        return read_dataset_csv(in);
    };
    CHECK(read(head + "0.1,2e6,1e5,2e5,train\n").size() == 1);
    CHECK_THROWS_AS(read(""), FormatError);
    CHECK_THROWS_AS(read("q_liq_std,p_in_plant,re_1,split_tag\n"), FormatError);
    CHECK_THROWS_AS(read("# format: hybridflow-dataset/2\n"), FormatError);
    CHECK_THROWS_AS(read("# format: hybridflow-dataset/1\nq,p,re_1,split_tag\n"), FormatError);
    CHECK_THROWS_AS(read("# format: hybridflow-dataset/1\nq_liq_std,p_in_plant,re_2,split_tag\n"), FormatError);
    CHECK_THROWS_AS(read(head + "0.1,2e6,1e5,train\n"), FormatError);
    CHECK_THROWS_AS(read(head + "0.1,2e6,1e5,2e5,\n"), FormatError);
    CHECK_THROWS_AS(read(head + "0.1,abc,1e5,2e5,train\n"), FormatError);
    CHECK_THROWS_AS(read(head + "0.1,2e6x,1e5,2e5,train\n"), FormatError);
    CHECK_THROWS_AS(read(head + "0.1,nan,1e5,2e5,train\n"), FormatError);
    CHECK_THROWS_AS(read(head + "0.1,2e6,1e5,2e5,holdout\n"), FormatError);
}
