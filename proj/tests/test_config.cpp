#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "hybridflow/checkpoint.hpp"
#include "hybridflow/config.hpp"
#include "hybridflow/errors.hpp"

using namespace hybridflow;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("hybridflow_test_" + name)).string();
}

config::RunConfig parse(const std::string& text) { return config::config_from_json(json::parse(text)); }

std::string error_of(const std::string& text) {
    try {
        parse(text).validate();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

hybrid::HybridModel sample_model(hybrid::Backend backend) {
    hybrid::HybridModel m;
    m.backend = backend;
    m.seed = 0xDEADBEEFCAFEULL;
    m.dropout.arch.layer_sizes = {10, 4, 10};
    m.bbp.arch = m.dropout.arch;
    const auto n = m.dropout.arch.n_params();
    Rng rng(3);
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < n; ++i) m.dropout.params.push_back(g(rng) / 3.0);
    m.dropout.p_mc = 0.125;
    std::vector<double> sd(n);
    for (auto& s : sd) s = 0.01 + std::abs(g(rng)) * 1e-3;
    m.bbp.posterior = bnn::VariationalPosterior::from_mean_std(m.dropout.params, sd);
    m.bbp.prior.mean = m.dropout.params;
    m.bbp.prior.std = sd;
    for (int i = 0; i < 10; ++i) {
        m.scaler.mean.push_back(6e5 + 1e4 * i + 0.1);
        m.scaler.std.push_back(1e5 / 3.0);
    }
    m.scaler.target_mean = 3.3e6 / 7.0;
    m.scaler.target_std = 8e5 / 3.0;
    m.noise.sigma2 = 1.0 / 3.0 * 1e-4;
    m.physics.solver.closure.friction_multiplier = {1.0, 1.1};
    return m;
}

} // namespace

TEST_CASE("default configuration encodes the Table 1 / Table 3 setup") {
    const config::RunConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.pipe.length == 1000.0);
    CHECK(c.pipe.diameter == 0.2);
    CHECK(c.pipe.n_cells == 10);
    CHECK(c.fluid.gor == 50.0);
    CHECK(c.fluid.wc == 0.3);
    CHECK(c.boundary.p_out == 10e5);
    CHECK(c.experiment.plan.train[0].count == 144);
    CHECK(c.experiment.plan.train[1].count == 1296);
    CHECK(c.experiment.plan.test_case2[1].q_hi == 0.30);
    CHECK(c.experiment.replications == 5);
    CHECK(c.experiment.passes == 200);
    CHECK(c.training.arch.layer_sizes == std::vector<std::size_t>{10, 32, 32, 10});
}

TEST_CASE("bundled default file equals the built-in defaults") {
    const auto path = std::string(HYBRIDFLOW_SOURCE_DIR) + "/configs/default.json";
    const auto loaded = config::load_config(path);
    CHECK(config::to_json(loaded) == config::to_json(config::RunConfig{}));
}

TEST_CASE("config round trip") {
    config::RunConfig c;
    c.plant.mismatch = plant::Mismatch::none();
    c.plant.mismatch.friction_multiplier = std::vector<double>{1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9};
    c.plant.noise_std = 1234.5678901234567;
    c.solver.closure.slip.model = flow::SlipModel::no_slip;
    c.training.dropout.noise.sigma2 = 1.0 / 3.0;
    c.training.bbp.noise = c.training.dropout.noise;
    c.training.bbp.optimizer.kind = bnn::OptimizerKind::sgd_momentum;
    c.experiment.seed = 18446744073709551615ULL;
    c.experiment.plan.retry_cap = 2;

    const auto j = config::to_json(c);
    const auto back = config::config_from_json(j);
    CHECK(config::to_json(back) == j);
    CHECK(back.plant.noise_std == c.plant.noise_std);
    CHECK(back.experiment.seed == c.experiment.seed);
    CHECK(*back.plant.mismatch.friction_multiplier == *c.plant.mismatch.friction_multiplier);
    CHECK(!back.plant.mismatch.emulsion_k);

    // Through text as well.
    const auto again = config::config_from_json(json::parse(j.dump()));
    CHECK(config::to_json(again) == j);

    const auto path = temp_path("config.json");
    config::save_config(path, c);
    CHECK(config::to_json(config::load_config(path)) == j);
    std::remove(path.c_str());
}

TEST_CASE("partial configs keep defaults") {
    const auto c = parse(R"({"pipe": {"n_cells": 10, "length": 800}, "experiment": {"seed": 9}})");
    CHECK(c.pipe.length == 800.0);
    CHECK(c.pipe.diameter == 0.2);
    CHECK(c.experiment.seed == 9);
    CHECK(c.experiment.passes == 200);
    CHECK(c.plant.mismatch.emulsion_k.value() == 1.5);

    const auto none = parse(R"({"plant": {"mismatch": {}}})");
    CHECK(none.plant.mismatch.is_none());
}

TEST_CASE("unknown and mistyped keys are rejected by name") {
    CHECK(error_of(R"({"pipe": {"lenght": 5}})").find("pipe.lenght") != std::string::npos);
    CHECK(error_of(R"({"colour": 1})").find("'colour'") != std::string::npos);
    CHECK(error_of(R"({"bnn": {"mc_dropout": {"optimizer": {"lr": 1}}}})").find("bnn.mc_dropout.optimizer.lr") !=
          std::string::npos);
    CHECK(error_of(R"({"experiment": {"plan": {"train": [{"q_lo": 0.1, "q_hi": 0.2, "count": 3, "x": 1}]}}})")
              .find("experiment.plan.train[0].x") != std::string::npos);
    CHECK(error_of(R"({"pipe": {"length": "long"}})").find("pipe.length") != std::string::npos);
    CHECK(error_of(R"({"experiment": {"passes": -5}})").find("experiment.passes") != std::string::npos);
    CHECK(error_of(R"({"bnn": {"mc_dropout": {"optimizer": {"batch_size": 2.5}}}})").find("batch_size") !=
          std::string::npos);
    CHECK(error_of(R"({"solver": {"closure": {"slip": {"model": "drift"}}}})").find("drift") != std::string::npos);
    CHECK(error_of(R"({"bnn": {"architecture": {"activation": "sigmoid"}}})").find("sigmoid") != std::string::npos);
    CHECK(error_of(R"([1, 2])").find("object") != std::string::npos);
    CHECK_THROWS_AS(parse(R"({"pipe": {"lenght": 5}})"), InputDomainError);
    CHECK_THROWS_AS(parse(R"({"format": "hybridflow-config/0"})"), FormatError);
}

TEST_CASE("config validation") {
    CHECK(error_of(R"({"bnn": {"architecture": {"layer_sizes": [10, 8, 9]}}})").find("10 outputs") !=
          std::string::npos);
    CHECK(!error_of(R"({"bnn": {"mc_dropout": {"p_mc": 1.0}}})").empty());
    CHECK(!error_of(R"({"experiment": {"passes": 1}})").empty());
    CHECK(!error_of(R"({"experiment": {"replications": 0}})").empty());
    CHECK(!error_of(R"({"plant": {"noise_std": -1}})").empty());
    CHECK(!error_of(R"({"plant": {"mismatch": {"emulsion_k": 0.0}}})").empty());
    CHECK(!error_of(R"({"bnn": {"bbp": {"prior": {"floor": 0}}}})").empty());
    CHECK(!error_of(R"({"bnn": {"sensitivity": {"relax": 0}}})").empty());
    CHECK(!error_of(R"({"experiment": {"plan": {"test_case2": []}}})").empty());
    CHECK(!error_of(R"({"boundary": {"p_out": -1}})").empty());
}

TEST_CASE("load_config file errors") {
    CHECK_THROWS_AS(config::load_config(temp_path("does_not_exist.json")), FormatError);
    const auto path = temp_path("broken.json");
    {
        std::ofstream out(path);
        out << "{\"pipe\": ";
    }
    CHECK_THROWS_AS(config::load_config(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("seed streams") {
    const auto a = config::Seeds::from(1);
    const auto b = config::Seeds::from(2);
    CHECK(a.data != a.train_mc);
    CHECK(a.train_mc != a.train_bbp);
    CHECK(a.train_bbp != a.eval);
    CHECK(a.data != b.data);
    CHECK(config::Seeds::from(1).eval == a.eval);
}

TEST_CASE("checkpoint round trip") {
    for (auto backend : {hybrid::Backend::mc_dropout, hybrid::Backend::bbp}) {
        CAPTURE(hybrid::to_string(backend));
        const auto m = sample_model(backend);
        const auto path = temp_path("model.json");
        checkpoint::save_model(path, m);
        const auto back = checkpoint::load_model(path);
        std::remove(path.c_str());
        CHECK(back.backend == m.backend);
        CHECK(back.seed == m.seed);
        CHECK(back.arch().layer_sizes == m.arch().layer_sizes);
        CHECK(back.scaler.mean == m.scaler.mean);
        CHECK(back.scaler.std == m.scaler.std);
        CHECK(back.scaler.target_mean == m.scaler.target_mean);
        CHECK(back.scaler.target_std == m.scaler.target_std);
        CHECK(back.noise.sigma2 == m.noise.sigma2);
        CHECK(back.physics.solver.closure.friction_multiplier == m.physics.solver.closure.friction_multiplier);
        if (backend == hybrid::Backend::mc_dropout) {
            CHECK(back.dropout.params == m.dropout.params);
            CHECK(back.dropout.p_mc == m.dropout.p_mc);
        } else {
            CHECK(back.bbp.posterior.mu == m.bbp.posterior.mu);
            CHECK(back.bbp.posterior.rho == m.bbp.posterior.rho);
            CHECK(back.bbp.prior.mean == m.bbp.prior.mean);
            CHECK(back.bbp.prior.std == m.bbp.prior.std);
        }
        CHECK(checkpoint::model_to_json(back) == checkpoint::model_to_json(m));
    }
}

TEST_CASE("corrupted checkpoints") {
    const auto good = checkpoint::model_to_json(sample_model(hybrid::Backend::mc_dropout));
    auto message = [](const json& j) -> std::string {
        try {
            checkpoint::model_from_json(j);
        } catch (const FormatError& e) {
            return e.what();
        }
        return "";
    };
    auto j = good;
    j["format"] = "hybridflow-model/0";
    CHECK(message(j).find("hybridflow-model/1") != std::string::npos);
    j = good;
    j.erase("format");
    CHECK(message(j).find("format") != std::string::npos);
    j = good;
    j["mc"]["params"].erase(0);
    CHECK(message(j).find("parameter count") != std::string::npos);
    j = good;
    j.erase("scaler");
    CHECK(message(j).find("scaler") != std::string::npos);
    j = good;
    j["extra"] = 1;
    CHECK(message(j).find("extra") != std::string::npos);
    j = good;
    j["backend"] = "hmc";
    CHECK(!message(j).empty());
    CHECK(!message(json::array()).empty());

    const auto path = temp_path("truncated.json");
    {
        std::ofstream out(path);
        const auto text = good.dump();
        out << text.substr(0, text.size() / 2);
    }
    try {
        checkpoint::load_model(path);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("hybridflow-model/1") != std::string::npos);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(checkpoint::load_model(temp_path("missing_model.json")), FormatError);
}

TEST_CASE("report json round trip") {
    hybrid::EvalReport rep;
    rep.backend = "bbp";
    rep.test_case = 2;
    rep.replications = 5;
    rep.passes = 200;
    rep.excluded_total = 3;
    rep.bands = {{"low", 25, 0.1 / 3.0, 8.4, 27000.5}, {"high", 25, 0.3, 13.0, 90000.25}, {"entire", 50, 0.2, 10.7, 6e4}};
    rep.records.push_back({0.27, 5e6, 5.01e6, 1.1e5, 4.4e6, 4, 1, "high"});
    const auto j = checkpoint::report_to_json(rep);
    const auto back = checkpoint::report_from_json(json::parse(j.dump()));
    CHECK(checkpoint::report_to_json(back) == j);
    CHECK(back.band("low").mape_tuned == 0.1 / 3.0);
    CHECK(back.records.front().band == "high");

    auto bad = j;
    bad["format"] = "something-else/1";
    CHECK_THROWS_AS(checkpoint::report_from_json(bad), FormatError);
}
