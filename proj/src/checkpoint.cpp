#include "hybridflow/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "hybridflow/config.hpp"
#include "hybridflow/errors.hpp"

namespace hybridflow::checkpoint {

using nlohmann::json;
using config::Reader;

namespace {

void check_format(Reader& r, const char* expected, const char* what) {
    if (!r.has("format")) throw FormatError(fmt::format("{}: no format tag (expected '{}')", what, expected));
    const auto& tag = r.raw("format");
    if (!tag.is_string() || tag.get<std::string>() != expected)
        throw FormatError(fmt::format("{}: format '{}' is not supported (expected '{}')", what,
                                      tag.is_string() ? tag.get<std::string>() : tag.dump(), expected));
}

} // namespace

json model_to_json(const hybrid::HybridModel& m) {
    json j = {{"format", model_format},
              {"physics",
               {{"pipe", config::to_json(m.physics.pipe)},
                {"fluid", config::to_json(m.physics.fluid)},
                {"solver", config::to_json(m.physics.solver)},
                {"boundary", config::to_json(m.physics.base_bc)}}},
              {"backend", hybrid::to_string(m.backend)},
              {"architecture", config::to_json(m.arch())},
              {"noise", config::to_json(m.noise)},
              {"seed", m.seed},
              {"scaler",
               {{"mean", m.scaler.mean},
                {"std", m.scaler.std},
                {"target_mean", m.scaler.target_mean},
                {"target_std", m.scaler.target_std}}}};
    if (m.backend == hybrid::Backend::mc_dropout)
        j["mc"] = {{"p_mc", m.dropout.p_mc}, {"params", m.dropout.params}};
    else
        j["bbp"] = {{"mu", m.bbp.posterior.mu},
                    {"rho", m.bbp.posterior.rho},
                    {"prior_mean", m.bbp.prior.mean},
                    {"prior_std", m.bbp.prior.std}};
    return j;
}

hybrid::HybridModel model_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("checkpoint: not a JSON object");
    Reader r(j, "", Reader::Errors::format);
    check_format(r, model_format, "checkpoint");
    hybrid::HybridModel m;
    try {
        auto ph = r.child("physics");
        config::read_into(ph.child("pipe"), m.physics.pipe);
        config::read_into(ph.child("fluid"), m.physics.fluid);
        config::read_into(ph.child("solver"), m.physics.solver);
        config::read_into(ph.child("boundary"), m.physics.base_bc);
        ph.finish();
        m.backend = hybrid::backend_from_string(r.require<std::string>("backend"));
        bnn::MLPArchitecture arch;
        config::read_into(r.child("architecture"), arch);
        config::read_into(r.child("noise"), m.noise);
        m.seed = r.require<std::uint64_t>("seed");
        auto s = r.child("scaler");
        m.scaler.mean = s.require<std::vector<double>>("mean");
        m.scaler.std = s.require<std::vector<double>>("std");
        m.scaler.target_mean = s.require<double>("target_mean");
        m.scaler.target_std = s.require<double>("target_std");
        s.finish();

        m.dropout.arch = arch;
        m.bbp.arch = arch;
        if (m.backend == hybrid::Backend::mc_dropout) {
            auto mc = r.child("mc");
            m.dropout.p_mc = mc.require<double>("p_mc");
            m.dropout.params = mc.require<std::vector<double>>("params");
            mc.finish();
            m.dropout.noise = m.noise;
            m.dropout.seed = m.seed;
        } else {
            auto b = r.child("bbp");
            m.bbp.posterior.mu = b.require<std::vector<double>>("mu");
            m.bbp.posterior.rho = b.require<std::vector<double>>("rho");
            m.bbp.prior.mean = b.require<std::vector<double>>("prior_mean");
            m.bbp.prior.std = b.require<std::vector<double>>("prior_std");
            b.finish();
            m.bbp.noise = m.noise;
            m.bbp.seed = m.seed;
        }
        r.finish();
        m.validate();
    } catch (const InputDomainError& e) {
        throw FormatError(fmt::format("checkpoint: {}", e.what()));
    }
    return m;
}

void save_model(const std::string& path, const hybrid::HybridModel& model) {
    std::ofstream out(path);
    if (!out) throw FormatError(fmt::format("cannot write checkpoint '{}'", path));
    out << model_to_json(model).dump() << '\n';
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path));
}

hybrid::HybridModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open checkpoint '{}'", path));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(fmt::format("checkpoint '{}' is not valid JSON (expected format '{}'): {}", path,
                                      model_format, e.what()));
    }
    return model_from_json(j);
}

json report_to_json(const hybrid::EvalReport& rep) {
    json bands = json::array();
    for (const auto& b : rep.bands)
        bands.push_back({{"name", b.name},
                         {"n", b.n},
                         {"mape_untuned", b.mape_untuned},
                         {"mape_tuned", b.mape_tuned},
                         {"ci95_mean", b.ci95_mean}});
    json records = json::array();
    for (const auto& r : rep.records)
        records.push_back({{"q_liq_std", r.q_liq_std},
                           {"target", r.target},
                           {"mean", r.mean},
                           {"ci95_half_width", r.ci95_half_width},
                           {"untuned", r.untuned},
                           {"replication", r.replication},
                           {"excluded", r.excluded},
                           {"band", r.band}});
    return {{"format", report_format},
            {"backend", rep.backend},
            {"test_case", rep.test_case},
            {"replications", rep.replications},
            {"passes", rep.passes},
            {"excluded_total", rep.excluded_total},
            {"units", {{"mape", "percent"}, {"ci95", "Pa, half width"}}},
            {"bands", bands},
            {"records", records}};
}

hybrid::EvalReport report_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("report: not a JSON object");
    Reader r(j, "", Reader::Errors::format);
    check_format(r, report_format, "report");
    hybrid::EvalReport rep;
    rep.backend = r.require<std::string>("backend");
    rep.test_case = r.require<int>("test_case");
    rep.replications = r.require<std::size_t>("replications");
    rep.passes = r.require<std::size_t>("passes");
    rep.excluded_total = r.require<std::size_t>("excluded_total");
    r.raw("units");
    const auto& bands = r.raw("bands");
    const auto& records = r.raw("records");
    if (!bands.is_array() || !records.is_array()) throw FormatError("report: bands and records must be arrays");
    for (const auto& bj : bands) {
        Reader b(bj, "bands[]", Reader::Errors::format);
        hybrid::BandStats s;
        s.name = b.require<std::string>("name");
        s.n = b.require<std::size_t>("n");
        s.mape_untuned = b.require<double>("mape_untuned");
        s.mape_tuned = b.require<double>("mape_tuned");
        s.ci95_mean = b.require<double>("ci95_mean");
        b.finish();
        rep.bands.push_back(s);
    }
    for (const auto& rj : records) {
        Reader x(rj, "records[]", Reader::Errors::format);
        hybrid::RowRecord rec;
        rec.q_liq_std = x.require<double>("q_liq_std");
        rec.target = x.require<double>("target");
        rec.mean = x.require<double>("mean");
        rec.ci95_half_width = x.require<double>("ci95_half_width");
        rec.untuned = x.require<double>("untuned");
        rec.replication = x.require<int>("replication");
        rec.excluded = x.require<std::size_t>("excluded");
        rec.band = x.require<std::string>("band");
        x.finish();
        rep.records.push_back(rec);
    }
    r.finish();
    return rep;
}

} // namespace hybridflow::checkpoint
