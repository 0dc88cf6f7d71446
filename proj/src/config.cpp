#include "hybridflow/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "hybridflow/errors.hpp"
#include "hybridflow/rng.hpp"

namespace hybridflow::config {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

Reader::Reader(const json& j, std::string path, Errors kind) : j_(j), path_(std::move(path)), kind_(kind) {
    if (!j_.is_object()) fail(fmt::format("'{}' must be an object", path_.empty() ? "<root>" : path_));
}

bool Reader::has(const std::string& key) const { return j_.contains(key); }

std::string Reader::path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

void Reader::fail(const std::string& what) const {
    if (kind_ == Errors::format) throw FormatError(what);
    throw InputDomainError("config: " + what);
}

Reader Reader::child(const std::string& key) {
    if (!has(key)) fail("missing key '" + path_of(key) + "'");
    seen_.push_back(key);
    return Reader(j_.at(key), path_of(key), kind_);
}

const json& Reader::raw(const std::string& key) {
    if (!has(key)) fail("missing key '" + path_of(key) + "'");
    seen_.push_back(key);
    return j_.at(key);
}

void Reader::finish() const {
    for (const auto& [key, value] : j_.items())
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) fail("unknown key '" + path_of(key) + "'");
}

namespace {

// nlohmann converts -1 to a huge unsigned silently.
template <class T>
void get_count(Reader& r, const json& parent, const std::string& key, T& out) {
    if (!r.has(key)) return;
    const auto& v = parent.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
        r.fail(fmt::format("'{}' must be a non-negative integer", r.path_of(key)));
    r.get(key, out);
}

} // namespace

// ---------------------------------------------------------------------------
// Physics pieces
// ---------------------------------------------------------------------------

json to_json(const flow::PipeConfig& p) {
    return {{"length", p.length},         {"diameter", p.diameter}, {"roughness", p.roughness},
            {"inclination", p.inclination}, {"n_cells", p.n_cells}, {"gravity", p.gravity}};
}

void read_into(Reader r, flow::PipeConfig& p) {
    r.get("length", p.length);
    r.get("diameter", p.diameter);
    r.get("roughness", p.roughness);
    r.get("inclination", p.inclination);
    r.get("n_cells", p.n_cells);
    r.get("gravity", p.gravity);
    r.finish();
}

json to_json(const fluid::FluidSpec& f) {
    return {{"gor", f.gor},
            {"wc", f.wc},
            {"p_bubble", f.p_bubble},
            {"t_bubble", f.t_bubble},
            {"rho_oil_std", f.rho_oil_std},
            {"rho_water_std", f.rho_water_std},
            {"rho_gas_std", f.rho_gas_std}};
}

void read_into(Reader r, fluid::FluidSpec& f) {
    r.get("gor", f.gor);
    r.get("wc", f.wc);
    r.get("p_bubble", f.p_bubble);
    r.get("t_bubble", f.t_bubble);
    r.get("rho_oil_std", f.rho_oil_std);
    r.get("rho_water_std", f.rho_water_std);
    r.get("rho_gas_std", f.rho_gas_std);
    r.finish();
}

json to_json(const flow::BoundaryConditions& bc) {
    return {{"q_liq_std", bc.q_liq_std}, {"p_out", bc.p_out}, {"t_in", bc.t_in}, {"t_out", bc.t_out}};
}

void read_into(Reader r, flow::BoundaryConditions& bc) {
    r.get("q_liq_std", bc.q_liq_std);
    r.get("p_out", bc.p_out);
    r.get("t_in", bc.t_in);
    r.get("t_out", bc.t_out);
    r.finish();
}

namespace {

const char* slip_name(flow::SlipModel m) { return m == flow::SlipModel::no_slip ? "no_slip" : "zuber_findlay"; }

json slip_json(const flow::SlipClosure& s) {
    return {{"model", slip_name(s.model)}, {"c0", s.c0}, {"horizontal_drift_factor", s.horizontal_drift_factor}};
}

void read_slip(Reader r, flow::SlipClosure& s) {
    if (r.has("model")) {
        const auto name = r.require<std::string>("model");
        if (name == "no_slip")
            s.model = flow::SlipModel::no_slip;
        else if (name == "zuber_findlay")
            s.model = flow::SlipModel::zuber_findlay;
        else
            r.fail(fmt::format("'{}': unknown slip model '{}'", r.path_of("model"), name));
    }
    r.get("c0", s.c0);
    r.get("horizontal_drift_factor", s.horizontal_drift_factor);
    r.finish();
}

} // namespace

json to_json(const flow::SolverSettings& s) {
    return {{"tol_pressure", s.tol_pressure},
            {"relax", s.relax},
            {"max_iter", s.max_iter},
            {"closure",
             {{"slip", slip_json(s.closure.slip)},
              {"emulsion_k", s.closure.emulsion_k},
              {"density_bias", s.closure.density_bias},
              {"friction_multiplier", s.closure.friction_multiplier}}}};
}

void read_into(Reader r, flow::SolverSettings& s) {
    r.get("tol_pressure", s.tol_pressure);
    r.get("relax", s.relax);
    r.get("max_iter", s.max_iter);
    if (r.has("closure")) {
        auto c = r.child("closure");
        if (c.has("slip")) read_slip(c.child("slip"), s.closure.slip);
        c.get("emulsion_k", s.closure.emulsion_k);
        c.get("density_bias", s.closure.density_bias);
        c.get("friction_multiplier", s.closure.friction_multiplier);
        c.finish();
    }
    r.finish();
}

json to_json(const bnn::MLPArchitecture& a) {
    return {{"layer_sizes", a.layer_sizes},
            {"activation", bnn::to_string(a.activation)},
            {"output_link", bnn::to_string(a.output_link)},
            {"link_clamp", a.link_clamp}};
}

void read_into(Reader r, bnn::MLPArchitecture& a) {
    r.get("layer_sizes", a.layer_sizes);
    try {
        if (r.has("activation")) a.activation = bnn::activation_from_string(r.require<std::string>("activation"));
        if (r.has("output_link")) a.output_link = bnn::output_link_from_string(r.require<std::string>("output_link"));
    } catch (const InputDomainError& e) {
        r.fail(std::string(e.what()));
    }
    r.get("link_clamp", a.link_clamp);
    r.finish();
}

json to_json(const bnn::NoiseModel& n) { return {{"sigma2", n.sigma2}, {"learnable", n.learnable}}; }

void read_into(Reader r, bnn::NoiseModel& n) {
    r.get("sigma2", n.sigma2);
    r.get("learnable", n.learnable);
    r.finish();
}

// ---------------------------------------------------------------------------
// Plant, training and experiment sections
// ---------------------------------------------------------------------------

namespace {

json mismatch_json(const plant::Mismatch& m) {
    json j = json::object();
    if (m.emulsion_k) j["emulsion_k"] = *m.emulsion_k;
    if (m.density_bias) j["density_bias"] = *m.density_bias;
    if (m.slip) j["slip"] = slip_json(*m.slip);
    if (m.friction_multiplier) j["friction_multiplier"] = *m.friction_multiplier;
    return j;
}

plant::Mismatch read_mismatch(Reader r) {
    plant::Mismatch m;
    if (r.has("emulsion_k")) m.emulsion_k = r.require<double>("emulsion_k");
    if (r.has("density_bias")) m.density_bias = r.require<double>("density_bias");
    if (r.has("slip")) {
        flow::SlipClosure s;
        read_slip(r.child("slip"), s);
        m.slip = s;
    }
    if (r.has("friction_multiplier")) m.friction_multiplier = r.require<std::vector<double>>("friction_multiplier");
    r.finish();
    return m;
}

json optimizer_json(const bnn::OptimizerSettings& o) {
    return {{"kind", bnn::to_string(o.kind)},
            {"learning_rate", o.learning_rate},
            {"momentum", o.momentum},
            {"adam_beta2", o.adam_beta2},
            {"adam_epsilon", o.adam_epsilon},
            {"batch_size", o.batch_size},
            {"epochs", o.epochs},
            {"plateau_patience", o.plateau_patience},
            {"plateau_factor", o.plateau_factor},
            {"plateau_tolerance", o.plateau_tolerance},
            {"min_learning_rate", o.min_learning_rate},
            {"grad_clip", o.grad_clip},
            {"threads", o.threads}};
}

void read_optimizer(Reader r, const json& node, bnn::OptimizerSettings& o) {
    if (r.has("kind")) {
        try {
            o.kind = bnn::optimizer_kind_from_string(r.require<std::string>("kind"));
        } catch (const InputDomainError& e) {
            r.fail(r.path_of("kind") + ": " + e.what());
        }
    }
    r.get("learning_rate", o.learning_rate);
    r.get("momentum", o.momentum);
    r.get("adam_beta2", o.adam_beta2);
    r.get("adam_epsilon", o.adam_epsilon);
    get_count(r, node, "batch_size", o.batch_size);
    r.get("epochs", o.epochs);
    r.get("plateau_patience", o.plateau_patience);
    r.get("plateau_factor", o.plateau_factor);
    r.get("plateau_tolerance", o.plateau_tolerance);
    r.get("min_learning_rate", o.min_learning_rate);
    r.get("grad_clip", o.grad_clip);
    get_count(r, node, "threads", o.threads);
    r.finish();
}

json training_json(const hybrid::TrainSettings& t) {
    return {{"architecture", to_json(t.arch)},
            {"noise", to_json(t.dropout.noise)},
            {"mc_dropout",
             {{"p_mc", t.dropout.p_mc},
              {"init_output_scale", t.dropout.init_output_scale},
              {"optimizer", optimizer_json(t.dropout.optimizer)}}},
            {"bbp",
             {{"n_samples", t.bbp.n_samples},
              {"optimizer", optimizer_json(t.bbp.optimizer)},
              {"prior",
               {{"mask_samples", t.prior_mask_samples},
                {"inflation", t.prior_inflation},
                {"floor", t.prior_floor}}}}},
            {"sensitivity",
             {{"rel_step", t.sensitivity.rel_step},
              {"tol_pressure", t.sensitivity.tol_pressure},
              {"relax", t.sensitivity.relax}}},
            {"threads", t.threads}};
}

void read_training(Reader r, const json& node, hybrid::TrainSettings& t) {
    if (r.has("architecture")) read_into(r.child("architecture"), t.arch);
    if (r.has("noise")) {
        read_into(r.child("noise"), t.dropout.noise);
    }
    t.bbp.noise = t.dropout.noise;
    if (r.has("mc_dropout")) {
        const auto& n = node.at("mc_dropout");
        auto m = r.child("mc_dropout");
        m.get("p_mc", t.dropout.p_mc);
        m.get("init_output_scale", t.dropout.init_output_scale);
        if (m.has("optimizer")) read_optimizer(m.child("optimizer"), n.at("optimizer"), t.dropout.optimizer);
        m.finish();
    }
    if (r.has("bbp")) {
        const auto& n = node.at("bbp");
        auto b = r.child("bbp");
        b.get("n_samples", t.bbp.n_samples);
        if (b.has("optimizer")) read_optimizer(b.child("optimizer"), n.at("optimizer"), t.bbp.optimizer);
        if (b.has("prior")) {
            const auto& pn = n.at("prior");
            auto p = b.child("prior");
            get_count(p, pn, "mask_samples", t.prior_mask_samples);
            p.get("inflation", t.prior_inflation);
            p.get("floor", t.prior_floor);
            p.finish();
        }
        b.finish();
    }
    if (r.has("sensitivity")) {
        auto s = r.child("sensitivity");
        s.get("rel_step", t.sensitivity.rel_step);
        s.get("tol_pressure", t.sensitivity.tol_pressure);
        s.get("relax", t.sensitivity.relax);
        s.finish();
    }
    get_count(r, node, "threads", t.threads);
    r.finish();
}

json ranges_json(const std::vector<plant::FlowRange>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back({{"q_lo", r.q_lo}, {"q_hi", r.q_hi}, {"count", r.count}});
    return a;
}

std::vector<plant::FlowRange> read_ranges(Reader& parent, const std::string& key) {
    const auto& arr = parent.raw(key);
    if (!arr.is_array()) parent.fail(fmt::format("'{}' must be an array", parent.path_of(key)));
    std::vector<plant::FlowRange> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader r(arr[i], fmt::format("{}[{}]", parent.path_of(key), i));
        plant::FlowRange f;
        f.q_lo = r.require<double>("q_lo");
        f.q_hi = r.require<double>("q_hi");
        get_count(r, arr[i], "count", f.count);
        if (!r.has("count")) r.fail(fmt::format("missing key '{}'", r.path_of("count")));
        r.finish();
        out.push_back(f);
    }
    return out;
}

json experiment_json(const ExperimentSettings& e) {
    return {{"seed", e.seed},
            {"passes", e.passes},
            {"replications", e.replications},
            {"threads", e.threads},
            {"plan",
             {{"train", ranges_json(e.plan.train)},
              {"test_case1", ranges_json(e.plan.test_case1)},
              {"test_case2", ranges_json(e.plan.test_case2)},
              {"retry_cap", e.plan.retry_cap}}}};
}

void read_experiment(Reader r, const json& node, ExperimentSettings& e) {
    get_count(r, node, "seed", e.seed);
    get_count(r, node, "passes", e.passes);
    get_count(r, node, "replications", e.replications);
    get_count(r, node, "threads", e.threads);
    if (r.has("plan")) {
        auto p = r.child("plan");
        if (p.has("train")) e.plan.train = read_ranges(p, "train");
        if (p.has("test_case1")) e.plan.test_case1 = read_ranges(p, "test_case1");
        if (p.has("test_case2")) e.plan.test_case2 = read_ranges(p, "test_case2");
        p.get("retry_cap", e.plan.retry_cap);
        p.finish();
    }
    r.finish();
}

} // namespace

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

Seeds Seeds::from(std::uint64_t master) {
    return {split_seed(master, 0), split_seed(master, 1), split_seed(master, 2), split_seed(master, 3)};
}

hybrid::TrainSettings RunConfig::default_training() {
    hybrid::TrainSettings t;
    t.arch.layer_sizes = {10, 32, 32, 10};
    t.dropout.p_mc = 0.1;
    t.dropout.noise.sigma2 = 1e-4;
    t.dropout.init_output_scale = 0.01;
    auto& o = t.dropout.optimizer;
    o.kind = bnn::OptimizerKind::adam;
    o.learning_rate = 1e-3;
    o.batch_size = 64;
    o.epochs = 40;
    o.plateau_patience = 10;
    o.min_learning_rate = 1e-5;
    t.bbp.noise = t.dropout.noise;
    t.bbp.n_samples = 3;
    t.bbp.optimizer = o;
    t.bbp.optimizer.epochs = 20;
    t.prior_mask_samples = 200;
    t.prior_inflation = 1.5;
    t.prior_floor = 0.01;
    return t;
}

plant::PlantConfig RunConfig::plant_config() const {
    plant::PlantConfig p;
    p.pipe = pipe;
    p.fluid = fluid;
    p.model_solver = solver;
    p.mismatch = plant.mismatch;
    p.noise_std = plant.noise_std;
    return p;
}

hybrid::PhysicsSetup RunConfig::physics() const {
    hybrid::PhysicsSetup ph;
    ph.pipe = pipe;
    ph.fluid = fluid;
    ph.solver = solver;
    ph.base_bc = boundary;
    return ph;
}

void RunConfig::validate() const {
    fluid.validate();
    pipe.validate();
    boundary.validate();
    solver.validate();
    plant_config().validate();

    const auto& t = training;
    t.arch.validate();
    const auto n = static_cast<std::size_t>(pipe.n_cells);
    if (t.arch.input_size() != n || t.arch.output_size() != n)
        throw InputDomainError(fmt::format("config: bnn.architecture must map {} inputs to {} outputs", n, n));
    t.dropout.noise.validate();
    t.dropout.optimizer.validate();
    t.bbp.optimizer.validate();
    if (!(t.dropout.p_mc >= 0.0 && t.dropout.p_mc < 1.0))
        throw InputDomainError("config: bnn.mc_dropout.p_mc must be in [0, 1)");
    if (!(t.dropout.init_output_scale >= 0.0))
        throw InputDomainError("config: bnn.mc_dropout.init_output_scale must be >= 0");
    if (t.bbp.n_samples < 1) throw InputDomainError("config: bnn.bbp.n_samples must be >= 1");
    if (t.prior_mask_samples < 2) throw InputDomainError("config: bnn.bbp.prior.mask_samples must be >= 2");
    if (!(t.prior_inflation > 0.0)) throw InputDomainError("config: bnn.bbp.prior.inflation must be > 0");
    if (!(t.prior_floor > 0.0)) throw InputDomainError("config: bnn.bbp.prior.floor must be > 0");
    t.sensitivity.validate();

    experiment.plan.validate();
    if (experiment.plan.test_case1.empty() || experiment.plan.test_case2.empty())
        throw InputDomainError("config: experiment.plan needs test_case1 and test_case2 ranges");
    if (experiment.passes < 2) throw InputDomainError("config: experiment.passes must be >= 2");
    if (experiment.replications < 1) throw InputDomainError("config: experiment.replications must be >= 1");
}

json to_json(const RunConfig& c) {
    return {{"format", config_format},
            {"fluid", to_json(c.fluid)},
            {"pipe", to_json(c.pipe)},
            {"boundary", to_json(c.boundary)},
            {"solver", to_json(c.solver)},
            {"plant", {{"mismatch", mismatch_json(c.plant.mismatch)}, {"noise_std", c.plant.noise_std}}},
            {"bnn", training_json(c.training)},
            {"experiment", experiment_json(c.experiment)}};
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    Reader r(j, "");
    if (r.has("format")) {
        const auto f = r.require<std::string>("format");
        if (f != config_format)
            throw FormatError(fmt::format("config: format '{}' is not supported (expected '{}')", f, config_format));
    }
    if (r.has("fluid")) read_into(r.child("fluid"), c.fluid);
    if (r.has("pipe")) read_into(r.child("pipe"), c.pipe);
    if (r.has("boundary")) read_into(r.child("boundary"), c.boundary);
    if (r.has("solver")) read_into(r.child("solver"), c.solver);
    if (r.has("plant")) {
        auto p = r.child("plant");
        if (p.has("mismatch")) c.plant.mismatch = read_mismatch(p.child("mismatch"));
        p.get("noise_std", c.plant.noise_std);
        p.finish();
    }
    if (r.has("bnn")) read_training(r.child("bnn"), j.at("bnn"), c.training);
    if (r.has("experiment")) read_experiment(r.child("experiment"), j.at("experiment"), c.experiment);
    r.finish();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open config '{}'", path));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(fmt::format("config '{}' is not valid JSON: {}", path, e.what()));
    }
    auto c = config_from_json(j);
    c.validate();
    return c;
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw FormatError(fmt::format("cannot write config '{}'", path));
    out << to_json(cfg).dump(2) << '\n';
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path));
}

} // namespace hybridflow::config
