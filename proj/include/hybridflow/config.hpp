#pragma once

// Run configuration: every knob of a pipeline run in one JSON document.
// Missing keys keep their defaults; unknown keys are rejected by name.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "hybridflow/drift_flux.hpp"
#include "hybridflow/fluid_props.hpp"
#include "hybridflow/hybrid.hpp"
#include "hybridflow/plant.hpp"

namespace hybridflow::config {

inline constexpr const char* config_format = "hybridflow-config/1";

struct PlantSection {
    plant::Mismatch mismatch = plant::Mismatch::default_mismatch();
    double noise_std = 0.0; // Pa
};

struct ExperimentSettings {
    plant::SamplingPlan plan = plant::SamplingPlan::table3();
    std::uint64_t seed = 1;
    std::size_t passes = 200;      // prediction passes T per row
    std::size_t replications = 5;  // predictions per test row
    unsigned threads = 1;          // dataset generation and prediction
};

/// Stream seeds derived from the master seed.
struct Seeds {
    std::uint64_t data, train_mc, train_bbp, eval;
    static Seeds from(std::uint64_t master);
};

struct RunConfig {
    fluid::FluidSpec fluid;
    flow::PipeConfig pipe;
    flow::BoundaryConditions boundary;
    flow::SolverSettings solver;
    PlantSection plant;
    hybrid::TrainSettings training = default_training();
    ExperimentSettings experiment;

    void validate() const;
    plant::PlantConfig plant_config() const;
    hybrid::PhysicsSetup physics() const;

    /// Network, optimizer and prior defaults used by the shipped configuration.
    static hybrid::TrainSettings default_training();
};

nlohmann::json to_json(const RunConfig& cfg);
/// Throws InputDomainError naming the first unknown or mistyped key.
RunConfig config_from_json(const nlohmann::json& j);

/// FormatError for unreadable files or malformed JSON; InputDomainError for bad content.
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

// Pieces shared with the checkpoint format.
nlohmann::json to_json(const flow::PipeConfig& p);
nlohmann::json to_json(const fluid::FluidSpec& f);
nlohmann::json to_json(const flow::BoundaryConditions& bc);
nlohmann::json to_json(const flow::SolverSettings& s);
nlohmann::json to_json(const bnn::MLPArchitecture& a);
nlohmann::json to_json(const bnn::NoiseModel& n);

/// Strict object reader: tracks the keys it was asked for and reports the rest.
/// Errors carry the dotted path of the offending key.
class Reader {
public:
    enum class Errors { validation, format };
    Reader(const nlohmann::json& j, std::string path, Errors kind = Errors::validation);

    bool has(const std::string& key) const;
    template <class T>
    void get(const std::string& key, T& out);
    template <class T>
    T require(const std::string& key);
    Reader child(const std::string& key);
    const nlohmann::json& raw(const std::string& key);
    /// Throws for any key never touched through this reader.
    void finish() const;
    [[noreturn]] void fail(const std::string& what) const;
    std::string path_of(const std::string& key) const;

private:
    const nlohmann::json& j_;
    std::string path_;
    Errors kind_;
    std::vector<std::string> seen_;
};

template <class T>
void Reader::get(const std::string& key, T& out) {
    if (!has(key)) return;
    seen_.push_back(key);
    try {
        out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(path_of(key) + ": " + e.what());
    }
}

template <class T>
T Reader::require(const std::string& key) {
    if (!has(key)) fail("missing key '" + path_of(key) + "'");
    T v{};
    get(key, v);
    return v;
}

void read_into(Reader r, flow::PipeConfig& p);
void read_into(Reader r, fluid::FluidSpec& f);
void read_into(Reader r, flow::BoundaryConditions& bc);
void read_into(Reader r, flow::SolverSettings& s);
void read_into(Reader r, bnn::MLPArchitecture& a);
void read_into(Reader r, bnn::NoiseModel& n);

} // namespace hybridflow::config
