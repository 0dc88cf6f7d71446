#pragma once

// Synthetic reference plant: the drift-flux model run with deliberately
// different closures, plus the sampling plan that turns it into datasets.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hybridflow/drift_flux.hpp"
#include "hybridflow/fluid_props.hpp"

namespace hybridflow::plant {

/// Closures the plant uses instead of the model's. A disengaged field keeps
/// the model's closure.
struct Mismatch {
    std::optional<double> emulsion_k;
    std::optional<double> density_bias;
    std::optional<flow::SlipClosure> slip;
    /// One entry (uniform) or one per cell.
    std::optional<std::vector<double>> friction_multiplier;

    bool is_none() const;
    static Mismatch none() { return {}; }
    /// Emulsion viscosity k = 1.5, 5% density bias, C0 = 1.15, friction x1.2.
    static Mismatch default_mismatch();

    /// The model's closures with this mismatch applied.
    flow::ClosureSet apply(const flow::ClosureSet& model, int n_cells) const;
};

struct PlantConfig {
    flow::PipeConfig pipe;
    fluid::FluidSpec fluid;
    flow::SolverSettings model_solver; // the model under test
    Mismatch mismatch = Mismatch::default_mismatch();
    double noise_std = 0.0; // Pa

    /// A non-empty mismatch must differ from the model in at least one closure.
    void validate() const;
    flow::SolverSettings plant_solver() const;
};

/// Plant inlet pressure plus N(0, noise_std) noise from the seeded generator.
double plant_measure(const PlantConfig& cfg, const flow::BoundaryConditions& bc, std::uint64_t seed);

enum class Split { train, test_case1, test_case2 };
const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct FlowRange {
    double q_lo = 0.0; // m3/s
    double q_hi = 0.0;
    std::size_t count = 0;
};

struct SamplingPlan {
    std::vector<FlowRange> train;
    std::vector<FlowRange> test_case1;
    /// Ranges of Case 2 that coincide with a Case-1 range reuse those rows.
    std::vector<FlowRange> test_case2;
    int retry_cap = 5;

    void validate() const;
    /// Training 144 + 1296 rows on [0.05, 0.15] and [0.15, 0.25]; Case 1 25 + 25
    /// rows on the same ranges; Case 2 low rows of Case 1 plus 25 on [0.25, 0.30].
    static SamplingPlan table3();
};

struct DatasetRow {
    double q_liq_std = 0.0; // m3/s
    double p_in_plant = 0.0; // Pa
    std::vector<double> re_features;
    Split split = Split::train;
};

/// Untuned-model cell Reynolds numbers at bc.
std::vector<double> model_features(const PlantConfig& cfg, const flow::BoundaryConditions& bc);

/// Rows sorted by split, then q_liq_std. Each row draws from its own stream
/// (split, range, index), so threads do not change the result. A failing row
/// is redrawn up to retry_cap times before the error propagates.
std::vector<DatasetRow> generate_dataset(const PlantConfig& cfg, const flow::BoundaryConditions& base_bc,
                                         const SamplingPlan& plan, std::uint64_t seed, unsigned threads = 1);

std::vector<DatasetRow> select(const std::vector<DatasetRow>& rows, Split split);

inline constexpr const char* dataset_format = "hybridflow-dataset/1";

/// "# format: hybridflow-dataset/1", then q_liq_std,p_in_plant,re_1..re_n,split_tag.
void write_dataset_csv(std::ostream& out, const std::vector<DatasetRow>& rows);
std::vector<DatasetRow> read_dataset_csv(std::istream& in);

} // namespace hybridflow::plant
