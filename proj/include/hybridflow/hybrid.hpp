#pragma once

// The network as a per-cell friction correction inside the drift-flux solve:
// training against plant inlet pressures, sampled prediction and evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hybridflow/bnn.hpp"
#include "hybridflow/drift_flux.hpp"
#include "hybridflow/plant.hpp"

namespace hybridflow::hybrid {

struct PhysicsSetup {
    flow::PipeConfig pipe;
    fluid::FluidSpec fluid;
    flow::SolverSettings solver;
    /// Outlet pressure and temperatures; q_liq_std is set per row.
    flow::BoundaryConditions base_bc;

    flow::BoundaryConditions at(double q_liq_std) const;
};

/// Standardization of Reynolds features and of the inlet-pressure target.
struct FeatureScaler {
    std::vector<double> mean, std;
    double target_mean = 0.0, target_std = 1.0;

    static FeatureScaler fit(const std::vector<plant::DatasetRow>& train);
    std::vector<double> transform(const std::vector<double>& re) const;
    double scale_target(double p) const { return (p - target_mean) / target_std; }
    double unscale_target(double z) const { return target_mean + z * target_std; }
    void validate(std::size_t n_features) const;
};

enum class Backend { mc_dropout, bbp };
const char* to_string(Backend b);
Backend backend_from_string(const std::string& s);

struct HybridModel {
    PhysicsSetup physics;
    Backend backend = Backend::mc_dropout;
    bnn::DropoutNet dropout; // used when backend == mc_dropout
    bnn::BbpNet bbp;         // used when backend == bbp
    FeatureScaler scaler;
    bnn::NoiseModel noise;   // standardized target units
    std::uint64_t seed = 0;

    const bnn::MLPArchitecture& arch() const;
    void validate() const;
};

/// Converged untuned solve; its re_mix are the features, its friction the baseline.
flow::GridState baseline_state(const PhysicsSetup& physics, const flow::BoundaryConditions& bc);
std::vector<double> extract_features(const PhysicsSetup& physics, const flow::BoundaryConditions& bc);

/// xi_i = baseline_i * output_i, where output is the linked network output.
flow::FrictionVector friction_from_output(const flow::FrictionVector& baseline, const std::vector<double>& output);
/// Network pass (with an optional dropout mask or explicit weights) mapped to friction.
flow::FrictionVector friction_from_network(const HybridModel& model, const std::vector<double>& scaled_features,
                                           const flow::FrictionVector& baseline, std::span<const double> weights,
                                           const bnn::DropoutMask* mask = nullptr);

/// Solve with the given friction; warm_start (typically the baseline) seeds the pressure field.
flow::GridState hybrid_solve(const PhysicsSetup& physics, const flow::BoundaryConditions& bc,
                             const flow::FrictionVector& friction, const flow::GridState* warm_start = nullptr);
double hybrid_forward(const PhysicsSetup& physics, const flow::BoundaryConditions& bc,
                      const flow::FrictionVector& friction, const flow::GridState* warm_start = nullptr);

struct SensitivitySettings {
    double rel_step = 1e-4;     // h_i = rel_step * xi_i
    double tol_pressure = 1e-3; // Pa, for the perturbed solves
    /// Relaxation of the perturbed solves; they start next to their solution.
    double relax = 1.0;
    void validate() const;
};

/// Central differences d p_in / d xi_i, each perturbed solve warm-started from base.
std::vector<double> pressure_sensitivity(const PhysicsSetup& physics, const flow::BoundaryConditions& bc,
                                         const flow::FrictionVector& friction, const flow::GridState& base,
                                         const SensitivitySettings& settings = {});

/// Likelihood bridge: observation = standardized hybrid inlet pressure of a row.
class HybridObservation final : public bnn::ObservationModel {
public:
    HybridObservation(const PhysicsSetup& physics, const bnn::MLPArchitecture& arch, const FeatureScaler& scaler,
                      const std::vector<plant::DatasetRow>& rows, const SensitivitySettings& sensitivity,
                      unsigned threads = 1);
    std::size_t size() const override { return rows_.size(); }
    std::span<const double> input(std::size_t i) const override { return inputs_[i]; }
    double target(std::size_t i) const override { return targets_[i]; }
    bnn::Observation observe(std::size_t i, std::span<const double> output, bool need_gradient) const override;

    const flow::GridState& baseline(std::size_t i) const { return baselines_[i]; }
    /// Physics solves performed so far (including sensitivity solves).
    std::size_t solve_count() const;

private:
    PhysicsSetup physics_;
    bnn::MLPArchitecture arch_;
    FeatureScaler scaler_;
    SensitivitySettings sensitivity_;
    std::vector<plant::DatasetRow> rows_;
    std::vector<std::vector<double>> inputs_;
    std::vector<double> targets_;
    std::vector<flow::GridState> baselines_;
    mutable std::vector<std::size_t> solves_; // per row, so parallel observe calls never share a counter
};

struct TrainSettings {
    bnn::MLPArchitecture arch;
    bnn::McDropoutSettings dropout;
    bnn::BbpSettings bbp;
    std::size_t prior_mask_samples = 200;
    double prior_inflation = 1.5;
    double prior_floor = 0.01;
    SensitivitySettings sensitivity;
    unsigned threads = 1;
};

using TrainLog = std::function<void(const std::string&)>;

/// MC dropout fit, or for BBP a dropout pre-stage (unless prior_source is given)
/// followed by variational training from init_prior_from_dropout.
HybridModel train_hybrid(const PhysicsSetup& physics, const std::vector<plant::DatasetRow>& train_rows,
                         Backend backend, const TrainSettings& settings, std::uint64_t seed,
                         const bnn::DropoutNet* prior_source = nullptr, const TrainLog& log = {});

struct PredictionDistribution {
    std::vector<double> samples; // Pa
    double mean = 0.0;           // Pa
    double variance = 0.0;       // Pa^2, includes the noise variance
    double ci95_half_width = 0.0; // 1.96 sqrt(variance)
    std::size_t excluded = 0;
};

/// T passes; a failing pass is retried once from a cold start, then excluded.
/// More than 5% exclusions is a NumericalError.
PredictionDistribution predict(const HybridModel& model, const flow::BoundaryConditions& bc, std::size_t T,
                               std::uint64_t seed, unsigned threads = 1);
/// Same, with the baseline state already known.
PredictionDistribution predict(const HybridModel& model, const flow::BoundaryConditions& bc,
                               const flow::GridState& baseline, std::size_t T, std::uint64_t seed,
                               unsigned threads = 1);

struct Band {
    std::string name;
    double q_lo = 0.0, q_hi = 0.0;
};

struct BandStats {
    std::string name;
    std::size_t n = 0;
    double mape_tuned = 0.0;   // percent
    double mape_untuned = 0.0; // percent
    double ci95_mean = 0.0;    // Pa, mean half width
};

struct RowRecord {
    double q_liq_std = 0.0;
    double target = 0.0;
    double mean = 0.0;
    double ci95_half_width = 0.0;
    double untuned = 0.0;
    int replication = 0;
    std::size_t excluded = 0;
    std::string band;
};

struct EvalReport {
    std::string backend;
    int test_case = 1;
    std::size_t replications = 0;
    std::size_t passes = 0;
    std::vector<BandStats> bands; // per band, then "entire"
    std::vector<RowRecord> records;
    std::size_t excluded_total = 0;

    const BandStats& band(const std::string& name) const;
};

/// Absolute percentage error mean, in percent.
double mape(const std::vector<double>& predicted, const std::vector<double>& target);

/// Bands for the Table-3 cases: low [0.05, 0.15), high [0.15, 0.25] (Case 1) or [0.25, 0.30] (Case 2).
std::vector<Band> case_bands(int test_case);

EvalReport evaluate(const HybridModel& model, const std::vector<plant::DatasetRow>& test_rows, int test_case,
                    std::size_t replications, std::size_t T, std::uint64_t seed, unsigned threads = 1);

/// Aligned text table with High/Low/Entire rows for MAPE and CI.
void write_report_table(std::ostream& out, const EvalReport& report);
/// q_liq,target,mean,ci95_low,ci95_high,backend,case
void write_trace_csv(std::ostream& out, const EvalReport& report);

} // namespace hybridflow::hybrid
