#pragma once

// The whole experiment in one call: dataset, both backends, both test cases,
// and a summary that checks the qualitative Case-1/Case-2 patterns.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hybridflow/config.hpp"
#include "hybridflow/hybrid.hpp"
#include "hybridflow/plant.hpp"

namespace hybridflow::repro {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
    bool gating = true; // informational checks never fail the run
};

struct Reports {
    hybrid::EvalReport mc_case1, mc_case2, bbp_case1, bbp_case2;
};

/// Qualitative checks on the four reports (one backend at a time, plus the
/// informational backend comparison).
std::vector<Check> structural_checks(const Reports& r);

struct Result {
    Reports reports;
    std::vector<Check> checks;
    std::string summary;
    bool all_pass() const;
};

using Log = std::function<void(const std::string&)>;

/// Untuned-model solve statistics over a set of rows, for the run log.
std::string baseline_diagnostics(const hybrid::PhysicsSetup& physics, const std::vector<plant::DatasetRow>& rows);

/// Writes config.json, dataset.csv, model_{mc,bbp}.json, report_{mc,bbp}_case{1,2}.json,
/// trace_{mc,bbp}_case{1,2}.csv, run.log and summary.txt into out_dir.
Result run(const config::RunConfig& cfg, const std::filesystem::path& out_dir, const Log& log = {});

/// The summary text: report tables followed by one line per check.
std::string format_summary(const config::RunConfig& cfg, std::size_t n_rows, const Reports& reports,
                           const std::vector<Check>& checks);

} // namespace hybridflow::repro
