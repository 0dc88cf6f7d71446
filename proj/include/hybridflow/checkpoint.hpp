#pragma once

// Model checkpoints and evaluation reports as versioned JSON documents.
//
// Checkpoint layout ("format": "hybridflow-model/1"):
//   physics   pipe, fluid, solver, boundary (as in the run config)
//   backend   "mc" or "bbp"
//   architecture, noise, seed
//   scaler    {mean[], std[], target_mean, target_std}
//   mc        {p_mc, params[]}                       (backend mc)
//   bbp       {mu[], rho[], prior_mean[], prior_std[]} (backend bbp)
// Doubles are written in shortest round-trip form, so load(save(m)) == m.

#include <string>

#include <json.hpp>

#include "hybridflow/hybrid.hpp"

namespace hybridflow::checkpoint {

inline constexpr const char* model_format = "hybridflow-model/1";
inline constexpr const char* report_format = "hybridflow-report/1";

nlohmann::json model_to_json(const hybrid::HybridModel& model);
/// FormatError on a wrong format tag, missing fields or inconsistent shapes.
hybrid::HybridModel model_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const hybrid::HybridModel& model);
hybrid::HybridModel load_model(const std::string& path);

nlohmann::json report_to_json(const hybrid::EvalReport& report);
hybrid::EvalReport report_from_json(const nlohmann::json& j);

} // namespace hybridflow::checkpoint
