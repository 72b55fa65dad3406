#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include <riskshare/allocation.hpp>
#include <riskshare/capital_curve.hpp>
#include <riskshare/distortion.hpp>
#include <riskshare/execution.hpp>
#include <riskshare/scenario.hpp>
#include <riskshare/sharing.hpp>

namespace riskshare {

// {"kind": "euler", "family": "wang"}, {"kind": "opt_squared", "betas": [...]}, ...
AllocationFamily allocation_from_json(const nlohmann::json& doc);
nlohmann::json allocation_to_json(const AllocationFamily& family);

struct RunConfig {
    JointModel model = CopulaModel{};
    std::size_t n_scenarios = 0;
    std::uint64_t seed = 0;
    AllocationFamily rule;
    // exogenous aggregate capital of the top-down rules; unset means endogenous
    std::optional<DistortionFamily> curve_family;
    InversePolicy policy = InversePolicy::infimum_preimage;
    std::size_t bins = 200;
    std::size_t grid_size = 2048;
    std::string outputs = ".";
    std::uint64_t fingerprint = 0;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json read_json_file(const std::string& path);

std::string hex64(std::uint64_t x);

struct PipelineResult {
    ScenarioSet scenarios;
    std::shared_ptr<const CapitalModel> model;
    CapitalCurve curve;
    SurjectivityReport surjectivity;
    SharingResult sharing;
};

// Draw the scenarios, bind the rule, build its curve and induce the sharing rule.
PipelineResult run_pipeline(const RunConfig& config, Exec exec = Exec::parallel);
PipelineResult run_pipeline(const RunConfig& config, ScenarioSet scenarios, Exec exec = Exec::parallel);

} // namespace riskshare
