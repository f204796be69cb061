#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cpscal/calibration.hpp"
#include "cpscal/device.hpp"

namespace cpscal {

struct CampaignOptions {
    double extrema_eps = 0.02;
    double k_prior = 0.1;
    bool refine = true;
    double fidelity_noise_sigma = 0.0;
    std::vector<double> thresholds = {0.999};
};

struct Scenario {
    int schema = 1;
    ChainModel chain;
    InstrumentModel instrument;
    CalibrationMode mode = CalibrationMode::Constrained;
    CampaignOptions campaign;
    std::string output_dir;

    CalibrationConfig calibration_config(bool keep_traces = false) const {
        CalibrationConfig cfg;
        cfg.extrema_eps = campaign.extrema_eps;
        cfg.k_prior = campaign.k_prior;
        cfg.refine = campaign.refine;
        cfg.keep_pass_traces = keep_traces;
        return cfg;
    }
};

/// Parse and validate a scenario document. Errors carry ErrorCode::ConfigError
/// and name the offending field.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& json_text, const std::string& origin);

}  // namespace cpscal
