#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "cpscal/analysis.hpp"
#include "cpscal/scenario.hpp"
#include "cpscal/thermal.hpp"

namespace cpscal {

struct SimulateOptions {
    int stage = 1;
    std::map<int, double> fixed_powers_mw;
    Direction direction = Direction::Forward;
};

struct ThermalOptions {
    CrossSection cross_section;
    std::vector<double> sweep_powers_mw = {0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0};
    double field_power_mw = 20.0;
    bool crosstalk = true;
    double crosstalk_power_mw = 60.0;
    std::vector<double> crosstalk_offsets_um = {0.0, 5.0, 10.0, 15.0, 20.0,
                                                25.0, 30.0, 35.0, 40.0, 50.0, 60.0};
};

struct MmiAnalysisOptions {
    double er_bound_db = 50.0;
    std::optional<double> t_cross;  // measured cross transmission
    std::optional<double> t_bar;    // measured bar transmission
    int contour_grid = 100;
};

/// Scan one stage and write the trace CSV (scan_trace.csv).
void cmd_simulate(const Scenario& scenario, const SimulateOptions& options,
                  const std::filesystem::path& out_dir);

/// Run the pairwise-scan calibration and write calibration.csv, report.json,
/// and (in non-constraint mode) nonconstraint_interior.csv.
CalibrationResult cmd_calibrate(const Scenario& scenario, const std::filesystem::path& out_dir);

CalibrationResult load_calibration_csv(const std::filesystem::path& path);

/// Fidelity campaign of the scenario's chain against a written calibration.
FidelityReport cmd_fidelity(const Scenario& scenario,
                            const std::filesystem::path& calibration_csv,
                            const std::filesystem::path& out_dir);

/// Solve the cross-section; write field.csv, sweep.csv and crosstalk.csv.
void cmd_thermal(const ThermalOptions& options, const std::filesystem::path& out_dir);

/// Extinction-ratio / imbalance analysis; writes er_grid.csv, min_fidelity.csv
/// and mmi_summary.csv.
void cmd_analyze_mmi(const MmiAnalysisOptions& options, const std::filesystem::path& out_dir);

}  // namespace cpscal
