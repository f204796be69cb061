#include <atomic>
#include <cstdlib>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpscal/commands.hpp"

namespace {

std::filesystem::path resolve_out_dir(const std::string& cli_out, const std::string& scenario_out) {
    if (!cli_out.empty()) return cli_out;
    if (!scenario_out.empty()) return scenario_out;
    if (const char* env = std::getenv("CPSCAL_OUT"); env != nullptr && *env != '\0') return env;
    return ".";
}

std::map<int, double> parse_fixed(const std::vector<std::string>& pairs) {
    std::map<int, double> fixed;
    for (const auto& p : pairs) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) {
            cpscal::fail(cpscal::ErrorCode::ConfigError,
                         "--fix expects stage=power_mW, got '" + p + "'");
        }
        try {
            fixed[std::stoi(p.substr(0, eq))] = std::stod(p.substr(eq + 1));
        } catch (const std::exception&) {
            cpscal::fail(cpscal::ErrorCode::ConfigError, "--fix value not numeric: '" + p + "'");
        }
    }
    return fixed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded phase-shifter chain simulator and pairwise-scan calibrator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;

    // simulate
    auto* sim = app.add_subcommand("simulate", "Scan one stage and write the trace CSV");
    int sim_stage = 1;
    std::vector<std::string> sim_fixed;
    std::string sim_direction = "forward";
    sim->add_option("--scenario", scenario_path, "Scenario file")->required();
    sim->add_option("--out", out_dir, "Output directory");
    sim->add_option("--seed", seed, "Override the scenario RNG seed");
    sim->add_option("--stage", sim_stage, "Stage to scan (1-based)")->required();
    sim->add_option("--fix", sim_fixed, "Fixed power stage=mW (repeatable)");
    sim->add_option("--direction", sim_direction, "forward | reversed")
        ->check(CLI::IsMember({"forward", "reversed"}));

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Run the pairwise-scan calibration");
    std::vector<std::string> cal_scenarios;
    int cal_jobs = 1;
    cal->add_option("--scenario", cal_scenarios, "Scenario file(s); batches run independently")
        ->required();
    cal->add_option("--out", out_dir, "Output directory");
    cal->add_option("--seed", seed, "Override the scenario RNG seed");
    cal->add_option("--jobs", cal_jobs, "Parallel workers for scenario batches")
        ->check(CLI::PositiveNumber);

    // fidelity
    auto* fid = app.add_subcommand("fidelity", "Fidelity campaign against a calibration CSV");
    std::string calibration_csv;
    double fid_noise = -1.0;
    fid->add_option("--scenario", scenario_path, "Scenario file")->required();
    fid->add_option("--calibration", calibration_csv, "calibration.csv from `calibrate`")
        ->required();
    fid->add_option("--out", out_dir, "Output directory");
    fid->add_option("--seed", seed, "Override the scenario RNG seed");
    fid->add_option("--noise-sigma", fid_noise, "Override the campaign noise sigma");

    // thermal
    auto* thermal = app.add_subcommand("thermal", "Heater cross-section solver and sweeps");
    thermal->add_option("--out", out_dir, "Output directory");
    double field_power = 20.0;
    double max_power = 60.0;
    double power_step = 10.0;
    bool no_crosstalk = false;
    thermal->add_option("--field-power", field_power, "Power for the field map, mW");
    thermal->add_option("--max-power", max_power, "Sweep end, mW");
    thermal->add_option("--power-step", power_step, "Sweep step, mW");
    thermal->add_flag("--no-crosstalk", no_crosstalk, "Skip the crosstalk solve");

    // analyze-mmi
    auto* mmi_cmd = app.add_subcommand("analyze-mmi", "Coupler imbalance / extinction analysis");
    double er_bound = 50.0;
    double t_cross = -1.0, t_bar = -1.0;
    mmi_cmd->add_option("--out", out_dir, "Output directory");
    mmi_cmd->add_option("--er-bound", er_bound, "Extinction-ratio bound, dB");
    mmi_cmd->add_option("--t32", t_cross, "Measured cross transmission");
    mmi_cmd->add_option("--t42", t_bar, "Measured bar transmission");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        std::string scenario_out;
        std::optional<cpscal::Scenario> scenario;
        if (!scenario_path.empty()) {
            scenario = cpscal::load_scenario(scenario_path);
            if (seed) scenario->instrument.rng_seed = *seed;
            scenario_out = scenario->output_dir;
        }
        if (cal->parsed() && cal_scenarios.size() == 1) {
            scenario = cpscal::load_scenario(cal_scenarios.front());
            if (seed) scenario->instrument.rng_seed = *seed;
            scenario_out = scenario->output_dir;
        }
        const std::filesystem::path out = resolve_out_dir(out_dir, scenario_out);
        std::filesystem::create_directories(out);

        if (sim->parsed()) {
            cpscal::SimulateOptions opt;
            opt.stage = sim_stage;
            opt.fixed_powers_mw = parse_fixed(sim_fixed);
            opt.direction = sim_direction == "forward" ? cpscal::Direction::Forward
                                                       : cpscal::Direction::Reversed;
            cpscal::cmd_simulate(*scenario, opt, out);
        } else if (cal->parsed()) {
            if (cal_scenarios.size() == 1) {
                cpscal::cmd_calibrate(*scenario, out);
            } else {
                // independent batches; outputs land in per-scenario subdirectories
                std::vector<cpscal::Scenario> batch;
                for (const auto& path : cal_scenarios) {
                    batch.push_back(cpscal::load_scenario(path));
                    if (seed) batch.back().instrument.rng_seed = *seed;
                }
                std::vector<std::future<void>> workers;
                std::atomic<std::size_t> next{0};
                const int jobs = std::max(1, cal_jobs);
                for (int w = 0; w < jobs; ++w) {
                    workers.push_back(std::async(std::launch::async, [&]() {
                        for (std::size_t i = next.fetch_add(1); i < batch.size();
                             i = next.fetch_add(1)) {
                            const auto sub =
                                out / std::filesystem::path(cal_scenarios[i]).stem();
                            std::filesystem::create_directories(sub);
                            cpscal::cmd_calibrate(batch[i], sub);
                        }
                    }));
                }
                for (auto& worker : workers) worker.get();
            }
        } else if (fid->parsed()) {
            if (fid_noise >= 0.0) scenario->campaign.fidelity_noise_sigma = fid_noise;
            cpscal::cmd_fidelity(*scenario, calibration_csv, out);
        } else if (thermal->parsed()) {
            cpscal::ThermalOptions opt;
            opt.field_power_mw = field_power;
            opt.crosstalk = !no_crosstalk;
            opt.sweep_powers_mw.clear();
            for (double p = 0.0; p <= max_power + 1e-9; p += power_step) {
                opt.sweep_powers_mw.push_back(p);
            }
            cpscal::cmd_thermal(opt, out);
        } else if (mmi_cmd->parsed()) {
            cpscal::MmiAnalysisOptions opt;
            opt.er_bound_db = er_bound;
            if (t_cross > 0.0) opt.t_cross = t_cross;
            if (t_bar > 0.0) opt.t_bar = t_bar;
            cpscal::cmd_analyze_mmi(opt, out);
        }
    } catch (const cpscal::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return (e.code() == cpscal::ErrorCode::ConfigError ||
                e.code() == cpscal::ErrorCode::InvalidParameter)
                   ? 2
                   : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
