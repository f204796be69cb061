#include "cpscal/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cpscal/csv.hpp"
#include "json.hpp"

namespace cpscal {

namespace {

std::string format_g(double v, int precision = 10) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

void write_calibration_csv(const CalibrationResult& result,
                           const std::filesystem::path& path) {
    CsvWriter csv(path, "stage,P_min_mW,k_rad_per_mW,dtheta_rad,dtheta_deg,theta_at_pmin,"
                        "source_pass");
    for (const auto& st : result.stages) {
        csv.field(st.stage)
            .field(st.p_min)
            .field(st.k)
            .field(st.dtheta)
            .field(st.dtheta * 180.0 / kPi)
            .field(to_string(st.theta_at_pmin))
            .field(to_string(st.source_pass));
        csv.end_row();
    }
}

void write_report_json(const Scenario& scenario, const CalibrationResult& result,
                       const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["schema"] = 1;
    doc["mode"] =
        result.mode == CalibrationMode::Constrained ? "constrained" : "non_constraint";
    doc["seed"] = scenario.instrument.rng_seed;
    for (const auto& st : result.stages) {
        nlohmann::json s;
        s["stage"] = st.stage;
        s["k_rad_per_mW"] = st.k;
        s["dtheta_rad"] = st.dtheta;
        s["P_min_mW"] = st.p_min;
        s["P_max_mW"] = st.p_max;
        s["theta_at_pmin"] = to_string(st.theta_at_pmin);
        s["source_pass"] = to_string(st.source_pass);
        s["c"] = st.c;
        s["c2"] = st.c2;
        doc["stages"].push_back(s);
    }
    for (const auto& pass : result.pass_traces) {
        nlohmann::json p;
        p["pass"] = to_string(pass.pass);
        p["direction"] = to_string(pass.direction);
        p["outer"] = pass.outer;
        p["inner"] = pass.inner;
        auto& pts = p["points"];
        for (const auto& pt : pass.points) {
            pts.push_back({pt.p_outer_mw, pt.up, pt.mean_intensity});
        }
        doc["passes"].push_back(p);
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorCode::ConfigError, "cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

}  // namespace

void cmd_simulate(const Scenario& scenario, const SimulateOptions& options,
                  const std::filesystem::path& out_dir) {
    if (options.stage < 1 || options.stage > scenario.chain.size()) {
        fail(ErrorCode::ConfigError, "scan stage out of range for this chain");
    }
    const ScanTrace trace = scan_stage(scenario.chain, scenario.instrument, options.stage,
                                       options.fixed_powers_mw, options.direction);
    CsvWriter csv(out_dir / "scan_trace.csv", "stage,direction,P_outer_mW,P_inner_mW,I4");
    for (std::size_t i = 0; i < trace.applied_power_mw.size(); ++i) {
        csv.field(trace.stage).field(to_string(trace.direction)).field(std::string{});
        csv.field(trace.applied_power_mw[i]).field(trace.intensity[i]);
        csv.end_row();
    }
    std::cout << "wrote " << (out_dir / "scan_trace.csv").string() << " ("
              << trace.applied_power_mw.size() << " points)\n";
}

CalibrationResult cmd_calibrate(const Scenario& scenario, const std::filesystem::path& out_dir) {
    const CalibrationConfig cfg = scenario.calibration_config(/*keep_traces=*/true);
    const CalibrationResult result =
        scenario.mode == CalibrationMode::Constrained
            ? calibrate(scenario.chain, scenario.instrument, cfg)
            : calibrate_nonconstraint(scenario.chain, scenario.instrument, cfg);

    write_calibration_csv(result, out_dir / "calibration.csv");
    write_report_json(scenario, result, out_dir / "report.json");

    if (result.mode == CalibrationMode::NonConstraint) {
        CsvWriter csv(out_dir / "nonconstraint_interior.csv",
                      "stage,theta_rad,theta_th_rad,dtheta_rad");
        for (const auto& st : result.stages) {
            if (st.stage == 1 || st.stage == result.stages.back().stage) continue;
            const double theta = st.theta_at_pmin == ThetaAtPmin::Pi ? kPi : 0.0;
            csv.field(st.stage).field(theta).field(st.k * st.p_min).field(st.dtheta);
            csv.end_row();
        }
    }
    for (const auto& st : result.stages) {
        std::cout << "stage " << st.stage << ": k=" << format_g(st.k, 6)
                  << " rad/mW, dtheta=" << format_g(st.dtheta, 6)
                  << " rad, P_min=" << format_g(st.p_min, 6) << " mW, theta(P_min)="
                  << to_string(st.theta_at_pmin) << "\n";
    }
    return result;
}

CalibrationResult load_calibration_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open calibration file " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::ConfigError, "empty calibration file");

    CalibrationResult result;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) {
            fail(ErrorCode::ConfigError, "calibration row needs at least 5 columns");
        }
        StageCalibration st;
        try {
            st.stage = std::stoi(cells[0]);
            st.p_min = std::stod(cells[1]);
            st.k = std::stod(cells[2]);
            st.dtheta = std::stod(cells[3]);
        } catch (const std::exception&) {
            fail(ErrorCode::ConfigError, "calibration row not numeric: " + line);
        }
        if (cells.size() >= 6) {
            if (cells[5] == "0") st.theta_at_pmin = ThetaAtPmin::Zero;
            else if (cells[5] == "pi") st.theta_at_pmin = ThetaAtPmin::Pi;
        }
        result.stages.push_back(st);
    }
    if (result.stages.empty()) fail(ErrorCode::ConfigError, "calibration file has no rows");
    std::sort(result.stages.begin(), result.stages.end(),
              [](const StageCalibration& a, const StageCalibration& b) { return a.stage < b.stage; });
    for (std::size_t i = 0; i < result.stages.size(); ++i) {
        if (result.stages[i].stage != static_cast<int>(i + 1)) {
            fail(ErrorCode::ConfigError, "calibration stages must be 1..N without gaps");
        }
    }
    return result;
}

FidelityReport cmd_fidelity(const Scenario& scenario,
                            const std::filesystem::path& calibration_csv,
                            const std::filesystem::path& out_dir) {
    const CalibrationResult cal = load_calibration_csv(calibration_csv);
    InstrumentModel inst = scenario.instrument;
    inst.noise_sigma = scenario.campaign.fidelity_noise_sigma;
    const FidelityReport report =
        fidelity_campaign(scenario.chain, cal, inst, scenario.campaign.thresholds);

    {
        CsvWriter csv(out_dir / "fidelity_summary.csv", "stat,value_dimensionless");
        csv.field(std::string{"mean"}).field(report.mean, 12);
        csv.end_row();
        csv.field(std::string{"min"}).field(report.min, 12);
        csv.end_row();
        csv.field(std::string{"max"}).field(report.max, 12);
        csv.end_row();
        for (const auto& [threshold, fraction] : report.fraction_above) {
            csv.field("fraction_above_" + format_g(threshold, 6)).field(fraction, 12);
            csv.end_row();
        }
    }
    {
        // 50 bins over [0.99, 1.0]; anything lower lands in the first bin
        constexpr int kBins = 50;
        constexpr double kLow = 0.99;
        const double width = (1.0 - kLow) / kBins;
        std::vector<long> counts(kBins, 0);
        for (double v : report.values) {
            int b = static_cast<int>((v - kLow) / width);
            b = std::clamp(b, 0, kBins - 1);
            ++counts[static_cast<std::size_t>(b)];
        }
        CsvWriter csv(out_dir / "fidelity_histogram.csv", "bin_low,bin_high,count");
        for (int b = 0; b < kBins; ++b) {
            csv.field(kLow + b * width, 6).field(kLow + (b + 1) * width, 6);
            csv.field(counts[static_cast<std::size_t>(b)]);
            csv.end_row();
        }
    }
    {
        CsvWriter csv(out_dir / "fidelity_values.csv", "stage,P_mW,fidelity");
        const int n_points = scenario.instrument.point_count();
        for (std::size_t i = 0; i < report.values.size(); ++i) {
            const int stage = static_cast<int>(i) / n_points + 1;
            const int point = static_cast<int>(i) % n_points;
            const double p = volts_to_power(
                scenario.instrument.voltage_at(point),
                scenario.chain.stages[static_cast<std::size_t>(stage - 1)].resistance);
            csv.field(stage).field(p).field(report.values[i], 12);
            csv.end_row();
        }
    }
    std::cout << "fidelity mean=" << format_g(report.mean, 8) << " min="
              << format_g(report.min, 8) << " max=" << format_g(report.max, 8) << "\n";
    return report;
}

void cmd_thermal(const ThermalOptions& options, const std::filesystem::path& out_dir) {
    const CrossSection& cs = options.cross_section;
    cs.validate();

    {
        const TemperatureField field = solve_steady(cs, options.field_power_mw);
        CsvWriter csv(out_dir / "field.csv", "x_um,y_um,T_K");
        const std::size_t nx = field.x_um.size();
        for (std::size_t j = 0; j < field.y_um.size(); ++j) {
            for (std::size_t i = 0; i < nx; ++i) {
                csv.field(field.x_um[i], 8).field(field.y_um[j], 8).field(field.t_k[j * nx + i], 8);
                csv.end_row();
            }
        }
    }

    const auto sweep = thermal_sweep(cs, options.sweep_powers_mw);
    {
        CsvWriter csv(out_dir / "sweep.csv", "P_mW,T_wg_K,theta_rad");
        for (const auto& s : sweep) {
            csv.field(s.p_mw, 8).field(s.t_wg_k, 8).field(s.theta_rad, 8);
            csv.end_row();
        }
    }
    std::string pi_text = "not reached";
    try {
        pi_text = format_g(pi_power_mw(sweep), 6) + " mW";
    } catch (const Error&) {
    }
    std::cout << "theta/P slope: " << format_g(sweep_slope(sweep), 6) << " rad/mW, pi power: "
              << pi_text << ", T(P) R^2: " << format_g(sweep_r_squared(sweep), 8) << "\n";

    if (options.crosstalk) {
        CrossSection wide = cs;
        const double max_offset = *std::max_element(options.crosstalk_offsets_um.begin(),
                                                    options.crosstalk_offsets_um.end());
        wide.half_width_um = std::max(cs.half_width_um, max_offset + 25.0);
        const TemperatureField field = solve_steady(wide, options.crosstalk_power_mw);
        const double self_rise =
            field.at(0.0, wide.wg_height_um / 2.0) - wide.boundary_temp_k;
        CsvWriter csv(out_dir / "crosstalk.csv",
                      "offset_um,T_rise_K,fraction_of_self_heating");
        for (double offset : options.crosstalk_offsets_um) {
            const double rise = field.at(offset, wide.wg_height_um / 2.0) - wide.boundary_temp_k;
            csv.field(offset, 8).field(rise, 8).field(rise / self_rise, 8);
            csv.end_row();
        }
    }
}

void cmd_analyze_mmi(const MmiAnalysisOptions& options, const std::filesystem::path& out_dir) {
    const double min_fid = min_fidelity_given_er(options.er_bound_db);
    {
        CsvWriter csv(out_dir / "min_fidelity.csv", "er_bound_db,min_fidelity");
        csv.field(options.er_bound_db, 6).field(min_fid, 10);
        csv.end_row();
    }
    std::cout << "min fidelity at ER >= " << format_g(options.er_bound_db, 6)
              << " dB: " << format_g(min_fid, 8) << "\n";

    {
        CsvWriter csv(out_dir / "er_grid.csv", "r,eta,er_port3_db,er_port4_db");
        const int n = options.contour_grid;
        for (int ir = 0; ir <= n; ++ir) {
            const double r = 1.0 + 0.02 * ir / n;
            for (int ie = 0; ie <= n; ++ie) {
                const double eta = 0.47 + 0.06 * ie / n;
                const MmiQuality q{r, eta};
                const double er3 = er_port3(q);
                const double er4 = er_port4(q);
                csv.field(r, 8).field(eta, 8);
                csv.field(std::isfinite(er3) ? format_g(er3, 8) : std::string{"inf"});
                csv.field(std::isfinite(er4) ? format_g(er4, 8) : std::string{"inf"});
                csv.end_row();
            }
        }
    }

    if (options.t_cross && options.t_bar) {
        const MmiQuality q = mmi_quality_from_transmissions(*options.t_cross, *options.t_bar);
        const double imb = imbalance_db(*options.t_cross, *options.t_bar);
        const double er4 = er_port4(q);
        CsvWriter csv(out_dir / "mmi_summary.csv",
                      "t_cross,t_bar,imbalance_db,eta,er_port4_db,worst_fidelity");
        csv.field(*options.t_cross, 8).field(*options.t_bar, 8).field(imb, 8).field(q.eta, 8);
        csv.field(std::isfinite(er4) ? format_g(er4, 8) : std::string{"inf"});
        csv.field(worst_case_fidelity(q), 10);
        csv.end_row();
        std::cout << "measured couplers: imbalance " << format_g(imb, 6) << " dB, ER(port4) "
                  << (std::isfinite(er4) ? format_g(er4, 6) + " dB" : std::string{"inf"}) << "\n";
    }
}

}  // namespace cpscal
