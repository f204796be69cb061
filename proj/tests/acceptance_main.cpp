// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Each criterion is self-contained and prints the measured
// numbers next to its verdict.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cpscal/analysis.hpp"
#include "cpscal/calibration.hpp"
#include "cpscal/device.hpp"
#include "cpscal/thermal.hpp"
#include "support.hpp"

using namespace cpscal;
using namespace cpscal::testsupport;

namespace {

int g_failed = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failed;
}

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

CalibrationConfig roundtrip_config() {
    CalibrationConfig cfg;
    cfg.k_prior = 0.12;  // matches the draw range of the randomized truths
    return cfg;
}

// ---------------------------------------------------------------- criterion 1
void criterion_1(CalibrationResult& reference_cal) {
    const auto t0 = std::chrono::steady_clock::now();
    const ChainModel chain = reference_chain();
    const CalibrationResult cal = calibrate(chain, InstrumentModel{});
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    double k_err = 0.0, d_err = 0.0, p_err = 0.0;
    const auto p_ref = reference_p_min();
    for (int j = 1; j <= 6; ++j) {
        k_err = std::max(k_err, std::fabs(cal.stage(j).k -
                                          chain.stages[static_cast<std::size_t>(j - 1)].k));
        d_err = std::max(d_err, std::fabs(cal.stage(j).dtheta -
                                          chain.stages[static_cast<std::size_t>(j - 1)].dtheta));
        p_err = std::max(p_err, std::fabs(cal.stage(j).p_min -
                                          p_ref[static_cast<std::size_t>(j - 1)]));
    }
    const bool pass = k_err <= 1e-3 && d_err <= 2e-2 && p_err <= 0.2 && seconds < 60.0;
    report(1, "six-stage round trip", pass,
           "max|k err|=" + fmt(k_err) + " rad/mW, max|dtheta err|=" + fmt(d_err) +
               " rad, max|P_min err|=" + fmt(p_err) + " mW, runtime=" + fmt(seconds, 3) + " s");
    reference_cal = cal;
}

// ---------------------------------------------------------------- criterion 2
void criterion_2(const CalibrationResult& cal) {
    const ChainModel chain = reference_chain();
    const FidelityReport clean = fidelity_campaign(chain, cal, InstrumentModel{});

    InstrumentModel noisy;
    noisy.noise_sigma = 2e-3;
    noisy.rng_seed = 0;
    const FidelityReport report_noisy = fidelity_campaign(chain, cal, noisy);

    const bool pass = clean.mean >= 0.99999 && report_noisy.mean >= 0.9997 &&
                      report_noisy.min >= 0.9968 &&
                      report_noisy.fraction_above.at(0.999) >= 0.966;
    report(2, "fidelity campaign", pass,
           "noiseless mean=" + fmt(clean.mean, 8) + "; sigma=2e-3: mean=" +
               fmt(report_noisy.mean, 8) + ", min=" + fmt(report_noisy.min, 6) +
               ", fraction>0.999=" + fmt(report_noisy.fraction_above.at(0.999), 4));
}

// ---------------------------------------------------------------- criterion 3
void criterion_3(const CalibrationResult& constrained) {
    const ChainModel chain = reference_chain();
    const CalibrationResult nc = calibrate_nonconstraint(chain, InstrumentModel{});
    const std::vector<ThetaAtPmin> expected = {ThetaAtPmin::Zero, ThetaAtPmin::Pi,
                                               ThetaAtPmin::Pi, ThetaAtPmin::Pi};
    double d_err = 0.0;
    bool theta_ok = true;
    for (int j = 2; j <= 5; ++j) {
        d_err = std::max(d_err, std::fabs(nc.stage(j).dtheta - constrained.stage(j).dtheta));
        if (nc.stage(j).theta_at_pmin != expected[static_cast<std::size_t>(j - 2)]) {
            theta_ok = false;
        }
    }
    const bool pass = d_err <= 2e-2 && theta_ok;
    report(3, "constraint-free consistency", pass,
           "max interior |dtheta diff|=" + fmt(d_err) + " rad, theta assignments " +
               std::string(theta_ok ? "match" : "MISMATCH"));
}

// ---------------------------------------------------------------- criterion 4
void criterion_4() {
    const double probe = 0.4 * kPi;
    const double even_pi_hi = 0.5 * (1.0 + std::sin(0.8 * kPi) * std::sin(0.4 * kPi));
    const double odd_dir_hi = 0.5 * (1.0 + std::cos(0.2 * kPi));
    const double odd_quad_zero_hi = 0.5 * (1.0 + std::sin(0.4 * kPi));
    const double odd_quad_pi_hi = 0.5 * (1.0 + std::cos(0.2 * kPi) * std::sin(0.4 * kPi));

    struct Band {
        std::string name;
        double value;
        bool seen = false;
        double worst = 0.0;  // largest deviation among readings assigned here
    };
    std::vector<Band> bands{
        {"even zero 0.5", 0.5},
        {"even pi 0.7795", even_pi_hi},
        {"even pi 0.2205", 1.0 - even_pi_hi},
        {"odd zero 0.5 (direct probe)", 0.5},
        {"odd pi 0.9045", odd_dir_hi},
        {"odd pi 0.0955", 1.0 - odd_dir_hi},
        {"odd zero 0.9755", odd_quad_zero_hi},
        {"odd zero 0.0245", 1.0 - odd_quad_zero_hi},
        {"odd pi 0.8847", odd_quad_pi_hi},
        {"odd pi 0.1153", 1.0 - odd_quad_pi_hi},
    };
    const auto assign = [&](std::initializer_list<int> candidates, double reading) {
        // book the reading against the nearest candidate constant
        int best = -1;
        double best_d = 1e9;
        for (int c : candidates) {
            const double d = std::fabs(reading - bands[static_cast<std::size_t>(c)].value);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        auto& band = bands[static_cast<std::size_t>(best)];
        band.seen = true;
        band.worst = std::max(band.worst, best_d);
    };

    const auto make_chain = [](int n, int pattern) {
        std::vector<TopsGroundTruth> stages;
        for (int j = 0; j < n; ++j) {
            TopsGroundTruth t;
            t.k = 0.14 + 0.004 * j;
            t.dtheta = (pattern >> j & 1) ? 0.3 + 0.07 * j : -0.25 - 0.05 * j;
            t.label = j + 1;
            stages.push_back(t);
        }
        return ChainModel::ideal(std::move(stages));
    };

    // even chains: every pin pattern of a 4-stage device, both probe routes
    for (int pattern = 0; pattern < 16; ++pattern) {
        const ChainModel chain = make_chain(4, pattern);
        const CalibrationResult pins = pins_from_truth(chain);
        for (int stage : {2, 3}) {
            std::map<int, double> shifts{{stage - 1, probe}, {stage + 1, probe}};
            Direction dir = Direction::Forward;
            if (stage % 2 == 0) {
                shifts[4] = probe;
            } else {
                shifts[1] = probe;
                dir = Direction::Reversed;
            }
            const double reading =
                nc_probe_intensity(chain, InstrumentModel{}, pins, shifts, dir, false);
            const bool zero =
                pins.stages[static_cast<std::size_t>(stage - 1)].theta_at_pmin ==
                ThetaAtPmin::Zero;
            if (zero) {
                assign({0}, reading);
            } else {
                assign({1, 2}, reading);
            }
        }
    }

    // odd chains: every pin pattern of a 5-stage device
    for (int pattern = 0; pattern < 32; ++pattern) {
        const ChainModel chain = make_chain(5, pattern);
        const CalibrationResult pins = pins_from_truth(chain);
        for (int stage : {2, 4}) {
            const std::map<int, double> shifts{{stage - 1, probe}, {stage + 1, probe}};
            const double reading =
                nc_probe_intensity(chain, InstrumentModel{}, pins, shifts, Direction::Forward,
                                   false);
            const bool zero =
                pins.stages[static_cast<std::size_t>(stage - 1)].theta_at_pmin ==
                ThetaAtPmin::Zero;
            if (zero) {
                assign({3}, reading);
            } else {
                assign({4, 5}, reading);
            }
        }
        const std::map<int, double> shifts{
            {1, kPi / 2}, {2, probe}, {4, probe}, {5, probe}};
        const double reading =
            nc_probe_intensity(chain, InstrumentModel{}, pins, shifts, Direction::Forward, false);
        if (pins.stages[2].theta_at_pmin == ThetaAtPmin::Zero) {
            assign({6, 7}, reading);
        } else {
            assign({8, 9}, reading);
        }
    }

    bool pass = true;
    std::ostringstream detail;
    for (const auto& band : bands) {
        const bool ok = band.seen && band.worst <= 1e-4;
        if (!ok) {
            pass = false;
            detail << band.name << (band.seen ? " off by " + fmt(band.worst, 4) : " never hit")
                   << "; ";
        }
    }
    if (pass) {
        detail << "all 10 constants reproduced within 1e-4";
    } else {
        detail << "(all other constants within 1e-4)";
    }
    report(4, "discriminator constants", pass, detail.str());
}

// ---------------------------------------------------------------- criterion 5
// independent oracle: matrix-composed intensities (not the closed forms),
// dense grid at 4x the default resolution, no refinement
double oracle_min_fidelity(double bound_db, int grid, int theta_samples) {
    const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::future<double>> futures;
    for (unsigned job = 0; job < jobs; ++job) {
        futures.push_back(std::async(std::launch::async, [=]() {
            double best = 2.0;
            for (int ir = static_cast<int>(job); ir <= grid; ir += static_cast<int>(jobs)) {
                const double r = 1.0 + 0.02 * ir / grid;
                if (er_port3({r, 0.5}) < bound_db) continue;
                const double kappa = 2.0 * std::log(r);
                for (int ie = 0; ie <= grid; ++ie) {
                    const double eta = 0.47 + 0.06 * ie / grid;
                    if (er_port4({r, eta}) < bound_db) continue;
                    const TransferMatrix coupler = mmi({eta, 0.0, kappa});
                    double worst = 2.0;
                    for (int it = 0; it < theta_samples; ++it) {
                        const double theta = 2.0 * kPi * it / theta_samples;
                        const std::vector<TransferMatrix> stages{coupler, phase_shifter(theta),
                                                                 coupler};
                        const auto [i3, i4] =
                            intensities(compose(stages).apply({0.0, 1.0}));
                        const double i4n = i4 / (i3 + i4);
                        const double ideal = (1.0 - std::cos(theta)) / 2.0;
                        const double f = std::sqrt(i4n * ideal) +
                                         std::sqrt((1.0 - i4n) * (1.0 - ideal));
                        worst = std::min(worst, f);
                    }
                    best = std::min(best, worst);
                }
            }
            return best;
        }));
    }
    double best = 2.0;
    for (auto& f : futures) best = std::min(best, f.get());
    return best;
}

void criterion_5() {
    const double impl = min_fidelity_given_er(50.0);
    const double oracle = oracle_min_fidelity(50.0, 1600, 2880);
    const double gap = std::fabs(impl - oracle);

    const MmiQuality q = mmi_quality_from_transmissions(0.4821, 0.4819);
    const double er4 = er_port4(q);
    const double imb = imbalance_db(0.4821, 0.4819);

    const bool pass = impl >= 0.99991 && gap <= 1e-5 && std::fabs(er4 - 73.5) <= 0.5 &&
                      std::fabs(imb - 0.0018) <= 2e-4;
    report(5, "coupler-imbalance fidelity bound", pass,
           "min fidelity=" + fmt(impl, 8) + " (oracle " + fmt(oracle, 8) + ", gap " +
               fmt(gap, 3) + "), ER(port4)=" + fmt(er4, 4) + " dB, imbalance=" + fmt(imb, 3) +
               " dB");
}

// ---------------------------------------------------------------- criterion 6
void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    const CrossSection cs;
    const auto sweep = thermal_sweep(cs, {0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0});
    const double slope = sweep_slope(sweep);
    const double p_pi = pi_power_mw(sweep);
    const double r2 = sweep_r_squared(sweep);

    CrossSection wide = cs;
    wide.half_width_um = 70.0;
    const TemperatureField field = solve_steady(wide, 60.0);
    const double self_rise = field.at(0.0, wide.wg_height_um / 2.0) - 300.0;
    const double far_rise = field.at(40.0, wide.wg_height_um / 2.0) - 300.0;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool pass = slope >= 0.124 && slope <= 0.187 && p_pi >= 16.2 && p_pi <= 24.2 &&
                      r2 > 0.999 && far_rise < 0.05 * self_rise && seconds < 300.0;
    report(6, "thermal model", pass,
           "slope=" + fmt(slope, 4) + " rad/mW, pi power=" + fmt(p_pi, 4) + " mW, R^2=" +
               fmt(r2, 6) + ", crosstalk@40um=" + fmt(100.0 * far_rise / self_rise, 3) +
               "% of self-heating, runtime=" + fmt(seconds, 3) + " s");
}

// ---------------------------------------------------------------- criterion 7
int property_unitarity() {
    int failures = 0;
    std::uint64_t rng = 11;
    for (int trial = 0; trial < 500; ++trial) {
        const double theta = uniform01(rng) * 2.0 * kPi;
        const TransferMatrix m = mzi(theta);
        const TransferMatrix mm = m * m.dagger();
        const double err = std::abs(mm.m11 - Complex{1.0, 0.0}) + std::abs(mm.m12) +
                           std::abs(mm.m21) + std::abs(mm.m22 - Complex{1.0, 0.0});
        if (err > 1e-12) ++failures;
        // energy conservation through a random-length ideal chain
        std::vector<TransferMatrix> stages{mmi(MmiParams{})};
        for (int s = 0; s < 1 + trial % 8; ++s) {
            stages.push_back(phase_shifter(uniform01(rng) * 2.0 * kPi));
            stages.push_back(mmi(MmiParams{}));
        }
        if (std::fabs(compose(stages).apply({0.0, 1.0}).norm2() - 1.0) > 1e-12) ++failures;
    }
    return failures;
}

int property_equivalences() {
    int failures = 0;
    const auto close = [](const TransferMatrix& a, const TransferMatrix& b) {
        return std::abs(a.m11 - b.m11) + std::abs(a.m12 - b.m12) + std::abs(a.m21 - b.m21) +
                   std::abs(a.m22 - b.m22) <
               1e-12;
    };
    const TransferMatrix swap{0.0, 1.0, 1.0, 0.0};
    if (!close(mzi(0.0), swap.scaled(std::polar(1.0, kPi / 2)))) ++failures;
    if (!close(mzi(kPi), TransferMatrix{-1.0, 0.0, 0.0, 1.0})) ++failures;
    if (!close(mzi(kPi / 2),
               (phase_shifter(kPi / 2) * mmi(MmiParams{}) * phase_shifter(kPi / 2))
                   .scaled(std::polar(1.0, 7.0 * kPi / 4.0)))) {
        ++failures;
    }
    if (!close(mzi(3.0 * kPi / 2),
               (phase_shifter(3.0 * kPi / 2) * mmi(MmiParams{}) * phase_shifter(3.0 * kPi / 2))
                   .scaled(std::polar(1.0, kPi / 4.0)))) {
        ++failures;
    }
    return failures;
}

int property_reciprocity() {
    int failures = 0;
    std::uint64_t rng = 77;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + trial % 8;
        const ChainModel chain = random_chain(n, rng);
        std::map<int, double> powers;
        for (int j = 1; j <= n; ++j) powers[j] = uniform01(rng) * 50.0;
        const TransferMatrix f = total_matrix(chain, powers, Direction::Forward);
        const TransferMatrix r = total_matrix(chain, powers, Direction::Reversed);
        const double err = std::abs(f.m11 - r.m11) + std::abs(f.m12 - r.m21) +
                           std::abs(f.m21 - r.m12) + std::abs(f.m22 - r.m22);
        if (err > 1e-12) ++failures;
    }
    return failures;
}

int property_unwrap_continuity() {
    int failures = 0;
    std::uint64_t rng = 31337;
    for (int trial = 0; trial < 40; ++trial) {
        const double k = 0.12 + 0.05 * uniform01(rng);
        const double dtheta = (kPi / 2 - 0.02) * (2.0 * uniform01(rng) - 1.0);
        std::vector<double> powers, values;
        const InstrumentModel inst;
        for (int i = 0; i < inst.point_count(); ++i) {
            const double p = volts_to_power(inst.voltage_at(i), 1.75);
            powers.push_back(p);
            values.push_back((1.0 - std::cos(k * p + dtheta)) / 2.0);
        }
        const UnwrapResult u =
            unwrap_phase(values, powers, {UnwrapKind::Cosine, UnwrapConstraint::HalfPi});
        std::vector<double> steps;
        for (std::size_t i = 1; i < u.points.size(); ++i) {
            steps.push_back(u.points[i].theta - u.points[i - 1].theta);
        }
        std::vector<double> sorted = steps;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted[sorted.size() / 2];
        for (double s : steps) {
            if (s < -1e-12 || s > 3.0 * med) {
                ++failures;
                break;
            }
        }
    }
    return failures;
}

int property_roundtrip_1000() {
    const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::future<int>> futures;
    for (unsigned job = 0; job < jobs; ++job) {
        futures.push_back(std::async(std::launch::async, [job, jobs]() {
            int failures = 0;
            for (int trial = static_cast<int>(job); trial < 1000;
                 trial += static_cast<int>(jobs)) {
                std::uint64_t rng = 0xACCE5500ull + static_cast<std::uint64_t>(trial) * 6151u;
                const int n = 1 + trial % 8;
                const ChainModel chain = random_chain(n, rng);
                try {
                    const CalibrationResult cal =
                        calibrate(chain, InstrumentModel{}, roundtrip_config());
                    for (int j = 1; j <= n; ++j) {
                        const auto& truth = chain.stages[static_cast<std::size_t>(j - 1)];
                        if (std::fabs(cal.stage(j).k - truth.k) > 1e-3 ||
                            std::fabs(cal.stage(j).dtheta - truth.dtheta) > 2e-2) {
                            ++failures;
                        }
                    }
                } catch (const std::exception&) {
                    ++failures;
                }
            }
            return failures;
        }));
    }
    int failures = 0;
    for (auto& f : futures) failures += f.get();
    return failures;
}

int property_thermal() {
    int failures = 0;
    const CrossSection cs;
    const TemperatureField f = solve_steady(cs, 20.0);
    for (double t : f.t_k) {
        if (t < 300.0 - 1e-9) {
            ++failures;
            break;
        }
    }
    CrossSection fine = cs;
    fine.fine_spacing_um /= 2.0;
    fine.coarse_spacing_um /= 2.0;
    const double rise_a = waveguide_temp(f, cs) - 300.0;
    const double rise_b = waveguide_temp(solve_steady(fine, 20.0), fine) - 300.0;
    if (std::fabs(rise_b - rise_a) / rise_b >= 0.005) ++failures;
    return failures;
}

void criterion_7() {
    std::ostringstream detail;
    int failures = 0;
    const auto add = [&](const std::string& name, int f) {
        failures += f;
        detail << name << "=" << f << " ";
    };
    add("unitarity", property_unitarity());
    add("equivalences", property_equivalences());
    add("reciprocity", property_reciprocity());
    add("unwrap", property_unwrap_continuity());
    add("thermal", property_thermal());
    add("roundtrip1000", property_roundtrip_1000());
    report(7, "property suites", failures == 0, "failure counts: " + detail.str());
}

// ---------------------------------------------------------------- criterion 8
void criterion_8() {
    // least-squares drift coefficient over the measured mean initial phases
    const std::vector<double> temps{15.0, 20.0, 25.0, 30.0, 35.0, 40.0};
    const std::vector<double> means{0.5073, 0.4847, 0.4665, 0.4506, 0.4377, 0.4166};
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < temps.size(); ++i) {
        mx += temps[i];
        my += means[i];
    }
    mx /= 6.0;
    my /= 6.0;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < temps.size(); ++i) {
        sxx += (temps[i] - mx) * (temps[i] - mx);
        sxy += (temps[i] - mx) * (means[i] - my);
    }
    const double coeff = sxy / sxx;

    std::vector<double> recovered;
    for (double temp : temps) {
        ChainModel chain = ChainModel::ideal({{0.1427, 0.4863, 1.75, coeff, 1}}, temp);
        const CalibrationResult cal = calibrate_1cps(chain, InstrumentModel{});
        recovered.push_back(cal.stages[0].dtheta);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < recovered.size(); ++i) {
        if (!(recovered[i] < recovered[i - 1])) monotone = false;
    }
    const double drop_deg = (recovered.front() - recovered.back()) * 180.0 / kPi;
    const bool pass = monotone && std::fabs(drop_deg - 5.2) <= 0.5;
    report(8, "temperature-drift trend", pass,
           "fitted coefficient=" + fmt(coeff, 5) + " rad/degC, 15->40 degC drop=" +
               fmt(drop_deg, 4) + " deg, monotone=" + std::string(monotone ? "yes" : "NO"));
}

}  // namespace

int main() {
    CalibrationResult reference_cal;
    const auto guard = [](int id, const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            report(id, name, false, std::string("exception: ") + e.what());
        }
    };
    guard(1, "six-stage round trip", [&] { criterion_1(reference_cal); });
    guard(2, "fidelity campaign", [&] { criterion_2(reference_cal); });
    guard(3, "constraint-free consistency", [&] { criterion_3(reference_cal); });
    guard(4, "discriminator constants", [] { criterion_4(); });
    guard(5, "coupler-imbalance fidelity bound", [] { criterion_5(); });
    guard(6, "thermal model", [] { criterion_6(); });
    guard(7, "property suites", [] { criterion_7(); });
    guard(8, "temperature-drift trend", [] { criterion_8(); });

    if (g_failed != 0) {
        std::printf("%d criterion(s) failed\n", g_failed);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
