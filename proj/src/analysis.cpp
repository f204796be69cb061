#include "cpscal/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <thread>

namespace cpscal {

namespace {

double ideal_i4(double theta) { return 0.5 * (1.0 - std::cos(theta)); }

}  // namespace

double fidelity(double i_exp, double i_theory) {
    if (i_exp < 0.0 || i_exp > 1.0 || i_theory < 0.0 || i_theory > 1.0) {
        fail(ErrorCode::InvalidParameter, "fidelity inputs must lie in [0,1]");
    }
    return std::sqrt(i_exp * i_theory) + std::sqrt((1.0 - i_exp) * (1.0 - i_theory));
}

FidelityReport FidelityReport::from_values(std::vector<double> values,
                                           const std::vector<double>& thresholds) {
    if (values.empty()) fail(ErrorCode::InvalidParameter, "fidelity report needs values");
    FidelityReport r;
    r.values = std::move(values);
    r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) /
             static_cast<double>(r.values.size());
    const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
    r.min = *lo;
    r.max = *hi;
    for (double t : thresholds) {
        const auto above = std::count_if(r.values.begin(), r.values.end(),
                                         [t](double v) { return v > t; });
        r.fraction_above[t] = static_cast<double>(above) / static_cast<double>(r.values.size());
    }
    return r;
}

FidelityReport fidelity_campaign(const ChainModel& truth, const CalibrationResult& cal,
                                 const InstrumentModel& instrument,
                                 const std::vector<double>& thresholds) {
    truth.validate();
    instrument.validate();
    if (static_cast<int>(cal.stages.size()) != truth.size()) {
        fail(ErrorCode::InvalidParameter, "calibration does not cover every stage");
    }

    const int n_points = instrument.point_count();
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(truth.size()) * static_cast<std::size_t>(n_points));

    const TransferMatrix ideal_mmi = mmi(MmiParams{});
    for (int stage = 1; stage <= truth.size(); ++stage) {
        const ScanTrace trace = scan_stage(truth, instrument, stage, {}, Direction::Forward);
        const auto& st = cal.stage(stage);

        // ideal-chain prediction split around the swept stage
        TransferMatrix before = ideal_mmi;
        for (int s = 1; s < stage; ++s) {
            before = ideal_mmi * (phase_shifter(cal.stage(s).dtheta) * before);
        }
        TransferMatrix after = ideal_mmi;
        for (int s = stage + 1; s <= truth.size(); ++s) {
            after = ideal_mmi * (phase_shifter(cal.stage(s).dtheta) * after);
        }
        const JonesVector w = before.apply({Complex{0.0, 0.0}, Complex{1.0, 0.0}});

        for (int i = 0; i < n_points; ++i) {
            const double p = trace.applied_power_mw[static_cast<std::size_t>(i)];
            const JonesVector out =
                after.apply({w.up * std::polar(1.0, st.k * p + st.dtheta), w.down});
            const double i_theory = std::clamp(intensities(out).second, 0.0, 1.0);
            const double i_exp = std::clamp(trace.intensity[static_cast<std::size_t>(i)], 0.0, 1.0);
            values.push_back(fidelity(i_exp, i_theory));
        }
    }
    return FidelityReport::from_values(std::move(values), thresholds);
}

double imbalance_db(double t_a, double t_b) {
    if (!(t_a > 0.0) || !(t_b > 0.0)) {
        fail(ErrorCode::InvalidParameter, "imbalance requires positive transmissions");
    }
    return std::fabs(10.0 * std::log10(t_a / t_b));
}

MmiQuality mmi_quality_from_transmissions(double t_cross, double t_bar) {
    if (!(t_cross > 0.0) || !(t_bar > 0.0)) {
        fail(ErrorCode::InvalidParameter, "transmissions must be positive");
    }
    return {1.0, t_bar / (t_cross + t_bar)};
}

double er_port3(const MmiQuality& q) {
    if (!(q.r > 0.0)) fail(ErrorCode::InvalidParameter, "ratio r must be > 0");
    if (q.r == 1.0) return std::numeric_limits<double>::infinity();
    const double ratio = (q.r + 1.0) / (q.r - 1.0);
    return 10.0 * std::log10(ratio * ratio);
}

double er_port4(const MmiQuality& q) {
    if (!(q.r > 0.0)) fail(ErrorCode::InvalidParameter, "ratio r must be > 0");
    if (!(q.eta > 0.0) || !(q.eta < 1.0)) fail(ErrorCode::InvalidParameter, "eta must lie in (0,1)");
    const double num = q.r * (1.0 - q.eta) + q.eta;
    const double den = q.r * (1.0 - q.eta) - q.eta;
    if (den == 0.0) return std::numeric_limits<double>::infinity();
    const double ratio = num / den;
    return 10.0 * std::log10(ratio * ratio);
}

double imbalanced_i3(const MmiParams& p, double theta) {
    p.validate();
    const double et = std::exp(-p.tau);
    const double ek = std::exp(-p.kappa);
    const double cross = 2.0 * std::exp(-(p.tau + p.kappa) / 2.0) * std::cos(theta);
    return et * (1.0 - p.eta) * p.eta * (et + ek + cross);
}

double imbalanced_i4(const MmiParams& p, double theta) {
    p.validate();
    const double et = std::exp(-p.tau);
    const double ek = std::exp(-p.kappa);
    const double cross = 2.0 * std::exp(-(p.tau + p.kappa) / 2.0) * std::cos(theta);
    return ek * (et * (1.0 - p.eta) * (1.0 - p.eta) + ek * p.eta * p.eta -
                 cross * (1.0 - p.eta) * p.eta);
}

namespace {

MmiParams params_from_quality(const MmiQuality& q) {
    // realize r = e^{-(tau-kappa)/2} with the lossier branch at unity
    MmiParams p;
    p.eta = q.eta;
    if (q.r >= 1.0) {
        p.tau = 0.0;
        p.kappa = 2.0 * std::log(q.r);
    } else {
        p.tau = -2.0 * std::log(q.r);
        p.kappa = 0.0;
    }
    return p;
}

}  // namespace

double worst_case_fidelity(const MmiQuality& q, int theta_samples) {
    const MmiParams p = params_from_quality(q);
    double worst = 1.0;
    for (int i = 0; i < theta_samples; ++i) {
        const double theta = 2.0 * kPi * i / theta_samples;
        const double i3 = imbalanced_i3(p, theta);
        const double i4 = imbalanced_i4(p, theta);
        const double total = i3 + i4;
        if (!(total > 0.0)) continue;
        const double f = fidelity(std::clamp(i4 / total, 0.0, 1.0),
                                  std::clamp(ideal_i4(theta), 0.0, 1.0));
        worst = std::min(worst, f);
    }
    return worst;
}

namespace {

double region_minimum(double er_bound_db, double r_lo, double r_hi, double eta_lo, double eta_hi,
                      int grid, int theta_samples, MmiQuality* argmin) {
    const int jobs = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::future<std::pair<double, MmiQuality>>> futures;
    futures.reserve(static_cast<std::size_t>(jobs));
    for (int job = 0; job < jobs; ++job) {
        futures.push_back(std::async(std::launch::async, [=]() {
            double best = std::numeric_limits<double>::infinity();
            MmiQuality best_q;
            for (int ir = job; ir <= grid; ir += jobs) {
                const double r = r_lo + (r_hi - r_lo) * ir / grid;
                const MmiQuality probe{r, 0.5};
                if (er_port3(probe) < er_bound_db) continue;
                for (int ie = 0; ie <= grid; ++ie) {
                    const double eta = eta_lo + (eta_hi - eta_lo) * ie / grid;
                    const MmiQuality q{r, eta};
                    if (er_port4(q) < er_bound_db) continue;
                    const double f = worst_case_fidelity(q, theta_samples);
                    if (f < best) {
                        best = f;
                        best_q = q;
                    }
                }
            }
            return std::make_pair(best, best_q);
        }));
    }
    double best = std::numeric_limits<double>::infinity();
    MmiQuality best_q;
    for (auto& f : futures) {
        auto [value, q] = f.get();
        if (value < best) {
            best = value;
            best_q = q;
        }
    }
    if (argmin != nullptr) *argmin = best_q;
    return best;
}

}  // namespace

double min_fidelity_given_er(double er_bound_db, const MinFidelitySearch& search) {
    if (!(er_bound_db > 0.0)) fail(ErrorCode::InvalidParameter, "extinction bound must be > 0");
    MmiQuality argmin;
    double best = region_minimum(er_bound_db, search.r_lo, search.r_hi, search.eta_lo,
                                 search.eta_hi, search.grid, search.theta_samples, &argmin);
    if (!std::isfinite(best)) {
        fail(ErrorCode::InvalidParameter, "no admissible (r, eta) points at this bound");
    }
    if (search.refine) {
        const double dr = 2.0 * (search.r_hi - search.r_lo) / search.grid;
        const double de = 2.0 * (search.eta_hi - search.eta_lo) / search.grid;
        const double refined = region_minimum(
            er_bound_db, std::max(search.r_lo, argmin.r - dr), std::min(search.r_hi, argmin.r + dr),
            std::max(search.eta_lo, argmin.eta - de), std::min(search.eta_hi, argmin.eta + de),
            search.grid / 4, search.theta_samples * 4, nullptr);
        if (std::isfinite(refined)) best = std::min(best, refined);
    }
    return best;
}

}  // namespace cpscal
