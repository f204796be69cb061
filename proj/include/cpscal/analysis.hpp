#pragma once

#include <map>
#include <vector>

#include "cpscal/calibration.hpp"
#include "cpscal/device.hpp"

namespace cpscal {

struct FidelityReport {
    std::vector<double> values;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::map<double, double> fraction_above;

    static FidelityReport from_values(std::vector<double> values,
                                      const std::vector<double>& thresholds);
};

/// Classical two-outcome overlap of a measured and a predicted normalized
/// intensity: sqrt(ie*it) + sqrt((1-ie)(1-it)).
double fidelity(double i_exp, double i_theory);

/// Sweep every stage over the instrument grid (others unpowered), comparing
/// the device output against the ideal-chain prediction built from a
/// calibration. Detector noise applies to the device side only.
FidelityReport fidelity_campaign(const ChainModel& truth, const CalibrationResult& cal,
                                 const InstrumentModel& instrument,
                                 const std::vector<double>& thresholds = {0.999});

/// |10*log10(t_a/t_b)| in dB.
double imbalance_db(double t_a, double t_b);

/// Loss-asymmetry ratio r = e^{-(tau-kappa)/2} and splitting ratio of a
/// 2x2 coupler.
struct MmiQuality {
    double r = 1.0;
    double eta = 0.5;
};

/// Attribute measured cross/bar transmissions to a splitting ratio with
/// balanced losses (r = 1).
MmiQuality mmi_quality_from_transmissions(double t_cross, double t_bar);

/// Extinction ratio of the bar port of an interferometer built from two
/// identical imperfect couplers; independent of eta. r = 1 gives +infinity.
double er_port3(const MmiQuality& q);
/// Extinction ratio of the cross port; singular at r(1-eta) = eta.
double er_port4(const MmiQuality& q);

/// Closed-form output intensities of an interferometer built from two
/// identical imperfect couplers, fed on the lower port.
double imbalanced_i3(const MmiParams& p, double theta);
double imbalanced_i4(const MmiParams& p, double theta);

/// Worst-case fidelity (over theta) of the normalized imbalanced output
/// against the ideal fringe, for one coupler quality.
double worst_case_fidelity(const MmiQuality& q, int theta_samples = 720);

struct MinFidelitySearch {
    double r_lo = 1.0;
    double r_hi = 1.02;
    double eta_lo = 0.47;
    double eta_hi = 0.53;
    int grid = 400;          // intervals per axis (grid+1 samples)
    int theta_samples = 720;
    bool refine = true;      // 4x refinement pass around the minimizer
};

/// Minimum worst-case fidelity over the (r, eta) region where both port
/// extinction ratios stay at or above er_bound_db.
double min_fidelity_given_er(double er_bound_db, const MinFidelitySearch& search = {});

}  // namespace cpscal
