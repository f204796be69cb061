#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cpscal/jones.hpp"

namespace cpscal {

/// Hidden per-stage truth of one thermo-optic phase shifter.
struct TopsGroundTruth {
    double k = 0.15;                 // power-to-phase slope, rad/mW
    double dtheta = 0.0;             // initial relative phase at zero power, rad
    double resistance = 1.75;        // heater resistance, kOhm
    double dtheta_temp_coeff = 0.0;  // initial-phase drift, rad per degC
    int label = 0;                   // 1-based stage index

    void validate() const;
};

/// N phase-shift stages separated by N+1 couplers.
struct ChainModel {
    std::vector<TopsGroundTruth> stages;
    std::vector<MmiParams> mmis;  // size stages.size() + 1
    double ambient_temp_c = 20.0;

    static ChainModel ideal(std::vector<TopsGroundTruth> stages, double ambient_temp_c = 20.0);

    int size() const { return static_cast<int>(stages.size()); }
    bool lossless() const;
    void validate() const;
};

/// Voltage source + detector model: quantized scan grid and additive
/// Gaussian read noise on normalized intensity.
struct InstrumentModel {
    double v_min = 0.0;
    double v_max = 10.0;
    double v_step = 0.01;
    double noise_sigma = 0.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
    /// Number of grid points of the half-open sweep [v_min, v_max).
    int point_count() const;
    double voltage_at(int n) const { return v_min + n * v_step; }
};

enum class Direction { Forward, Reversed };

const char* to_string(Direction d);

struct ScanTrace {
    int stage = 0;
    Direction direction = Direction::Forward;
    std::vector<double> applied_power_mw;
    std::vector<double> intensity;
    std::map<int, double> fixed_powers_mw;
};

/// One outer step of a pairwise scan: peak-to-peak and mean of the inner sweep.
struct PairwisePoint {
    double p_outer_mw = 0.0;
    double up = 0.0;
    double mean_intensity = 0.0;
};

double volts_to_power(double volts, double resistance_kohm);
double power_to_volts(double power_mw, double resistance_kohm);

/// Total relative phase of one stage at a given heating power and ambient.
double stage_phase(const TopsGroundTruth& truth, double power_mw, double ambient_temp_c);

struct OutputIntensities {
    double upper = 0.0;  // bar port (port 3 forward, port 1 reversed)
    double lower = 0.0;  // detector port (port 4 forward, port 2 reversed)
};

/// Propagate [0,1]^T through the chain at the given per-stage powers.
/// Reversed direction uses the transposed total matrix (reciprocity).
/// Lossy chains emit normalized intensities I/(I_bar+I_cross).
OutputIntensities simulate_output(const ChainModel& chain,
                                  const std::map<int, double>& powers_mw, Direction direction);

TransferMatrix total_matrix(const ChainModel& chain, const std::map<int, double>& powers_mw,
                            Direction direction);

/// Sweep one stage over the instrument grid; all other stages held at
/// fixed_powers_mw (missing entries default to 0). Detector noise is a pure
/// function of (seed, stage, direction, fixed powers, sample index).
ScanTrace scan_stage(const ChainModel& chain, const InstrumentModel& instrument, int target,
                     const std::map<int, double>& fixed_powers_mw, Direction direction);

/// Nested scan: for each quantized outer power, sweep the inner stage over
/// inner_instrument's grid and record the peak-to-peak value of the detector
/// intensity.
std::vector<PairwisePoint> pairwise_trace(const ChainModel& chain,
                                          const InstrumentModel& outer_instrument,
                                          const InstrumentModel& inner_instrument, int outer,
                                          int inner, const std::map<int, double>& fixed_powers_mw,
                                          Direction direction);

std::vector<PairwisePoint> pairwise_trace(const ChainModel& chain,
                                          const InstrumentModel& instrument, int outer, int inner,
                                          const std::map<int, double>& fixed_powers_mw,
                                          Direction direction);

namespace detail {
/// Deterministic keyed standard-normal draw (splitmix64 + Box-Muller).
double keyed_normal(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2, std::uint64_t k3);
std::uint64_t mix64(std::uint64_t x);
}  // namespace detail

}  // namespace cpscal
