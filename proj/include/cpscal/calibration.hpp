#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpscal/device.hpp"

namespace cpscal {

enum class UnwrapKind { Cosine, Sine };
enum class UnwrapConstraint { HalfPi, None };

struct UnwrapSpec {
    UnwrapKind kind = UnwrapKind::Cosine;
    UnwrapConstraint constraint = UnwrapConstraint::HalfPi;
};

struct PhasePoint {
    double p_mw = 0.0;
    double theta = 0.0;
    double fold = 0.0;  // normalized cos/sin sample the angle was folded from
};

struct UnwrapResult {
    std::vector<PhasePoint> points;
    double span() const {
        return points.empty() ? 0.0 : points.back().theta - points.front().theta;
    }
};

/// Invert the arc-function branch structure of a fringe trace by continuity.
/// Intensities are swing-normalized internally, so reduced-visibility fringes
/// unwrap the same way as full ones.
UnwrapResult unwrap_phase(std::span<const double> intensities, std::span<const double> powers,
                          const UnwrapSpec& spec);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms_residual = 0.0;
};

/// Least-squares line over (P, theta) points. Callers are expected to have
/// dropped arc-function endpoint samples (|fold| > endpoint cut) beforehand.
LineFit fit_line(std::span<const PhasePoint> points);

struct ExtremaResult {
    double p_min_mw = 0.0;
    double p_max_mw = 0.0;
    double c = 0.0;   // mean detector intensity at the minimum
    double c2 = 0.0;  // fringe visibility 2*sqrt(c(1-c))
    std::size_t min_index = 0;
    std::size_t max_index = 0;
    double up_max = 0.0;
};

/// First qualifying local minimum (U_P < eps * max, ties toward lowest power)
/// and first qualifying local maximum of a peak-to-peak trace.
ExtremaResult find_extrema(std::span<const PairwisePoint> trace, double eps);

enum class ThetaAtPmin { Zero, Pi, Unresolved };
enum class SourcePass { RightToLeft, LeftToRight, Transform };

const char* to_string(ThetaAtPmin t);
const char* to_string(SourcePass s);

struct StageCalibration {
    int stage = 0;
    double k = 0.0;        // rad/mW
    double dtheta = 0.0;   // rad
    double p_min = 0.0;    // mW, power at theta in {0, pi}
    double p_max = 0.0;    // mW, power at theta = pi/2
    ThetaAtPmin theta_at_pmin = ThetaAtPmin::Unresolved;
    SourcePass source_pass = SourcePass::RightToLeft;
    double c = 0.0;   // diagnostics from the pass that pinned the stage
    double c2 = 0.0;
};

struct PassTrace {
    SourcePass pass = SourcePass::RightToLeft;
    Direction direction = Direction::Forward;
    int outer = 0;
    int inner = 0;
    std::vector<PairwisePoint> points;
};

enum class CalibrationMode { Constrained, NonConstraint };

struct CalibrationResult {
    std::vector<StageCalibration> stages;  // index 0 = stage 1
    CalibrationMode mode = CalibrationMode::Constrained;
    std::vector<PassTrace> pass_traces;

    const StageCalibration& stage(int label) const {
        return stages.at(static_cast<std::size_t>(label - 1));
    }
};

struct CalibrationConfig {
    double extrema_eps = 0.02;      // relative U_P threshold for the first minimum
    double k_prior = 0.1;           // rad/mW lower bound used to size sweeps
    bool refine = true;             // fine rescan around extrema (step / 10)
    int refine_window_steps = 15;   // half window in coarse steps
    double endpoint_cut = 0.999;    // drop |fold| above this before fitting
    int min_fit_points = 10;
    bool keep_pass_traces = false;
};

struct DthetaResolution {
    double dtheta = 0.0;
    ThetaAtPmin theta_at_pmin = ThetaAtPmin::Unresolved;
};

/// Resolve the initial phase from the pinned power. Under the half-pi
/// constraint the branch with dtheta in (-pi/2, pi/2] is unique; without it a
/// discriminator hint fixes theta at the pin and dtheta is reported in
/// (-pi, pi].
DthetaResolution resolve_dtheta(double k, double p_min, UnwrapConstraint constraint,
                                ThetaAtPmin theta_at_pmin_hint = ThetaAtPmin::Unresolved);

CalibrationResult calibrate_1cps(const ChainModel& chain, const InstrumentModel& instrument,
                                 const CalibrationConfig& config = {});
CalibrationResult calibrate_2cps(const ChainModel& chain, const InstrumentModel& instrument,
                                 const CalibrationConfig& config = {});
CalibrationResult calibrate_even(const ChainModel& chain, const InstrumentModel& instrument,
                                 const CalibrationConfig& config = {});
CalibrationResult calibrate_odd(const ChainModel& chain, const InstrumentModel& instrument,
                                const CalibrationConfig& config = {});

/// Dispatch on chain length.
CalibrationResult calibrate(const ChainModel& chain, const InstrumentModel& instrument,
                            const CalibrationConfig& config = {});

/// Probe-based 0-vs-pi discrimination of one interior stage, all stages
/// pinned at their calibrated P_min.
ThetaAtPmin discriminate_even_nc(const ChainModel& chain, const InstrumentModel& instrument,
                                 int stage, const CalibrationResult& pins);
ThetaAtPmin discriminate_odd_nc(const ChainModel& chain, const InstrumentModel& instrument,
                                int stage, const CalibrationResult& pins);

/// Constrained pipeline for k and P_min, discriminators for interior dtheta.
CalibrationResult calibrate_nonconstraint(const ChainModel& chain,
                                          const InstrumentModel& instrument,
                                          const CalibrationConfig& config = {});

/// Noiseless probe reading used by the discriminators; exposed for tests and
/// the acceptance suite. probe_shifts maps stage -> extra phase (rad) applied
/// on top of the pinned powers.
double nc_probe_intensity(const ChainModel& chain, const InstrumentModel& instrument,
                          const CalibrationResult& pins,
                          const std::map<int, double>& probe_shifts, Direction direction,
                          bool quantized = true);

}  // namespace cpscal
