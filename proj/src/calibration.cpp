#include "cpscal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

namespace cpscal {

namespace {

constexpr double kHalfPi = kPi / 2.0;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kProbeShift = 0.4 * kPi;
constexpr double kSpanSlack = 0.35;   // phase margin added to sweep sizing
constexpr double kMinSpan = kTwoPi - 0.3;

// Probe-reading constants of the 0-vs-pi discriminators, derived from the
// accumulated 0.8*pi relative-phase change a direct-connection stage passes on.
const double kEvenPiHigh = 0.5 * (1.0 + std::sin(0.8 * kPi) * std::sin(0.4 * kPi));  // 0.77951
const double kEvenPiLow = 1.0 - kEvenPiHigh;                                         // 0.22049
const double kOddPiDirectHigh = 0.5 * (1.0 + std::cos(0.2 * kPi));                   // 0.90451
const double kOddPiDirectLow = 1.0 - kOddPiDirectHigh;                               // 0.09549
const double kOddZeroQuadHigh = 0.5 * (1.0 + std::sin(0.4 * kPi));                   // 0.97553
const double kOddZeroQuadLow = 1.0 - kOddZeroQuadHigh;                               // 0.02447
const double kOddPiQuadHigh = 0.5 * (1.0 + std::cos(0.2 * kPi) * std::sin(0.4 * kPi));  // 0.88471
const double kOddPiQuadLow = 1.0 - kOddPiQuadHigh;                                      // 0.11529
constexpr double kBandWidth = 0.05;

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

struct Walk {
    std::vector<double> theta;
};

// Unfold a folded angle sequence by continuity. fold[i] lies in [0, pi]
// (cosine) or [-pi/2, pi/2] (sine); the reconstructed angle is expected to
// move monotonically through reflections at the fold boundaries.
Walk walk_branches(const std::vector<double>& fold, UnwrapKind kind, int initial_sign) {
    Walk w;
    w.theta.resize(fold.size());
    int s = initial_sign;
    double offset = 0.0;
    const auto value = [&](int sign, double off, double f) {
        if (kind == UnwrapKind::Cosine) return sign > 0 ? off + f : off - f;
        return sign > 0 ? off + f : off + kPi - f;
    };
    w.theta[0] = value(s, offset, fold[0]);
    double last_step = 0.0;
    for (std::size_t i = 1; i < fold.size(); ++i) {
        const double stay = value(s, offset, fold[i]);
        double flip_offset = offset;
        int flip_sign = -s;
        if (kind == UnwrapKind::Cosine) {
            if (s > 0) flip_offset = offset + kTwoPi;  // reflect at pi
        } else {
            if (s < 0) flip_offset = offset + kTwoPi;  // reflect at -pi/2
        }
        const double flip = value(flip_sign, flip_offset, fold[i]);
        // the heater only drives the phase up; extrapolate the local step so
        // the walk crosses reflections instead of mirroring at them
        const double predicted = w.theta[i - 1] + std::max(0.0, last_step);
        if (std::fabs(stay - predicted) <= std::fabs(flip - predicted)) {
            w.theta[i] = stay;
        } else {
            s = flip_sign;
            offset = flip_offset;
            w.theta[i] = flip;
        }
        last_step = w.theta[i] - w.theta[i - 1];
    }
    return w;
}

LineFit fit_points(const std::vector<double>& p, const std::vector<double>& th) {
    const double n = static_cast<double>(p.size());
    const double mp = std::accumulate(p.begin(), p.end(), 0.0) / n;
    const double mt = std::accumulate(th.begin(), th.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sxx += (p[i] - mp) * (p[i] - mp);
        sxy += (p[i] - mp) * (th[i] - mt);
    }
    if (sxx <= 0.0) fail(ErrorCode::FitFailure, "degenerate power axis in line fit");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = mt - f.slope * mp;
    double ss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = th[i] - (f.slope * p[i] + f.intercept);
        ss += r * r;
    }
    f.rms_residual = std::sqrt(ss / n);
    return f;
}

}  // namespace

const char* to_string(ThetaAtPmin t) {
    switch (t) {
        case ThetaAtPmin::Zero: return "0";
        case ThetaAtPmin::Pi: return "pi";
        default: return "unresolved";
    }
}

const char* to_string(SourcePass s) {
    switch (s) {
        case SourcePass::RightToLeft: return "right_to_left";
        case SourcePass::LeftToRight: return "left_to_right";
        default: return "transform";
    }
}

UnwrapResult unwrap_phase(std::span<const double> intensities, std::span<const double> powers,
                          const UnwrapSpec& spec) {
    if (intensities.size() != powers.size() || intensities.size() < 3) {
        fail(ErrorCode::InvalidParameter, "unwrap needs matching intensity/power sequences");
    }
    for (std::size_t i = 1; i < powers.size(); ++i) {
        if (!(powers[i] > powers[i - 1])) {
            fail(ErrorCode::InvalidParameter, "unwrap requires strictly increasing powers");
        }
    }

    const auto [lo_it, hi_it] = std::minmax_element(intensities.begin(), intensities.end());
    const double mid = (*hi_it + *lo_it) / 2.0;
    const double amp = (*hi_it - *lo_it) / 2.0;
    if (!(amp > 1e-9)) fail(ErrorCode::InsufficientScope, "no fringe modulation in scan");

    std::vector<double> x(intensities.size());
    std::vector<double> fold(intensities.size());
    for (std::size_t i = 0; i < intensities.size(); ++i) {
        // cosine convention: I = mid - amp*cos(theta); sine: I = mid + amp*sin(theta)
        double v = (spec.kind == UnwrapKind::Cosine) ? (mid - intensities[i]) / amp
                                                     : (intensities[i] - mid) / amp;
        v = std::clamp(v, -1.0, 1.0);
        x[i] = v;
        fold[i] = (spec.kind == UnwrapKind::Cosine) ? std::acos(v) : std::asin(v);
    }

    // Both fold directions are consistent with the data (the arc functions are
    // even about their extremes); the physical branch is the one the heater
    // drives upward. Walk both and keep the ascending reconstruction.
    const Walk wa = walk_branches(fold, spec.kind, +1);
    const Walk wb = walk_branches(fold, spec.kind, -1);
    const double sa = wa.theta.back() - wa.theta.front();
    const double sb = wb.theta.back() - wb.theta.front();
    const Walk& w = (sa >= sb) ? wa : wb;
    if (w.theta.back() <= w.theta.front()) {
        fail(ErrorCode::UnwrapFailure, "unwrapped phase is not increasing with power");
    }

    // continuity validation: no step may exceed 3x the median step, and the
    // sequence must not back up by more than that either
    std::vector<double> steps(w.theta.size() - 1);
    for (std::size_t i = 1; i < w.theta.size(); ++i) steps[i - 1] = w.theta[i] - w.theta[i - 1];
    std::vector<double> mags(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) mags[i] = std::fabs(steps[i]);
    const double med = median(mags);
    const double limit = 3.0 * med + 1e-9;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] > limit || steps[i] < -limit) {
            fail(ErrorCode::UnwrapFailure,
                 "unwrap continuity broken at sample " + std::to_string(i + 1));
        }
    }

    UnwrapResult result;
    result.points.resize(w.theta.size());
    for (std::size_t i = 0; i < w.theta.size(); ++i) {
        result.points[i] = {powers[i], w.theta[i], x[i]};
    }
    return result;
}

LineFit fit_line(std::span<const PhasePoint> points) {
    if (points.size() < 2) fail(ErrorCode::FitFailure, "too few points for a line fit");
    std::vector<double> p(points.size()), th(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        p[i] = points[i].p_mw;
        th[i] = points[i].theta;
    }
    return fit_points(p, th);
}

ExtremaResult find_extrema(std::span<const PairwisePoint> trace, double eps) {
    if (!(eps > 0.0)) fail(ErrorCode::InvalidParameter, "extrema eps must be > 0");
    if (trace.size() < 3) fail(ErrorCode::InvalidParameter, "peak-to-peak trace too short");

    double up_max = 0.0;
    for (const auto& pt : trace) up_max = std::max(up_max, pt.up);
    if (!(up_max > 0.0)) {
        fail(ErrorCode::InsufficientScope, "peak-to-peak trace is flat (no fringe visibility)");
    }
    const double min_thresh = eps * up_max;
    const double max_thresh = (1.0 - eps) * up_max;

    const auto is_local_min = [&](std::size_t i) {
        const bool left_ok = i == 0 || trace[i].up <= trace[i - 1].up;
        const bool right_ok = i + 1 == trace.size() || trace[i].up <= trace[i + 1].up;
        return left_ok && right_ok && trace[i].up < min_thresh;
    };
    const auto is_local_max = [&](std::size_t i) {
        const bool left_ok = i == 0 || trace[i].up >= trace[i - 1].up;
        const bool right_ok = i + 1 == trace.size() || trace[i].up >= trace[i + 1].up;
        return left_ok && right_ok && trace[i].up > max_thresh;
    };

    ExtremaResult r;
    r.up_max = up_max;
    bool found_min = false, found_max = false;
    for (std::size_t i = 0; i < trace.size() && !found_min; ++i) {
        if (is_local_min(i)) {
            r.min_index = i;
            found_min = true;
        }
    }
    // interior maxima first: a high boundary sample need not be a true
    // quadrature point, merely the edge of the sweep
    for (std::size_t i = 1; i + 1 < trace.size() && !found_max; ++i) {
        if (is_local_max(i)) {
            r.max_index = i;
            found_max = true;
        }
    }
    if (!found_max) {
        for (std::size_t i : {std::size_t{0}, trace.size() - 1}) {
            if (!found_max && is_local_max(i)) {
                r.max_index = i;
                found_max = true;
            }
        }
    }
    if (!found_min) {
        fail(ErrorCode::InsufficientScope,
             "no peak-to-peak minimum below threshold within the scanned scope");
    }
    if (!found_max) {
        fail(ErrorCode::InsufficientScope, "no peak-to-peak maximum within the scanned scope");
    }
    r.p_min_mw = trace[r.min_index].p_outer_mw;
    r.p_max_mw = trace[r.max_index].p_outer_mw;
    r.c = std::clamp(trace[r.min_index].mean_intensity, 0.0, 1.0);
    r.c2 = 2.0 * std::sqrt(r.c * (1.0 - r.c));
    return r;
}

DthetaResolution resolve_dtheta(double k, double p_min, UnwrapConstraint constraint,
                                ThetaAtPmin theta_at_pmin_hint) {
    if (!(k > 0.0)) fail(ErrorCode::InvalidParameter, "resolve_dtheta requires k > 0");
    if (p_min < 0.0) fail(ErrorCode::InvalidParameter, "resolve_dtheta requires p_min >= 0");

    if (constraint == UnwrapConstraint::None) {
        if (theta_at_pmin_hint == ThetaAtPmin::Unresolved) {
            fail(ErrorCode::InvalidParameter,
                 "unconstrained dtheta resolution needs a discriminator hint");
        }
        const double target = theta_at_pmin_hint == ThetaAtPmin::Zero ? 0.0 : kPi;
        return {wrap_pm_pi(target - k * p_min), theta_at_pmin_hint};
    }

    const double c_zero = wrap_pm_pi(-k * p_min);
    const double c_pi = wrap_pm_pi(kPi - k * p_min);
    double chosen;
    ThetaAtPmin which;
    if (c_zero > -kHalfPi && c_zero <= kHalfPi) {
        chosen = c_zero;
        which = ThetaAtPmin::Zero;
    } else {
        chosen = c_pi;
        which = ThetaAtPmin::Pi;
    }
    if (kHalfPi - std::fabs(chosen) < 1e-9) {
        fail(ErrorCode::ConstraintViolation,
             "initial phase sits on the |dtheta| = pi/2 constraint boundary");
    }
    return {chosen, which};
}

namespace {

struct PairOutcome {
    int outer = 0;
    int inner = 0;
    double p_min = 0.0;
    double p_max = 0.0;
    double c = 0.0;
    double c2 = 0.0;
    double up_max = 0.0;
    double k_inner = 0.0;
    double intercept = 0.0;
    std::vector<PairwisePoint> coarse;
};

InstrumentModel clamp_sweep(const InstrumentModel& inst, double resistance, double k_prior,
                            double phase_span) {
    InstrumentModel out = inst;
    if (!(k_prior > 0.0)) return out;
    const double v_needed = std::sqrt(phase_span / k_prior * resistance);
    if (v_needed < inst.v_max) {
        const int steps = static_cast<int>(std::ceil((v_needed - inst.v_min) / inst.v_step));
        out.v_max = std::min(inst.v_max, inst.v_min + steps * inst.v_step);
    }
    return out;
}

std::map<int, double> with_power(const std::map<int, double>& pins, int stage, double power) {
    std::map<int, double> out = pins;
    out[stage] = power;
    return out;
}

std::vector<PhasePoint> drop_endpoints(const std::vector<PhasePoint>& points, double cut) {
    std::vector<PhasePoint> kept;
    kept.reserve(points.size());
    for (const auto& p : points) {
        if (std::fabs(p.fold) <= cut) kept.push_back(p);
    }
    return kept;
}

double refine_extremum(const ChainModel& chain, const InstrumentModel& inst,
                       const InstrumentModel& inner_inst, const CalibrationConfig& cfg, int outer,
                       int inner, const std::map<int, double>& pins, Direction dir,
                       double p_coarse, bool minimum) {
    const auto& truth = chain.stages[static_cast<std::size_t>(outer - 1)];
    const double v_c = power_to_volts(p_coarse, truth.resistance);
    InstrumentModel fine = inst;
    fine.v_step = inst.v_step / 10.0;
    fine.v_min = std::max(inst.v_min, v_c - cfg.refine_window_steps * inst.v_step);
    fine.v_max = std::min(inst.v_max, v_c + cfg.refine_window_steps * inst.v_step);
    if (fine.point_count() < 3) return p_coarse;

    const auto window = pairwise_trace(chain, fine, inner_inst, outer, inner, pins, dir);
    std::size_t best = 0;
    for (std::size_t i = 1; i < window.size(); ++i) {
        if (minimum ? window[i].up < window[best].up : window[i].up > window[best].up) best = i;
    }
    return window[best].p_outer_mw;
}

/// One pairwise-scan step: locate the outer stage's first visibility minimum
/// and maximum, then extract the inner stage's slope from the fringe recorded
/// with the outer stage parked at the maximum.
PairOutcome run_pair(const ChainModel& chain, const InstrumentModel& inst,
                     const CalibrationConfig& cfg, int outer, int inner,
                     const std::map<int, double>& pins, Direction dir, UnwrapKind kind,
                     bool keep_trace) {
    const auto& outer_truth = chain.stages[static_cast<std::size_t>(outer - 1)];
    const auto& inner_truth = chain.stages[static_cast<std::size_t>(inner - 1)];
    const InstrumentModel outer_inst =
        clamp_sweep(inst, outer_truth.resistance, cfg.k_prior, 1.5 * kPi + kSpanSlack);
    const InstrumentModel inner_inst =
        clamp_sweep(inst, inner_truth.resistance, cfg.k_prior, kTwoPi + kSpanSlack);

    PairOutcome out;
    out.outer = outer;
    out.inner = inner;

    auto coarse = pairwise_trace(chain, outer_inst, inner_inst, outer, inner, pins, dir);
    const ExtremaResult ext = find_extrema(coarse, cfg.extrema_eps);
    out.up_max = ext.up_max;
    out.c = ext.c;
    out.c2 = ext.c2;
    out.p_min = ext.p_min_mw;
    out.p_max = ext.p_max_mw;
    if (keep_trace) out.coarse = std::move(coarse);

    if (cfg.refine) {
        out.p_min = refine_extremum(chain, inst, inner_inst, cfg, outer, inner, pins, dir,
                                    out.p_min, true);
        out.p_max = refine_extremum(chain, inst, inner_inst, cfg, outer, inner, pins, dir,
                                    out.p_max, false);
        const ScanTrace at_min =
            scan_stage(chain, inner_inst, inner, with_power(pins, outer, out.p_min), dir);
        const double mean =
            std::accumulate(at_min.intensity.begin(), at_min.intensity.end(), 0.0) /
            static_cast<double>(at_min.intensity.size());
        out.c = std::clamp(mean, 0.0, 1.0);
        out.c2 = 2.0 * std::sqrt(out.c * (1.0 - out.c));
    }

    const ScanTrace fringe =
        scan_stage(chain, inner_inst, inner, with_power(pins, outer, out.p_max), dir);
    const UnwrapResult unwrapped =
        unwrap_phase(fringe.intensity, fringe.applied_power_mw, {kind, UnwrapConstraint::None});
    if (unwrapped.span() < kMinSpan) {
        fail(ErrorCode::InsufficientScope,
             "inner scan of stage " + std::to_string(inner) + " spans " +
                 std::to_string(unwrapped.span()) + " rad (< 2*pi)");
    }
    const auto kept = drop_endpoints(unwrapped.points, cfg.endpoint_cut);
    if (static_cast<int>(kept.size()) < cfg.min_fit_points) {
        fail(ErrorCode::FitFailure, "too few points after endpoint filtering");
    }
    const LineFit fit = fit_line(kept);
    if (!(fit.slope > 0.0)) {
        fail(ErrorCode::FitFailure, "nonpositive slope for stage " + std::to_string(inner));
    }
    out.k_inner = fit.slope;
    out.intercept = fit.intercept;
    return out;
}

void check_power_range(const StageCalibration& st, const ChainModel& chain,
                       const InstrumentModel& inst) {
    const auto& truth = chain.stages[static_cast<std::size_t>(st.stage - 1)];
    const double p_cap = volts_to_power(inst.v_max, truth.resistance) + 1e-9;
    if (st.p_min < -1e-12 || st.p_min > p_cap || st.p_max < -1e-12 || st.p_max > p_cap) {
        fail(ErrorCode::InvalidParameter,
             "calibrated powers of stage " + std::to_string(st.stage) +
                 " fall outside the instrument range");
    }
}

double merge_k(int stage, double first, double second) {
    if (std::fabs(first - second) > 5e-3) {
        fail(ErrorCode::PassInconsistency,
             "slope of stage " + std::to_string(stage) + " differs between passes by " +
                 std::to_string(std::fabs(first - second)) + " rad/mW");
    }
    return (first + second) / 2.0;
}

ThetaAtPmin classify_pin(double k, double p_min, double dtheta) {
    const double at_pin = wrap_two_pi(k * p_min + dtheta);
    if (std::fabs(wrap_pm_pi(at_pin)) < 0.3) return ThetaAtPmin::Zero;
    if (std::fabs(at_pin - kPi) < 0.3) return ThetaAtPmin::Pi;
    return ThetaAtPmin::Unresolved;
}

double derive_p_for_target(double k, double dtheta, double target) {
    return (target - dtheta) / k;
}

// First nonnegative power with theta in {0, pi}. A recovered dtheta within one
// DAC phase step above zero still pins at theta = 0 (the zero crossing sits
// inside the first quantization step).
std::pair<ThetaAtPmin, double> derive_pin(double k, double dtheta) {
    if (dtheta <= 1.7e-2) {
        return {ThetaAtPmin::Zero, std::max(0.0, -dtheta / k)};
    }
    return {ThetaAtPmin::Pi, (kPi - dtheta) / k};
}

// Resolve dtheta from a pin recorded with a quadrature offset injected in
// front of the stage: theta(p_pin) + pi/2 is 0 or pi, so theta(p_pin) is
// -pi/2 or +pi/2.
double resolve_shifted_pin(double k, double p_pin) {
    const double c_minus = wrap_pm_pi(-kHalfPi - k * p_pin);
    const double c_plus = wrap_pm_pi(kHalfPi - k * p_pin);
    return (c_minus > -kHalfPi && c_minus <= kHalfPi) ? c_minus : c_plus;
}

}  // namespace

CalibrationResult calibrate_1cps(const ChainModel& chain, const InstrumentModel& instrument,
                                 const CalibrationConfig& config) {
    chain.validate();
    instrument.validate();
    if (chain.size() != 1) fail(ErrorCode::InvalidParameter, "calibrate_1cps requires N = 1");

    const auto& truth = chain.stages[0];
    const InstrumentModel sweep =
        clamp_sweep(instrument, truth.resistance, config.k_prior, kTwoPi + kSpanSlack);
    const ScanTrace trace = scan_stage(chain, sweep, 1, {}, Direction::Forward);
    const UnwrapResult unwrapped =
        unwrap_phase(trace.intensity, trace.applied_power_mw,
                     {UnwrapKind::Cosine, UnwrapConstraint::HalfPi});
    if (unwrapped.span() < kMinSpan) {
        fail(ErrorCode::InsufficientScope, "single-stage scan spans less than 2*pi");
    }
    const auto kept = drop_endpoints(unwrapped.points, config.endpoint_cut);
    if (static_cast<int>(kept.size()) < config.min_fit_points) {
        fail(ErrorCode::FitFailure, "too few points after endpoint filtering");
    }
    const LineFit fit = fit_line(kept);
    if (!(fit.slope > 0.0)) fail(ErrorCode::FitFailure, "nonpositive slope");

    double dtheta = wrap_pm_pi(fit.intercept);
    if (std::fabs(dtheta) > kHalfPi + 0.05) {
        fail(ErrorCode::ConstraintViolation,
             "recovered initial phase violates |dtheta| < pi/2");
    }
    dtheta = std::clamp(dtheta, -kHalfPi, kHalfPi);

    StageCalibration st;
    st.stage = 1;
    st.k = fit.slope;
    st.dtheta = dtheta;
    std::tie(st.theta_at_pmin, st.p_min) = derive_pin(st.k, dtheta);
    st.p_max = derive_p_for_target(st.k, dtheta, kHalfPi);
    st.source_pass = SourcePass::RightToLeft;
    const auto [lo, hi] = std::minmax_element(trace.intensity.begin(), trace.intensity.end());
    st.c = *lo;
    st.c2 = *hi - *lo;
    check_power_range(st, chain, instrument);

    CalibrationResult result;
    result.stages.push_back(st);
    return result;
}

CalibrationResult calibrate_2cps(const ChainModel& chain, const InstrumentModel& instrument,
                                 const CalibrationConfig& config) {
    chain.validate();
    instrument.validate();
    if (chain.size() != 2) fail(ErrorCode::InvalidParameter, "calibrate_2cps requires N = 2");

    CalibrationResult result;
    result.stages.resize(2);
    const std::map<int, double> no_pins;

    const auto resolve_sine_intercept = [](double intercept) {
        // sin is invariant under theta -> pi - theta, so the fitted ascending
        // line is determined up to a pi offset; the constraint picks the branch
        const double a = wrap_pm_pi(intercept);
        const double b = wrap_pm_pi(intercept - kPi);
        if (std::fabs(a) <= kHalfPi) return a;
        if (std::fabs(b) <= kHalfPi) return b;
        fail(ErrorCode::ConstraintViolation,
             "recovered initial phase violates |dtheta| < pi/2");
    };

    for (int pass = 0; pass < 2; ++pass) {
        const int outer = pass == 0 ? 2 : 1;
        const int inner = pass == 0 ? 1 : 2;
        const PairOutcome po = run_pair(chain, instrument, config, outer, inner, no_pins,
                                        Direction::Forward, UnwrapKind::Sine,
                                        config.keep_pass_traces);
        auto& inner_st = result.stages[static_cast<std::size_t>(inner - 1)];
        inner_st.stage = inner;
        inner_st.k = po.k_inner;
        inner_st.dtheta = resolve_sine_intercept(po.intercept);

        auto& outer_st = result.stages[static_cast<std::size_t>(outer - 1)];
        outer_st.stage = outer;
        outer_st.p_min = po.p_min;
        outer_st.c = po.c;
        outer_st.c2 = po.c2;
        outer_st.source_pass = pass == 0 ? SourcePass::RightToLeft : SourcePass::LeftToRight;
        if (config.keep_pass_traces) {
            result.pass_traces.push_back({outer_st.source_pass, Direction::Forward, outer, inner,
                                          po.coarse});
        }
    }

    for (auto& st : result.stages) {
        st.p_max = derive_p_for_target(st.k, st.dtheta, kHalfPi);
        st.theta_at_pmin = classify_pin(st.k, st.p_min, st.dtheta);
        check_power_range(st, chain, instrument);
    }
    return result;
}

CalibrationResult calibrate_even(const ChainModel& chain, const InstrumentModel& instrument,
                                 const CalibrationConfig& config) {
    chain.validate();
    instrument.validate();
    const int n = chain.size();
    if (n < 2 || n % 2 != 0) fail(ErrorCode::InvalidParameter, "calibrate_even requires even N");

    CalibrationResult result;
    result.stages.resize(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) result.stages[static_cast<std::size_t>(j - 1)].stage = j;

    // right-to-left pass, beams entering the near port: pins even stages,
    // slopes of odd stages
    std::map<int, double> pins;
    for (int j = n; j >= 2; j -= 2) {
        const PairOutcome po = run_pair(chain, instrument, config, j, j - 1, pins,
                                        Direction::Forward, UnwrapKind::Cosine,
                                        config.keep_pass_traces);
        auto& outer_st = result.stages[static_cast<std::size_t>(j - 1)];
        outer_st.p_min = po.p_min;
        outer_st.p_max = po.p_max;
        outer_st.c = po.c;
        outer_st.c2 = po.c2;
        outer_st.source_pass = SourcePass::RightToLeft;
        result.stages[static_cast<std::size_t>(j - 2)].k = po.k_inner;
        pins[j] = po.p_min;
        if (config.keep_pass_traces) {
            result.pass_traces.push_back({SourcePass::RightToLeft, Direction::Forward, j, j - 1,
                                          po.coarse});
        }
    }

    // left-to-right pass with the propagation reversed: pins odd stages,
    // slopes of even stages
    pins.clear();
    for (int j = 1; j + 1 <= n; j += 2) {
        const PairOutcome po = run_pair(chain, instrument, config, j, j + 1, pins,
                                        Direction::Reversed, UnwrapKind::Cosine,
                                        config.keep_pass_traces);
        auto& outer_st = result.stages[static_cast<std::size_t>(j - 1)];
        outer_st.p_min = po.p_min;
        outer_st.p_max = po.p_max;
        outer_st.c = po.c;
        outer_st.c2 = po.c2;
        outer_st.source_pass = SourcePass::LeftToRight;
        result.stages[static_cast<std::size_t>(j)].k = po.k_inner;
        pins[j] = po.p_min;
        if (config.keep_pass_traces) {
            result.pass_traces.push_back({SourcePass::LeftToRight, Direction::Reversed, j, j + 1,
                                          po.coarse});
        }
    }

    for (auto& st : result.stages) {
        if (!(st.k > 0.0)) fail(ErrorCode::FitFailure, "missing slope after both passes");
        const DthetaResolution res = resolve_dtheta(st.k, st.p_min, UnwrapConstraint::HalfPi);
        st.dtheta = res.dtheta;
        st.theta_at_pmin = res.theta_at_pmin;
        check_power_range(st, chain, instrument);
    }
    return result;
}

CalibrationResult calibrate_odd(const ChainModel& chain, const InstrumentModel& instrument,
                                const CalibrationConfig& config) {
    chain.validate();
    instrument.validate();
    const int n = chain.size();
    if (n < 3 || n % 2 == 0) {
        fail(ErrorCode::InvalidParameter, "calibrate_odd requires odd N >= 3");
    }

    CalibrationResult result;
    result.stages.resize(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) result.stages[static_cast<std::size_t>(j - 1)].stage = j;

    // slopes indexed by stage, one slot per propagation direction
    std::vector<double> k_fwd(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> k_rev(static_cast<std::size_t>(n) + 1, 0.0);
    // pins of even stages from the transform passes; a "shifted" pin was
    // recorded with the adjacent quadrature block adding pi/2 to the stage
    struct EvenPin {
        double p_min = 0.0;
        double p_max = 0.0;
        double c = 0.0;
        double c2 = 0.0;
        bool shifted = false;
        bool valid = false;
    };
    std::vector<EvenPin> even_pin(static_cast<std::size_t>(n) + 1);
    double p_max_last = 0.0;   // stage n quadrature power for the forward transform
    double p_max_first = 0.0;  // stage 1 quadrature power for the reversed transform

    const auto record_trace = [&](SourcePass pass, Direction dir, const PairOutcome& po) {
        if (config.keep_pass_traces) {
            result.pass_traces.push_back({pass, dir, po.outer, po.inner, po.coarse});
        }
    };
    const auto store_even_pin = [&](int stage, const PairOutcome& po, bool shifted) {
        auto& pin = even_pin[static_cast<std::size_t>(stage)];
        // prefer an unshifted pin when both passes provide one
        if (pin.valid && !pin.shifted) return;
        if (pin.valid && pin.shifted && shifted) return;
        pin = {po.p_min, po.p_max, po.c, po.c2, shifted, true};
    };

    // plain passes: pins of odd stages, slopes of even stages
    std::map<int, double> pins;
    for (int j = n; j >= 3; j -= 2) {
        const PairOutcome po = run_pair(chain, instrument, config, j, j - 1, pins,
                                        Direction::Forward, UnwrapKind::Cosine,
                                        config.keep_pass_traces);
        auto& st = result.stages[static_cast<std::size_t>(j - 1)];
        st.p_min = po.p_min;
        st.p_max = po.p_max;
        st.c = po.c;
        st.c2 = po.c2;
        st.source_pass = SourcePass::RightToLeft;
        k_fwd[static_cast<std::size_t>(j - 1)] = po.k_inner;
        if (j == n) p_max_last = po.p_max;
        pins[j] = po.p_min;
        record_trace(SourcePass::RightToLeft, Direction::Forward, po);
    }

    pins.clear();
    for (int j = 1; j <= n - 2; j += 2) {
        const PairOutcome po = run_pair(chain, instrument, config, j, j + 1, pins,
                                        Direction::Reversed, UnwrapKind::Cosine,
                                        config.keep_pass_traces);
        if (j == 1) {
            auto& st = result.stages[0];
            st.p_min = po.p_min;
            st.p_max = po.p_max;
            st.c = po.c;
            st.c2 = po.c2;
            st.source_pass = SourcePass::LeftToRight;
            p_max_first = po.p_max;
        }
        k_rev[static_cast<std::size_t>(j + 1)] = po.k_inner;
        pins[j] = po.p_min;
        record_trace(SourcePass::LeftToRight, Direction::Reversed, po);
    }

    // transform passes: one terminal stage parked at quadrature turns its
    // interferometer into an effective coupler, leaving an even effective
    // chain; pins of even stages, slopes of odd stages
    pins.clear();
    pins[n] = p_max_last;
    for (int j = n - 1; j >= 2; j -= 2) {
        const PairOutcome po = run_pair(chain, instrument, config, j, j - 1, pins,
                                        Direction::Forward, UnwrapKind::Cosine,
                                        config.keep_pass_traces);
        store_even_pin(j, po, /*shifted=*/j == n - 1);
        k_fwd[static_cast<std::size_t>(j - 1)] = po.k_inner;
        pins[j] = po.p_min;
        record_trace(SourcePass::Transform, Direction::Forward, po);
    }

    pins.clear();
    pins[1] = p_max_first;
    for (int j = 2; j <= n - 1; j += 2) {
        const PairOutcome po = run_pair(chain, instrument, config, j, j + 1, pins,
                                        Direction::Reversed, UnwrapKind::Cosine,
                                        config.keep_pass_traces);
        store_even_pin(j, po, /*shifted=*/j == 2);
        k_rev[static_cast<std::size_t>(j + 1)] = po.k_inner;
        pins[j] = po.p_min;
        record_trace(SourcePass::Transform, Direction::Reversed, po);
    }

    // merge slopes: interior stages were measured from both directions
    for (int j = 1; j <= n; ++j) {
        auto& st = result.stages[static_cast<std::size_t>(j - 1)];
        const double a = k_fwd[static_cast<std::size_t>(j)];
        const double b = k_rev[static_cast<std::size_t>(j)];
        if (a > 0.0 && b > 0.0) {
            st.k = merge_k(j, a, b);
        } else if (a > 0.0 || b > 0.0) {
            st.k = std::max(a, b);
        } else {
            fail(ErrorCode::FitFailure, "missing slope for stage " + std::to_string(j));
        }
    }

    for (int j = 1; j <= n; ++j) {
        auto& st = result.stages[static_cast<std::size_t>(j - 1)];
        if (j % 2 == 1) {
            const DthetaResolution res = resolve_dtheta(st.k, st.p_min, UnwrapConstraint::HalfPi);
            st.dtheta = res.dtheta;
            st.theta_at_pmin = res.theta_at_pmin;
        } else {
            const EvenPin& pin = even_pin[static_cast<std::size_t>(j)];
            if (!pin.valid) fail(ErrorCode::FitFailure, "missing pin for stage " + std::to_string(j));
            st.c = pin.c;
            st.c2 = pin.c2;
            st.source_pass = SourcePass::Transform;
            if (!pin.shifted) {
                st.p_min = pin.p_min;
                st.p_max = pin.p_max;
                const DthetaResolution res =
                    resolve_dtheta(st.k, st.p_min, UnwrapConstraint::HalfPi);
                st.dtheta = res.dtheta;
                st.theta_at_pmin = res.theta_at_pmin;
            } else {
                // undo the injected pi/2 before resolving, then report the
                // powers of the plain 0/pi and pi/2 conditions
                st.dtheta = resolve_shifted_pin(st.k, pin.p_min);
                std::tie(st.theta_at_pmin, st.p_min) = derive_pin(st.k, st.dtheta);
                st.p_max = derive_p_for_target(st.k, st.dtheta, kHalfPi);
            }
        }
        check_power_range(st, chain, instrument);
    }
    return result;
}

CalibrationResult calibrate(const ChainModel& chain, const InstrumentModel& instrument,
                            const CalibrationConfig& config) {
    chain.validate();
    switch (chain.size()) {
        case 1: return calibrate_1cps(chain, instrument, config);
        case 2: return calibrate_2cps(chain, instrument, config);
        default:
            return chain.size() % 2 == 0 ? calibrate_even(chain, instrument, config)
                                         : calibrate_odd(chain, instrument, config);
    }
}

double nc_probe_intensity(const ChainModel& chain, const InstrumentModel& instrument,
                          const CalibrationResult& pins, const std::map<int, double>& probe_shifts,
                          Direction direction, bool quantized) {
    std::map<int, double> powers;
    for (const auto& st : pins.stages) {
        double p = st.p_min;
        const auto it = probe_shifts.find(st.stage);
        if (it != probe_shifts.end()) p += it->second / st.k;
        if (quantized) {
            const auto& truth = chain.stages[static_cast<std::size_t>(st.stage - 1)];
            const double v = power_to_volts(p, truth.resistance);
            double vq = instrument.v_min +
                        std::round((v - instrument.v_min) / instrument.v_step) * instrument.v_step;
            vq = std::clamp(vq, instrument.v_min, instrument.v_max);
            p = volts_to_power(vq, truth.resistance);
        }
        powers[st.stage] = p;
    }
    double value = simulate_output(chain, powers, direction).lower;
    if (instrument.noise_sigma > 0.0) {
        std::uint64_t h = 0x9a1b3c5d7e9fa1b3ull;
        for (const auto& [stage, p] : powers) {
            h = detail::mix64(h ^ static_cast<std::uint64_t>(stage));
        }
        value += instrument.noise_sigma *
                 detail::keyed_normal(instrument.rng_seed,
                                      direction == Direction::Forward ? 2u : 3u, h, 0u);
        value = std::clamp(value, 0.0, 1.0);
    }
    return value;
}

namespace {

ThetaAtPmin classify_bands(double reading, std::span<const double> zero_bands,
                           std::span<const double> pi_bands) {
    double d_zero = std::numeric_limits<double>::infinity();
    double d_pi = std::numeric_limits<double>::infinity();
    for (double z : zero_bands) d_zero = std::min(d_zero, std::fabs(reading - z));
    for (double p : pi_bands) d_pi = std::min(d_pi, std::fabs(reading - p));
    if (std::min(d_zero, d_pi) > kBandWidth) {
        fail(ErrorCode::DiscriminationAmbiguous,
             "probe intensity " + std::to_string(reading) + " outside every acceptance band");
    }
    return d_zero <= d_pi ? ThetaAtPmin::Zero : ThetaAtPmin::Pi;
}

}  // namespace

ThetaAtPmin discriminate_even_nc(const ChainModel& chain, const InstrumentModel& instrument,
                                 int stage, const CalibrationResult& pins) {
    const int n = chain.size();
    if (n % 2 != 0 || n < 4) {
        fail(ErrorCode::InvalidParameter, "even-chain discrimination requires even N >= 4");
    }
    if (stage < 2 || stage > n - 1) {
        fail(ErrorCode::InvalidParameter, "only interior stages can be discriminated");
    }

    std::map<int, double> shifts{{stage - 1, kProbeShift}, {stage + 1, kProbeShift}};
    Direction dir;
    if (stage % 2 == 0) {
        dir = Direction::Forward;
        shifts[n] = kProbeShift;  // readout tilt on the far-end stage
    } else {
        dir = Direction::Reversed;
        shifts[1] = kProbeShift;
    }
    const double reading = nc_probe_intensity(chain, instrument, pins, shifts, dir);
    const double zero[] = {0.5};
    const double pi[] = {kEvenPiHigh, kEvenPiLow};
    return classify_bands(reading, zero, pi);
}

ThetaAtPmin discriminate_odd_nc(const ChainModel& chain, const InstrumentModel& instrument,
                                int stage, const CalibrationResult& pins) {
    const int n = chain.size();
    if (n % 2 == 0 || n < 3) {
        fail(ErrorCode::InvalidParameter, "odd-chain discrimination requires odd N >= 3");
    }
    if (stage < 2 || stage > n - 1) {
        fail(ErrorCode::InvalidParameter, "only interior stages can be discriminated");
    }

    if (stage % 2 == 0) {
        // The pinned chain is an effective interferometer already at an
        // intensity extremum; neighbour probes around a cross stage cancel and
        // leave the reading at the baseline, a direct stage shifts it by
        // 0.8*pi of relative phase.
        const double base = nc_probe_intensity(chain, instrument, pins, {}, Direction::Forward);
        const std::map<int, double> shifts{{stage - 1, kProbeShift}, {stage + 1, kProbeShift}};
        const double reading =
            nc_probe_intensity(chain, instrument, pins, shifts, Direction::Forward);
        const double zero[] = {base};
        const double pi[] = {kOddPiDirectHigh, kOddPiDirectLow};
        return classify_bands(reading, zero, pi);
    }

    // odd interior stage: add a quadrature offset on stage 1 so the chain
    // behaves like an even one, probe the even neighbours, read out via a
    // tilt on the last stage
    const std::map<int, double> shifts{{1, kHalfPi},
                                       {stage - 1, kProbeShift},
                                       {stage + 1, kProbeShift},
                                       {n, kProbeShift}};
    const double reading = nc_probe_intensity(chain, instrument, pins, shifts, Direction::Forward);
    const double zero[] = {kOddZeroQuadHigh, kOddZeroQuadLow};
    const double pi[] = {kOddPiQuadHigh, kOddPiQuadLow};
    return classify_bands(reading, zero, pi);
}

CalibrationResult calibrate_nonconstraint(const ChainModel& chain,
                                          const InstrumentModel& instrument,
                                          const CalibrationConfig& config) {
    chain.validate();
    const int n = chain.size();
    if (n < 3) {
        fail(ErrorCode::InvalidParameter, "non-constraint calibration requires N >= 3");
    }

    CalibrationResult result = calibrate(chain, instrument, config);
    result.mode = CalibrationMode::NonConstraint;
    for (int j = 2; j <= n - 1; ++j) {
        const ThetaAtPmin th = (n % 2 == 0)
                                   ? discriminate_even_nc(chain, instrument, j, result)
                                   : discriminate_odd_nc(chain, instrument, j, result);
        auto& st = result.stages[static_cast<std::size_t>(j - 1)];
        const DthetaResolution res =
            resolve_dtheta(st.k, st.p_min, UnwrapConstraint::None, th);
        st.dtheta = res.dtheta;
        st.theta_at_pmin = th;
    }
    // the appendices do not cover the terminal stages; their constraint-based
    // values are kept but flagged
    result.stages.front().theta_at_pmin = ThetaAtPmin::Unresolved;
    result.stages.back().theta_at_pmin = ThetaAtPmin::Unresolved;
    return result;
}

}  // namespace cpscal
