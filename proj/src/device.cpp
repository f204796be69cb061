#include "cpscal/device.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace cpscal {

namespace {

std::uint64_t double_bits(double x) {
    std::uint64_t b;
    std::memcpy(&b, &x, sizeof(b));
    return b;
}

std::uint64_t hash_fixed_powers(const std::vector<double>& powers, int skip_stage) {
    std::uint64_t h = 0x243f6a8885a308d3ull;
    for (std::size_t i = 0; i < powers.size(); ++i) {
        if (static_cast<int>(i) + 1 == skip_stage) continue;
        h = detail::mix64(h ^ (static_cast<std::uint64_t>(i) << 32) ^ double_bits(powers[i]));
    }
    return h;
}

std::vector<double> powers_as_vector(const ChainModel& chain,
                                     const std::map<int, double>& powers_mw) {
    std::vector<double> p(chain.stages.size(), 0.0);
    for (const auto& [stage, value] : powers_mw) {
        if (stage < 1 || stage > chain.size()) {
            fail(ErrorCode::InvalidParameter,
                 "power map references stage " + std::to_string(stage));
        }
        if (value < 0.0) fail(ErrorCode::InvalidParameter, "stage power must be >= 0");
        p[static_cast<std::size_t>(stage - 1)] = value;
    }
    return p;
}

/// Detector reading reduced to a single varying stage:
/// e_out = c * diag(e^{i theta}, 1) * w.
struct SingleStageView {
    TransferMatrix c;
    JonesVector w;
    bool normalize = false;

    OutputIntensities at_phase(double theta) const {
        const Complex u = w.up * std::polar(1.0, theta);
        const Complex e_upper = c.m11 * u + c.m12 * w.down;
        const Complex e_lower = c.m21 * u + c.m22 * w.down;
        double i_up = std::norm(e_upper);
        double i_lo = std::norm(e_lower);
        if (normalize) {
            const double total = i_up + i_lo;
            if (total > 0.0) {
                i_up /= total;
                i_lo /= total;
            }
        }
        return {i_up, i_lo};
    }
};

SingleStageView make_view(const ChainModel& chain, const std::vector<double>& powers,
                          int target, Direction direction) {
    // before = everything preceding the target stage, after = everything following.
    TransferMatrix before = mmi(chain.mmis[0]);
    for (int s = 1; s < target; ++s) {
        const auto& truth = chain.stages[static_cast<std::size_t>(s - 1)];
        before = phase_shifter(stage_phase(truth, powers[static_cast<std::size_t>(s - 1)],
                                           chain.ambient_temp_c)) *
                 before;
        before = mmi(chain.mmis[static_cast<std::size_t>(s)]) * before;
    }
    TransferMatrix after = mmi(chain.mmis[static_cast<std::size_t>(target)]);
    for (int s = target + 1; s <= chain.size(); ++s) {
        const auto& truth = chain.stages[static_cast<std::size_t>(s - 1)];
        after = phase_shifter(stage_phase(truth, powers[static_cast<std::size_t>(s - 1)],
                                          chain.ambient_temp_c)) *
                after;
        after = mmi(chain.mmis[static_cast<std::size_t>(s)]) * after;
    }

    SingleStageView view;
    view.normalize = !chain.lossless();
    const JonesVector input{Complex{0.0, 0.0}, Complex{1.0, 0.0}};
    if (direction == Direction::Forward) {
        view.c = after;
        view.w = before.apply(input);
    } else {
        view.c = before.transpose();
        view.w = after.transpose().apply(input);
    }
    return view;
}

}  // namespace

void TopsGroundTruth::validate() const {
    if (!(k > 0.0)) fail(ErrorCode::InvalidParameter, "stage slope k must be > 0");
    if (!(resistance > 0.0)) fail(ErrorCode::InvalidParameter, "heater resistance must be > 0");
}

ChainModel ChainModel::ideal(std::vector<TopsGroundTruth> stages, double ambient_temp_c) {
    ChainModel chain;
    chain.mmis.assign(stages.size() + 1, MmiParams{});
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].label == 0) stages[i].label = static_cast<int>(i + 1);
    }
    chain.stages = std::move(stages);
    chain.ambient_temp_c = ambient_temp_c;
    chain.validate();
    return chain;
}

bool ChainModel::lossless() const {
    return std::all_of(mmis.begin(), mmis.end(), [](const MmiParams& m) { return m.is_ideal(); });
}

void ChainModel::validate() const {
    if (stages.empty()) fail(ErrorCode::InvalidParameter, "chain needs at least one stage");
    if (mmis.size() != stages.size() + 1) {
        fail(ErrorCode::InvalidParameter, "chain needs stages+1 couplers, got " +
                                              std::to_string(mmis.size()) + " for " +
                                              std::to_string(stages.size()) + " stages");
    }
    for (const auto& s : stages) s.validate();
    for (const auto& m : mmis) m.validate();
}

void InstrumentModel::validate() const {
    if (!(v_min < v_max)) fail(ErrorCode::InvalidParameter, "instrument requires v_min < v_max");
    if (!(v_step > 0.0)) fail(ErrorCode::InvalidParameter, "instrument requires v_step > 0");
    if (noise_sigma < 0.0) fail(ErrorCode::InvalidParameter, "noise sigma must be >= 0");
}

int InstrumentModel::point_count() const {
    return static_cast<int>(std::floor((v_max - v_min) / v_step + 1e-9));
}

const char* to_string(Direction d) {
    return d == Direction::Forward ? "forward" : "reversed";
}

double volts_to_power(double volts, double resistance_kohm) {
    if (!(resistance_kohm > 0.0)) fail(ErrorCode::InvalidParameter, "resistance must be > 0");
    return volts * volts / resistance_kohm;  // V^2 / kOhm = mW
}

double power_to_volts(double power_mw, double resistance_kohm) {
    if (!(resistance_kohm > 0.0)) fail(ErrorCode::InvalidParameter, "resistance must be > 0");
    if (power_mw < 0.0) fail(ErrorCode::InvalidParameter, "power must be >= 0");
    return std::sqrt(power_mw * resistance_kohm);
}

double stage_phase(const TopsGroundTruth& truth, double power_mw, double ambient_temp_c) {
    return truth.k * power_mw + truth.dtheta + truth.dtheta_temp_coeff * (ambient_temp_c - 20.0);
}

TransferMatrix total_matrix(const ChainModel& chain, const std::map<int, double>& powers_mw,
                            Direction direction) {
    chain.validate();
    const std::vector<double> powers = powers_as_vector(chain, powers_mw);
    TransferMatrix m = mmi(chain.mmis[0]);
    for (int s = 1; s <= chain.size(); ++s) {
        const auto& truth = chain.stages[static_cast<std::size_t>(s - 1)];
        m = phase_shifter(stage_phase(truth, powers[static_cast<std::size_t>(s - 1)],
                                      chain.ambient_temp_c)) *
            m;
        m = mmi(chain.mmis[static_cast<std::size_t>(s)]) * m;
    }
    return direction == Direction::Forward ? m : m.transpose();
}

OutputIntensities simulate_output(const ChainModel& chain,
                                  const std::map<int, double>& powers_mw, Direction direction) {
    const TransferMatrix m = total_matrix(chain, powers_mw, direction);
    const JonesVector out = m.apply({Complex{0.0, 0.0}, Complex{1.0, 0.0}});
    auto [i_up, i_lo] = intensities(out);
    if (!chain.lossless()) {
        const double total = i_up + i_lo;
        if (total > 0.0) {
            i_up /= total;
            i_lo /= total;
        }
    }
    return {i_up, i_lo};
}

namespace detail {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double keyed_normal(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2, std::uint64_t k3) {
    std::uint64_t h = mix64(seed ^ 0x8c67ee1a3bdcc8f1ull);
    h = mix64(h ^ k1);
    h = mix64(h ^ k2);
    h = mix64(h ^ k3);
    const std::uint64_t a = mix64(h);
    const std::uint64_t b = mix64(h ^ 0xda3e39cb94b95bdbull);
    // map to (0,1); never exactly 0
    const double u1 = (static_cast<double>(a >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    const double u2 = (static_cast<double>(b >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace detail

ScanTrace scan_stage(const ChainModel& chain, const InstrumentModel& instrument, int target,
                     const std::map<int, double>& fixed_powers_mw, Direction direction) {
    chain.validate();
    instrument.validate();
    if (target < 1 || target > chain.size()) {
        fail(ErrorCode::InvalidParameter, "scan target stage out of range");
    }

    const std::vector<double> powers = powers_as_vector(chain, fixed_powers_mw);
    const SingleStageView view = make_view(chain, powers, target, direction);
    const auto& truth = chain.stages[static_cast<std::size_t>(target - 1)];
    const std::uint64_t fixed_hash = hash_fixed_powers(powers, target);
    const std::uint64_t dir_bit = direction == Direction::Forward ? 0u : 1u;

    ScanTrace trace;
    trace.stage = target;
    trace.direction = direction;
    trace.fixed_powers_mw = fixed_powers_mw;
    const int n = instrument.point_count();
    trace.applied_power_mw.reserve(static_cast<std::size_t>(n));
    trace.intensity.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double p = volts_to_power(instrument.voltage_at(i), truth.resistance);
        double value = view.at_phase(stage_phase(truth, p, chain.ambient_temp_c)).lower;
        if (instrument.noise_sigma > 0.0) {
            value += instrument.noise_sigma *
                     detail::keyed_normal(instrument.rng_seed,
                                          (static_cast<std::uint64_t>(target) << 1) | dir_bit,
                                          fixed_hash, static_cast<std::uint64_t>(i));
            value = std::clamp(value, 0.0, 1.0);
        }
        trace.applied_power_mw.push_back(p);
        trace.intensity.push_back(value);
    }
    return trace;
}

std::vector<PairwisePoint> pairwise_trace(const ChainModel& chain,
                                          const InstrumentModel& outer_instrument,
                                          const InstrumentModel& inner_instrument, int outer,
                                          int inner, const std::map<int, double>& fixed_powers_mw,
                                          Direction direction) {
    chain.validate();
    outer_instrument.validate();
    inner_instrument.validate();
    if (outer == inner) fail(ErrorCode::InvalidParameter, "pairwise scan requires outer != inner");
    if (outer < 1 || outer > chain.size() || inner < 1 || inner > chain.size()) {
        fail(ErrorCode::InvalidParameter, "pairwise stage out of range");
    }

    std::vector<double> powers = powers_as_vector(chain, fixed_powers_mw);
    const auto& outer_truth = chain.stages[static_cast<std::size_t>(outer - 1)];
    const auto& inner_truth = chain.stages[static_cast<std::size_t>(inner - 1)];
    const std::uint64_t dir_bit = direction == Direction::Forward ? 0u : 1u;

    const int n_outer = outer_instrument.point_count();
    const int n_inner = inner_instrument.point_count();
    std::vector<PairwisePoint> trace;
    trace.reserve(static_cast<std::size_t>(n_outer));

    for (int o = 0; o < n_outer; ++o) {
        const double p_outer =
            volts_to_power(outer_instrument.voltage_at(o), outer_truth.resistance);
        powers[static_cast<std::size_t>(outer - 1)] = p_outer;
        const SingleStageView view = make_view(chain, powers, inner, direction);
        const std::uint64_t fixed_hash = hash_fixed_powers(powers, inner);

        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (int i = 0; i < n_inner; ++i) {
            const double p_inner =
                volts_to_power(inner_instrument.voltage_at(i), inner_truth.resistance);
            double value =
                view.at_phase(stage_phase(inner_truth, p_inner, chain.ambient_temp_c)).lower;
            if (inner_instrument.noise_sigma > 0.0) {
                value += inner_instrument.noise_sigma *
                         detail::keyed_normal(inner_instrument.rng_seed,
                                              (static_cast<std::uint64_t>(inner) << 1) | dir_bit,
                                              fixed_hash, static_cast<std::uint64_t>(i));
                value = std::clamp(value, 0.0, 1.0);
            }
            lo = std::min(lo, value);
            hi = std::max(hi, value);
            sum += value;
        }
        trace.push_back({p_outer, hi - lo, sum / n_inner});
    }
    return trace;
}

std::vector<PairwisePoint> pairwise_trace(const ChainModel& chain,
                                          const InstrumentModel& instrument, int outer, int inner,
                                          const std::map<int, double>& fixed_powers_mw,
                                          Direction direction) {
    return pairwise_trace(chain, instrument, instrument, outer, inner, fixed_powers_mw, direction);
}

}  // namespace cpscal
