#pragma once

#include <cstdint>
#include <vector>

#include "cpscal/calibration.hpp"
#include "cpscal/device.hpp"

namespace cpscal::testsupport {

/// Hidden-truth parameters of the six-stage reference device used across the
/// suites (slopes in rad/mW, initial phases in rad, heaters 1.75 kOhm).
inline std::vector<TopsGroundTruth> reference_stages() {
    return {
        {0.1427, 0.4863, 1.75, 0.0, 1}, {0.1459, -0.2177, 1.75, 0.0, 2},
        {0.1515, 0.106, 1.75, 0.0, 3},  {0.1478, 0.6925, 1.75, 0.0, 4},
        {0.1517, 1.1762, 1.75, 0.0, 5}, {0.1470, 0.7244, 1.75, 0.0, 6},
    };
}

inline ChainModel reference_chain() { return ChainModel::ideal(reference_stages()); }

/// Reference per-stage powers at the first theta in {0, pi} condition.
inline std::vector<double> reference_p_min() {
    return {18.6075, 1.4921, 20.0369, 16.5703, 12.9558, 16.4435};
}

/// Exact pinned-state calibration built from the hidden truth (no
/// measurement error); used to probe protocol constants in isolation.
inline CalibrationResult pins_from_truth(const ChainModel& chain) {
    CalibrationResult r;
    for (const auto& t : chain.stages) {
        StageCalibration st;
        st.stage = t.label;
        st.k = t.k;
        st.dtheta = t.dtheta;
        const double target = t.dtheta <= 0.0 ? 0.0 : kPi;
        st.p_min = (target - t.dtheta) / t.k;
        st.p_max = (kPi / 2.0 - t.dtheta) / t.k;
        st.theta_at_pmin = t.dtheta <= 0.0 ? ThetaAtPmin::Zero : ThetaAtPmin::Pi;
        r.stages.push_back(st);
    }
    return r;
}

inline double uniform01(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) / 9007199254740992.0;
}

/// Random chain with slopes in [0.12, 0.17] rad/mW and initial phases one
/// DAC phase step inside (-pi/2, pi/2); see the margin note in the docs.
inline ChainModel random_chain(int n, std::uint64_t& state) {
    std::vector<TopsGroundTruth> stages;
    for (int j = 1; j <= n; ++j) {
        TopsGroundTruth t;
        t.k = 0.12 + 0.05 * uniform01(state);
        t.dtheta = (kPi / 2.0 - 0.02) * (2.0 * uniform01(state) - 1.0);
        t.resistance = 1.75;
        t.label = j;
        stages.push_back(t);
    }
    return ChainModel::ideal(std::move(stages));
}

}  // namespace cpscal::testsupport
