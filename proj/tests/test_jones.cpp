#include <cmath>
#include <complex>
#include <vector>

#include "cpscal/jones.hpp"
#include "doctest.h"

using namespace cpscal;

namespace {

double frob_norm(const TransferMatrix& m) {
    return std::sqrt(std::norm(m.m11) + std::norm(m.m12) + std::norm(m.m21) + std::norm(m.m22));
}

TransferMatrix diff(const TransferMatrix& a, const TransferMatrix& b) {
    return {a.m11 - b.m11, a.m12 - b.m12, a.m21 - b.m21, a.m22 - b.m22};
}

// deterministic pseudo-random angles for property sweeps
double lcg_angle(std::uint64_t& state) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    return (static_cast<double>(state >> 11) / 9007199254740992.0) * 2.0 * kPi;
}

}  // namespace

TEST_CASE("ideal coupler splits and phases") {
    const TransferMatrix m = mmi(MmiParams{});
    const JonesVector out = m.apply({0.0, 1.0});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(out.up - Complex{0.0, inv_sqrt2}) < 1e-15);
    CHECK(std::abs(out.down - Complex{inv_sqrt2, 0.0}) < 1e-15);

    // asymmetric split: intensities (1-eta, eta) for input on the lower port
    const TransferMatrix skew = mmi({0.3, 0.0, 0.0});
    const auto [i_up, i_down] = intensities(skew.apply({0.0, 1.0}));
    CHECK(i_up == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(i_down == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("coupler parameter domain") {
    CHECK_THROWS_AS((void)mmi({0.0, 0.0, 0.0}), Error);
    CHECK_THROWS_AS((void)mmi({1.0, 0.0, 0.0}), Error);
    CHECK_THROWS_AS((void)mmi({0.5, -0.1, 0.0}), Error);
}

TEST_CASE("phase shifter basics") {
    CHECK(std::abs(phase_shifter(0.0).m11 - Complex{1.0, 0.0}) < 1e-15);
    CHECK(std::abs(phase_shifter(kPi).m11 - Complex{-1.0, 0.0}) < 1e-15);
    CHECK(std::abs(phase_shifter(kPi / 2).m11 - Complex{0.0, 1.0}) < 1e-15);
    CHECK(std::abs(phase_shifter(1.234).m22 - Complex{1.0, 0.0}) < 1e-15);
}

TEST_CASE("interferometer closed form and fringe") {
    // lower-port input gives I4 = (1 - cos theta)/2
    for (double theta : {0.0, 0.3, kPi / 3, kPi / 2, 2.0, kPi, 5.0}) {
        const auto [i3, i4] = intensities(mzi(theta).apply({0.0, 1.0}));
        CHECK(i4 == doctest::Approx((1.0 - std::cos(theta)) / 2.0).epsilon(1e-12));
        CHECK(i3 + i4 == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto [i3, i4] = intensities(mzi(kPi / 3).apply({0.0, 1.0}));
    CHECK(i4 == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("special-angle equivalent structures") {
    // theta = 0: swap up to a global i
    const TransferMatrix cross = mzi(0.0);
    CHECK(std::abs(cross.m12 - Complex{0.0, 1.0}) < 1e-12);
    CHECK(std::abs(cross.m21 - Complex{0.0, 1.0}) < 1e-12);
    CHECK(std::abs(cross.m11) < 1e-12);
    CHECK(std::abs(cross.m22) < 1e-12);

    // theta = pi: diag(-1, 1)
    const TransferMatrix direct = mzi(kPi);
    CHECK(std::abs(direct.m11 - Complex{-1.0, 0.0}) < 1e-12);
    CHECK(std::abs(direct.m22 - Complex{1.0, 0.0}) < 1e-12);
    CHECK(std::abs(direct.m12) < 1e-12);

    // theta = pi/2: PS(pi/2) * MMI * PS(pi/2) * e^{i 7 pi / 4}
    const TransferMatrix quad_plus =
        (phase_shifter(kPi / 2) * mmi(MmiParams{}) * phase_shifter(kPi / 2))
            .scaled(std::polar(1.0, 7.0 * kPi / 4.0));
    CHECK(frob_norm(diff(mzi(kPi / 2), quad_plus)) < 1e-12);

    // theta = 3 pi/2: PS(3 pi/2) * MMI * PS(3 pi/2) * e^{i pi / 4}
    const TransferMatrix quad_minus =
        (phase_shifter(3 * kPi / 2) * mmi(MmiParams{}) * phase_shifter(3 * kPi / 2))
            .scaled(std::polar(1.0, kPi / 4.0));
    CHECK(frob_norm(diff(mzi(3 * kPi / 2), quad_minus)) < 1e-12);
}

TEST_CASE("equivalent-form classification") {
    CHECK(classify_equivalent(0.0, 1e-6) == EquivalentForm::Cross);
    CHECK(classify_equivalent(2.0 * kPi, 1e-6) == EquivalentForm::Cross);
    CHECK(classify_equivalent(kPi, 1e-6) == EquivalentForm::Direct);
    CHECK(classify_equivalent(-kPi, 1e-6) == EquivalentForm::Direct);
    CHECK(classify_equivalent(kPi / 2, 1e-6) == EquivalentForm::QuadPlus);
    CHECK(classify_equivalent(3.0 * kPi / 2, 1e-6) == EquivalentForm::QuadMinus);
    CHECK(classify_equivalent(-kPi / 2, 1e-6) == EquivalentForm::QuadMinus);
    CHECK(classify_equivalent(0.3, 1e-6) == EquivalentForm::Generic);
    CHECK_THROWS_AS((void)classify_equivalent(0.0, 0.0), Error);
}

TEST_CASE("compose order and errors") {
    CHECK_THROWS_AS((void)compose({}), Error);
    const std::vector<TransferMatrix> id{TransferMatrix::identity()};
    CHECK(frob_norm(diff(compose(id), TransferMatrix::identity())) < 1e-15);

    // coupler - shifter - coupler equals the closed-form interferometer
    for (double theta : {0.1, 1.0, 2.5}) {
        const std::vector<TransferMatrix> stages{mmi(MmiParams{}), phase_shifter(theta),
                                                 mmi(MmiParams{})};
        CHECK(frob_norm(diff(compose(stages), mzi(theta))) < 1e-12);
    }

    // two-stage chain: I4 = (1 + sin t1 sin t2)/2 for lower-port input
    for (double t1 : {0.2, 1.1, 2.9}) {
        for (double t2 : {0.0, 0.7, kPi / 2}) {
            const std::vector<TransferMatrix> stages{mmi(MmiParams{}), phase_shifter(t1),
                                                     mmi(MmiParams{}), phase_shifter(t2),
                                                     mmi(MmiParams{})};
            const auto [i3, i4] = intensities(compose(stages).apply({0.0, 1.0}));
            CHECK(i4 ==
                  doctest::Approx((1.0 + std::sin(t1) * std::sin(t2)) / 2.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("unitarity and energy conservation properties") {
    std::uint64_t rng = 42;
    for (int trial = 0; trial < 200; ++trial) {
        const double theta = lcg_angle(rng);
        const TransferMatrix m = mzi(theta);
        const TransferMatrix mm = m * m.dagger();
        CHECK(frob_norm(diff(mm, TransferMatrix::identity())) < 1e-12);
    }
    // chains of random length conserve energy for unit-norm input
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TransferMatrix> stages{mmi(MmiParams{})};
        const int n = 1 + trial % 8;
        for (int s = 0; s < n; ++s) {
            stages.push_back(phase_shifter(lcg_angle(rng)));
            stages.push_back(mmi(MmiParams{}));
        }
        const JonesVector out = compose(stages).apply({0.0, 1.0});
        CHECK(out.norm2() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("imbalanced coupler matrix") {
    const MmiParams p{0.4, 0.02, 0.05};
    const TransferMatrix m = mmi(p);
    CHECK(std::abs(m.m11 - std::exp(-0.01) * std::sqrt(0.4)) < 1e-15);
    CHECK(std::abs(m.m12 - Complex{0.0, 1.0} * std::exp(-0.01) * std::sqrt(0.6)) < 1e-15);
    CHECK(std::abs(m.m21 - Complex{0.0, 1.0} * std::exp(-0.025) * std::sqrt(0.6)) < 1e-15);
    CHECK(std::abs(m.m22 - std::exp(-0.025) * std::sqrt(0.4)) < 1e-15);

    // both singular values of a lossy coupler stay at or below one
    const TransferMatrix g = m.dagger() * m;
    const double tr = g.m11.real() + g.m22.real();
    const double det = (g.m11 * g.m22 - g.m12 * g.m21).real();
    const double s_max = (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det))) / 2.0;
    CHECK(s_max <= 1.0 + 1e-12);
}

TEST_CASE("wrap helpers") {
    CHECK(wrap_two_pi(-0.1) == doctest::Approx(2.0 * kPi - 0.1));
    CHECK(wrap_two_pi(2.0 * kPi + 0.1) == doctest::Approx(0.1));
    CHECK(wrap_pm_pi(kPi + 0.1) == doctest::Approx(-kPi + 0.1));
    CHECK(wrap_pm_pi(kPi) == doctest::Approx(kPi));
}
