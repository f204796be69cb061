#pragma once

#include <complex>
#include <span>
#include <utility>

#include "cpscal/errors.hpp"

namespace cpscal {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Two-component complex field amplitude (upper/lower waveguide).
struct JonesVector {
    Complex up{0.0, 0.0};
    Complex down{0.0, 0.0};

    double norm2() const { return std::norm(up) + std::norm(down); }
};

/// 2x2 complex transfer operator acting on JonesVector columns from the left.
struct TransferMatrix {
    Complex m11{1.0, 0.0}, m12{0.0, 0.0};
    Complex m21{0.0, 0.0}, m22{1.0, 0.0};

    static TransferMatrix identity() { return {}; }

    JonesVector apply(const JonesVector& v) const {
        return {m11 * v.up + m12 * v.down, m21 * v.up + m22 * v.down};
    }

    TransferMatrix operator*(const TransferMatrix& rhs) const {
        return {m11 * rhs.m11 + m12 * rhs.m21, m11 * rhs.m12 + m12 * rhs.m22,
                m21 * rhs.m11 + m22 * rhs.m21, m21 * rhs.m12 + m22 * rhs.m22};
    }

    TransferMatrix transpose() const { return {m11, m21, m12, m22}; }

    TransferMatrix dagger() const {
        return {std::conj(m11), std::conj(m21), std::conj(m12), std::conj(m22)};
    }

    TransferMatrix scaled(Complex s) const { return {s * m11, s * m12, s * m21, s * m22}; }
};

/// 2x2 coupler model: splitting ratio eta plus per-branch attenuation (nepers).
/// Ideal 50/50 coupler is (0.5, 0, 0).
struct MmiParams {
    double eta = 0.5;
    double tau = 0.0;
    double kappa = 0.0;

    bool is_ideal() const { return eta == 0.5 && tau == 0.0 && kappa == 0.0; }
    void validate() const;
};

TransferMatrix mmi(const MmiParams& params);
TransferMatrix phase_shifter(double theta);
TransferMatrix mzi(double theta);

enum class EquivalentForm { Cross, Direct, QuadPlus, QuadMinus, Generic };

/// Classify an MZI phase against its special-angle equivalent structures,
/// modulo 2*pi within tol.
EquivalentForm classify_equivalent(double theta, double tol);

/// Right-to-left product of stages given in physical propagation order
/// (first optical element applied first).
TransferMatrix compose(std::span<const TransferMatrix> stages);

/// (|up|^2, |down|^2)
std::pair<double, double> intensities(const JonesVector& v);

/// Wrap into [0, 2*pi).
double wrap_two_pi(double theta);
/// Wrap into (-pi, pi].
double wrap_pm_pi(double theta);

}  // namespace cpscal
