#include "cpscal/jones.hpp"

#include <cmath>

namespace cpscal {

void MmiParams::validate() const {
    if (!(eta > 0.0) || !(eta < 1.0)) {
        fail(ErrorCode::InvalidParameter, "mmi eta must lie in (0,1)");
    }
    if (tau < 0.0 || kappa < 0.0) {
        fail(ErrorCode::InvalidParameter, "mmi attenuation constants must be >= 0");
    }
}

TransferMatrix mmi(const MmiParams& params) {
    params.validate();
    const double a = std::exp(-params.tau / 2.0);
    const double b = std::exp(-params.kappa / 2.0);
    const double se = std::sqrt(params.eta);
    const double sc = std::sqrt(1.0 - params.eta);
    const Complex i{0.0, 1.0};
    return {a * se, i * a * sc, i * b * sc, b * se};
}

TransferMatrix phase_shifter(double theta) {
    return {std::polar(1.0, theta), 0.0, 0.0, 1.0};
}

TransferMatrix mzi(double theta) {
    const Complex e = std::polar(1.0, theta);
    const Complex i{0.0, 1.0};
    return {(-1.0 + e) / 2.0, i * (1.0 + e) / 2.0, i * (1.0 + e) / 2.0, (1.0 - e) / 2.0};
}

EquivalentForm classify_equivalent(double theta, double tol) {
    if (!(tol > 0.0)) fail(ErrorCode::InvalidParameter, "classification tolerance must be > 0");
    const auto near = [&](double target) {
        double d = std::fabs(wrap_pm_pi(theta - target));
        return d <= tol;
    };
    if (near(0.0)) return EquivalentForm::Cross;
    if (near(kPi)) return EquivalentForm::Direct;
    if (near(kPi / 2.0)) return EquivalentForm::QuadPlus;
    if (near(3.0 * kPi / 2.0)) return EquivalentForm::QuadMinus;
    return EquivalentForm::Generic;
}

TransferMatrix compose(std::span<const TransferMatrix> stages) {
    if (stages.empty()) fail(ErrorCode::InvalidParameter, "compose requires a non-empty stage list");
    TransferMatrix m = stages.front();
    for (std::size_t i = 1; i < stages.size(); ++i) {
        m = stages[i] * m;
    }
    return m;
}

std::pair<double, double> intensities(const JonesVector& v) {
    return {std::norm(v.up), std::norm(v.down)};
}

double wrap_two_pi(double theta) {
    double t = std::fmod(theta, 2.0 * kPi);
    if (t < 0.0) t += 2.0 * kPi;
    return t;
}

double wrap_pm_pi(double theta) {
    double t = wrap_two_pi(theta);
    if (t > kPi) t -= 2.0 * kPi;
    return t;
}

}  // namespace cpscal
