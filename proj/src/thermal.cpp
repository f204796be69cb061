#include "cpscal/thermal.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpscal/jones.hpp"

namespace cpscal {

namespace {

constexpr double kUm = 1e-6;  // meters per micrometer

// Axis builder: uniform fine spacing between anchor pairs inside the focus
// interval, geometric growth toward the domain edges. Returns cell-face
// positions including both ends.
std::vector<double> build_axis(const std::vector<double>& anchors, double focus_lo,
                               double focus_hi, double fine, double coarse) {
    std::vector<double> faces;
    for (std::size_t a = 0; a + 1 < anchors.size(); ++a) {
        const double lo = anchors[a];
        const double hi = anchors[a + 1];
        faces.push_back(lo);
        if (hi - lo < 1e-12) continue;
        if (lo >= focus_lo - 1e-12 && hi <= focus_hi + 1e-12) {
            const int n = std::max(1, static_cast<int>(std::round((hi - lo) / fine)));
            for (int i = 1; i < n; ++i) faces.push_back(lo + (hi - lo) * i / n);
        } else if (hi <= focus_lo + 1e-12) {
            // grade outward from the focus edge, then reverse into order
            std::vector<double> tmp;
            double p = hi;
            double h = fine;
            while (p - h > lo + 1e-12) {
                p -= h;
                tmp.push_back(p);
                h = std::min(coarse, h * 1.45);
            }
            for (auto it = tmp.rbegin(); it != tmp.rend(); ++it) faces.push_back(*it);
        } else {
            double pos = lo;
            double h = fine;
            while (pos + h < hi - 1e-12) {
                pos += h;
                faces.push_back(pos);
                h = std::min(coarse, h * 1.45);
            }
        }
    }
    faces.push_back(anchors.back());
    std::sort(faces.begin(), faces.end());
    faces.erase(std::unique(faces.begin(), faces.end(),
                            [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
                faces.end());
    return faces;
}

struct Grid {
    std::vector<double> xc, yc;  // cell centers, um
    std::vector<double> dx, dy;  // cell sizes, um
    int nx = 0, ny = 0;
};

Grid build_grid(const CrossSection& cs) {
    const double wg_half = cs.wg_width_um / 2.0;
    const double heater_half = cs.heater_width_um / 2.0;
    const double w = cs.half_width_um;
    const double focus_x = std::min(w, std::max(3.0, heater_half + 1.0));

    std::vector<double> x_anchors{-w, -focus_x, -heater_half, -wg_half, 0.0,
                                  wg_half, heater_half, focus_x, w};
    std::sort(x_anchors.begin(), x_anchors.end());
    x_anchors.erase(std::unique(x_anchors.begin(), x_anchors.end()), x_anchors.end());
    const auto x_faces = build_axis(x_anchors, -focus_x, focus_x, cs.fine_spacing_um,
                                    cs.coarse_spacing_um);

    const double y_bot = cs.domain_bottom_um();
    const double y_top = cs.domain_top_um();
    const double focus_lo = -0.5;
    const double focus_hi = std::min(y_top, cs.heater_top_um() + 0.4);
    std::vector<double> y_anchors{y_bot,
                                  -cs.box_thickness_um,
                                  focus_lo,
                                  0.0,
                                  cs.wg_height_um,
                                  cs.heater_bottom_um(),
                                  cs.heater_top_um(),
                                  focus_hi,
                                  y_top};
    std::sort(y_anchors.begin(), y_anchors.end());
    y_anchors.erase(std::unique(y_anchors.begin(), y_anchors.end(),
                                [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
                    y_anchors.end());
    const auto y_faces = build_axis(y_anchors, focus_lo, focus_hi, cs.fine_spacing_um,
                                    cs.coarse_spacing_um);

    Grid g;
    g.nx = static_cast<int>(x_faces.size()) - 1;
    g.ny = static_cast<int>(y_faces.size()) - 1;
    for (int i = 0; i < g.nx; ++i) {
        g.xc.push_back((x_faces[i] + x_faces[i + 1]) / 2.0);
        g.dx.push_back(x_faces[i + 1] - x_faces[i]);
    }
    for (int j = 0; j < g.ny; ++j) {
        g.yc.push_back((y_faces[j] + y_faces[j + 1]) / 2.0);
        g.dy.push_back(y_faces[j + 1] - y_faces[j]);
    }
    return g;
}

double conductivity_at(const CrossSection& cs, double x, double y) {
    if (y < -cs.box_thickness_um) return cs.si.k_hc;  // substrate
    if (y < 0.0) return cs.sio2.k_hc;                 // buried oxide
    if (y < cs.wg_height_um && std::fabs(x) <= cs.wg_width_um / 2.0) return cs.si.k_hc;
    if (y >= cs.heater_bottom_um() && y < cs.heater_top_um() &&
        std::fabs(x) <= cs.heater_width_um / 2.0) {
        return cs.tin.k_hc;
    }
    return cs.sio2.k_hc;  // cladding
}

bool in_heater(const CrossSection& cs, double x, double y) {
    return y >= cs.heater_bottom_um() && y < cs.heater_top_um() &&
           std::fabs(x) <= cs.heater_width_um / 2.0;
}

}  // namespace

void Material::validate() const {
    if (!(rho > 0.0) || !(cp > 0.0) || !(k_hc > 0.0)) {
        fail(ErrorCode::InvalidParameter, "material parameters must be positive");
    }
}

void CrossSection::validate() const {
    si.validate();
    sio2.validate();
    tin.validate();
    if (!(half_width_um > heater_width_um) || !(substrate_depth_um > 0.0) ||
        !(box_thickness_um > 0.0) || !(clad_thickness_um > 0.0)) {
        fail(ErrorCode::InvalidParameter, "cross-section dimensions invalid");
    }
    if (heater_top_um() > clad_thickness_um + 1e-12) {
        fail(ErrorCode::InvalidParameter, "heater does not fit inside the cladding");
    }
    if (!(fine_spacing_um > 0.0) || !(coarse_spacing_um >= fine_spacing_um)) {
        fail(ErrorCode::InvalidParameter, "grid spacing invalid");
    }
}

double TemperatureField::at(double x, double y) const {
    const auto clamp_index = [](const std::vector<double>& c, double v) {
        // bracketing cell-center pair for linear interpolation
        if (v <= c.front()) return std::size_t{0};
        if (v >= c.back()) return c.size() - 2;
        const auto it = std::upper_bound(c.begin(), c.end(), v);
        return static_cast<std::size_t>(std::distance(c.begin(), it)) - 1;
    };
    const std::size_t i = clamp_index(x_um, x);
    const std::size_t j = clamp_index(y_um, y);
    const double tx = std::clamp((x - x_um[i]) / (x_um[i + 1] - x_um[i]), 0.0, 1.0);
    const double ty = std::clamp((y - y_um[j]) / (y_um[j + 1] - y_um[j]), 0.0, 1.0);
    const std::size_t nx = x_um.size();
    const double t00 = t_k[j * nx + i];
    const double t10 = t_k[j * nx + i + 1];
    const double t01 = t_k[(j + 1) * nx + i];
    const double t11 = t_k[(j + 1) * nx + i + 1];
    return (1 - ty) * ((1 - tx) * t00 + tx * t10) + ty * ((1 - tx) * t01 + tx * t11);
}

TemperatureField solve_steady(const CrossSection& cs, double power_mw) {
    cs.validate();
    if (power_mw < 0.0) fail(ErrorCode::InvalidParameter, "heating power must be >= 0");

    const Grid g = build_grid(cs);
    const int nx = g.nx, ny = g.ny;
    const int n = nx * ny;
    const auto idx = [nx](int i, int j) { return j * nx + i; };

    std::vector<double> kcell(static_cast<std::size_t>(n));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            kcell[static_cast<std::size_t>(idx(i, j))] = conductivity_at(cs, g.xc[i], g.yc[j]);
        }
    }

    // control-volume balance per unit length; conductances in W/(m K)
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * n));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    std::vector<double> diag(static_cast<std::size_t>(n), 0.0);

    const double q_volumetric =
        power_mw * 1e-3 /
        (cs.heater_length_um * kUm * cs.heater_height_um * kUm * cs.heater_width_um * kUm);

    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int c = idx(i, j);
            const double kc = kcell[static_cast<std::size_t>(c)];
            const double dxc = g.dx[i] * kUm;
            const double dyc = g.dy[j] * kUm;

            if (i + 1 < nx) {
                const double kn = kcell[static_cast<std::size_t>(idx(i + 1, j))];
                const double dxn = g.dx[i + 1] * kUm;
                const double gface = dyc * 2.0 / (dxc / kc + dxn / kn);
                trip.emplace_back(c, idx(i + 1, j), -gface);
                trip.emplace_back(idx(i + 1, j), c, -gface);
                diag[static_cast<std::size_t>(c)] += gface;
                diag[static_cast<std::size_t>(idx(i + 1, j))] += gface;
            }
            if (j + 1 < ny) {
                const double kn = kcell[static_cast<std::size_t>(idx(i, j + 1))];
                const double dyn_ = g.dy[j + 1] * kUm;
                const double gface = dxc * 2.0 / (dyc / kc + dyn_ / kn);
                trip.emplace_back(c, idx(i, j + 1), -gface);
                trip.emplace_back(idx(i, j + 1), c, -gface);
                diag[static_cast<std::size_t>(c)] += gface;
                diag[static_cast<std::size_t>(idx(i, j + 1))] += gface;
            }
            if (j == 0) {  // fixed temperature below the substrate slice
                const double gface = dxc * kc / (dyc / 2.0);
                diag[static_cast<std::size_t>(c)] += gface;
                rhs[c] += gface * cs.boundary_temp_k;
            }
            if (j == ny - 1) {  // convection to ambient at the cladding top
                const double gface = dxc * cs.h_air;
                diag[static_cast<std::size_t>(c)] += gface;
                rhs[c] += gface * cs.boundary_temp_k;
            }
            if (in_heater(cs, g.xc[i], g.yc[j])) {
                rhs[c] += q_volumetric * dxc * dyc;
            }
        }
    }
    for (int c = 0; c < n; ++c) trip.emplace_back(c, c, diag[static_cast<std::size_t>(c)]);

    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    solver.compute(a);
    if (solver.info() != Eigen::Success) {
        fail(ErrorCode::SolverFailure, "thermal matrix factorization failed");
    }
    const Eigen::VectorXd t = solver.solve(rhs);
    if (solver.info() != Eigen::Success) {
        fail(ErrorCode::SolverFailure, "thermal solve failed");
    }
    const double residual = (a * t - rhs).norm() / rhs.norm();
    if (residual > 1e-8) {
        fail(ErrorCode::SolverFailure,
             "thermal solve residual " + std::to_string(residual) + " above tolerance");
    }

    TemperatureField field;
    field.x_um = g.xc;
    field.y_um = g.yc;
    field.t_k.assign(t.data(), t.data() + n);
    field.residual = residual;
    return field;
}

double waveguide_temp(const TemperatureField& field, const CrossSection& cs) {
    const std::size_t nx = field.x_um.size();
    double sum = 0.0;
    double area = 0.0;
    for (std::size_t j = 0; j < field.y_um.size(); ++j) {
        const double y = field.y_um[j];
        if (y < 0.0 || y > cs.wg_height_um) continue;
        for (std::size_t i = 0; i < nx; ++i) {
            if (std::fabs(field.x_um[i]) > cs.wg_width_um / 2.0) continue;
            sum += field.t_k[j * nx + i];
            area += 1.0;
        }
    }
    if (area == 0.0) fail(ErrorCode::InvalidParameter, "no grid cells inside the waveguide");
    return sum / area;
}

double thermo_optic_coeff(double t_k) {
    return 9.45e-5 + 3.47e-7 * t_k - 1.49e-10 * t_k * t_k;
}

bool thermo_optic_in_range(double t_k) { return t_k >= 300.0 && t_k <= 600.0; }

double delta_n_eff(double t_from_k, double t_to_k) {
    const auto antiderivative = [](double t) {
        return 9.45e-5 * t + 3.47e-7 / 2.0 * t * t - 1.49e-10 / 3.0 * t * t * t;
    };
    return antiderivative(t_to_k) - antiderivative(t_from_k);
}

double phase_from_power(const CrossSection& cs, double power_mw) {
    const TemperatureField field = solve_steady(cs, power_mw);
    const double t_wg = waveguide_temp(field, cs);
    const double dn = delta_n_eff(cs.boundary_temp_k, t_wg);
    return 2.0 * kPi / (cs.wavelength_um * kUm) * dn * cs.wg_length_um * kUm;
}

double crosstalk_at(const CrossSection& cs, double power_mw, double offset_um) {
    if (std::fabs(offset_um) > cs.half_width_um) {
        fail(ErrorCode::InvalidParameter, "offset outside the modeled domain");
    }
    const TemperatureField field = solve_steady(cs, power_mw);
    return field.at(offset_um, cs.wg_height_um / 2.0) - cs.boundary_temp_k;
}

std::vector<ThermalSweepPoint> thermal_sweep(const CrossSection& cs,
                                             const std::vector<double>& powers_mw) {
    std::vector<ThermalSweepPoint> sweep;
    sweep.reserve(powers_mw.size());
    for (double p : powers_mw) {
        const TemperatureField field = solve_steady(cs, p);
        const double t_wg = waveguide_temp(field, cs);
        const double theta =
            2.0 * kPi / (cs.wavelength_um * kUm) * delta_n_eff(cs.boundary_temp_k, t_wg) *
            cs.wg_length_um * kUm;
        sweep.push_back({p, t_wg, theta});
    }
    return sweep;
}

namespace {

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

}  // namespace

double sweep_slope(const std::vector<ThermalSweepPoint>& sweep) {
    if (sweep.size() < 2) fail(ErrorCode::InvalidParameter, "sweep too short");
    std::vector<double> p, th;
    for (const auto& s : sweep) {
        p.push_back(s.p_mw);
        th.push_back(s.theta_rad);
    }
    return linear_fit(p, th).first;
}

double pi_power_mw(const std::vector<ThermalSweepPoint>& sweep) {
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        if (sweep[i].theta_rad >= kPi) {
            const double t = (kPi - sweep[i - 1].theta_rad) /
                             (sweep[i].theta_rad - sweep[i - 1].theta_rad);
            return sweep[i - 1].p_mw + t * (sweep[i].p_mw - sweep[i - 1].p_mw);
        }
    }
    fail(ErrorCode::InvalidParameter, "sweep never reaches a pi phase shift");
}

double sweep_r_squared(const std::vector<ThermalSweepPoint>& sweep) {
    if (sweep.size() < 3) fail(ErrorCode::InvalidParameter, "sweep too short");
    std::vector<double> p, t;
    for (const auto& s : sweep) {
        p.push_back(s.p_mw);
        t.push_back(s.t_wg_k);
    }
    const auto [slope, intercept] = linear_fit(p, t);
    double ss_res = 0.0, ss_tot = 0.0;
    const double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = t[i] - (slope * p[i] + intercept);
        ss_res += r * r;
        ss_tot += (t[i] - mean) * (t[i] - mean);
    }
    return 1.0 - ss_res / ss_tot;
}

}  // namespace cpscal
