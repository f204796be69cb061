#pragma once

#include <string>
#include <vector>

#include "cpscal/errors.hpp"

namespace cpscal {

struct Material {
    double rho = 0.0;   // kg/m^3
    double cp = 0.0;    // J/(kg K)
    double k_hc = 0.0;  // W/(m K)
    std::string name;

    void validate() const;
};

/// Cross-section of one heater/waveguide unit cell on an SOI stack.
/// y = 0 at the buried-oxide top (waveguide bottom); x = 0 at the heater axis.
struct CrossSection {
    double half_width_um = 25.0;
    double substrate_depth_um = 10.0;  // modeled slice of the thick substrate
    double box_thickness_um = 2.0;
    double clad_thickness_um = 2.0;
    double wg_width_um = 0.45;
    double wg_height_um = 0.22;
    double heater_width_um = 2.5;
    double heater_height_um = 0.1;
    double heater_gap_um = 0.85;  // cladding between waveguide top and heater bottom
    double heater_length_um = 390.0;
    double wg_length_um = 390.0;
    double wavelength_um = 1.55;
    double boundary_temp_k = 300.0;
    double h_air = 10.0;  // convective coefficient at the cladding top, W/(m^2 K)

    Material si{2330.0, 711.0, 148.0, "Si"};
    Material sio2{2203.0, 709.0, 1.38, "SiO2"};
    Material tin{5430.0, 604.45, 67.7, "TiN"};

    double fine_spacing_um = 0.05;
    double coarse_spacing_um = 1.0;

    double heater_bottom_um() const { return wg_height_um + heater_gap_um; }
    double heater_top_um() const { return heater_bottom_um() + heater_height_um; }
    double domain_bottom_um() const { return -box_thickness_um - substrate_depth_um; }
    double domain_top_um() const { return clad_thickness_um; }
    void validate() const;
};

struct TemperatureField {
    std::vector<double> x_um;  // cell centers
    std::vector<double> y_um;
    std::vector<double> t_k;   // row-major, [iy * nx + ix]
    double residual = 0.0;     // relative linear-solve residual

    double at(double x_um_pos, double y_um_pos) const;  // bilinear interpolation
};

/// Steady-state conduction with a volumetric source in the heater, fixed
/// temperature below the substrate slice, convection at the cladding top and
/// insulated sides.
TemperatureField solve_steady(const CrossSection& cs, double power_mw);

/// Area-weighted mean temperature over the waveguide core.
double waveguide_temp(const TemperatureField& field, const CrossSection& cs);

/// Thermo-optic coefficient of silicon, C band, valid 300-600 K.
double thermo_optic_coeff(double t_k);
bool thermo_optic_in_range(double t_k);

/// Integral of the thermo-optic coefficient from t_from to t_to (analytic).
double delta_n_eff(double t_from_k, double t_to_k);

/// Phase shift produced by a heating power: solves the cross-section,
/// integrates the thermo-optic coefficient up to the waveguide temperature.
double phase_from_power(const CrossSection& cs, double power_mw);

/// Temperature rise above the boundary at waveguide height, laterally offset
/// from the heater axis.
double crosstalk_at(const CrossSection& cs, double power_mw, double offset_um);

struct ThermalSweepPoint {
    double p_mw = 0.0;
    double t_wg_k = 0.0;
    double theta_rad = 0.0;
};

std::vector<ThermalSweepPoint> thermal_sweep(const CrossSection& cs,
                                             const std::vector<double>& powers_mw);

/// Least-squares slope of theta(P) over a sweep, rad/mW.
double sweep_slope(const std::vector<ThermalSweepPoint>& sweep);
/// Interpolated power for a pi phase shift.
double pi_power_mw(const std::vector<ThermalSweepPoint>& sweep);
/// Coefficient of determination of the linear fit T_wg(P).
double sweep_r_squared(const std::vector<ThermalSweepPoint>& sweep);

}  // namespace cpscal
