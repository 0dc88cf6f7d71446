#pragma once

// Steady three-phase drift-flux pipe model on a staggered grid.
//
// Layout (n cells, dx = L/n):
//   faces    0     1     2   ...   n-1     n
//            |-----|-----|-- ... --|-------|
//   cells       0     1    ...       n-1
// Pressures, densities and viscosities live at cell centres; velocities and
// phase mass flows live at faces. Face 0 is the pipe inlet, face n the outlet
// where p_out is imposed. Momentum control volumes are centred on faces; the
// two boundary ones are half cells.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "hybridflow/fluid_props.hpp"

namespace hybridflow::flow {

struct PipeConfig {
    double length = 1000.0;   // m
    double diameter = 0.2;    // m
    double roughness = 3e-5;  // m
    double inclination = 0.0; // rad, positive for upward flow
    int n_cells = 10;
    double gravity = 9.81; // m/s2

    double area() const;
    double dx() const { return length / n_cells; }
    void validate() const;
};

struct BoundaryConditions {
    double q_liq_std = 0.2;  // m3/s of liquid at standard conditions
    double p_out = 10e5;     // Pa
    double t_in = 298.15;    // K
    double t_out = 298.15;   // K
    void validate() const;
};

enum class SlipModel { no_slip, zuber_findlay };

struct SlipClosure {
    SlipModel model = SlipModel::zuber_findlay;
    double c0 = 1.2;
    /// Scale on the drift velocity 0.35 sqrt(g D (rho_l - rho_g)/rho_l) for a horizontal pipe.
    double horizontal_drift_factor = 0.0;
};

/// Closure choices of the physics. Defaults describe the model under test.
struct ClosureSet {
    SlipClosure slip;
    /// Emulsion-style liquid viscosity, mu_liq * (1 + k * local water fraction).
    double emulsion_k = 0.0;
    /// Relative bias applied to the mixture density.
    double density_bias = 0.0;
    /// Per-cell multipliers on the Colebrook friction factor; empty means 1.
    std::vector<double> friction_multiplier;
};

struct SolverSettings {
    double tol_pressure = 10.0; // Pa
    double relax = 0.5;
    int max_iter = 200;
    ClosureSet closure;
    void validate() const;
};

/// Fanning friction factor per cell.
struct FrictionVector {
    std::vector<double> xi;
    void validate(std::size_t n_cells) const;
};

struct GridState {
    std::vector<double> p;        // cell centres, Pa
    std::vector<double> p_face;   // faces; p_face[0] inlet, p_face[n] = p_out
    std::vector<double> u_gas, u_liq, u_mix;        // faces, m/s
    std::vector<double> mass_flow_gas, mass_flow_liq; // faces, kg/s
    std::vector<double> alpha_g, rho_mix, mu_mix, re_mix, r_so; // cells
    std::vector<double> rho_mix_face; // faces, kg/m3
    FrictionVector friction;
    bool converged = false;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity(); // Pa
    std::vector<double> residual_trace;
    std::uint32_t warnings = 0; // OR of fluid::RangeWarning bits seen

    std::size_t n_cells() const { return p.size(); }
};

double reynolds(double rho_mix, double u_mix, double diameter, double mu_mix);

namespace colebrook_limits {
inline constexpr double laminar_re = 2000.0;
inline constexpr double turbulent_re = 2300.0;
} // namespace colebrook_limits

/// Fanning friction factor. Turbulent branch solves
///   1/sqrt(xi) = -4 log10(1.256/(Re sqrt(xi)) + eps/(3.7 D))
/// by fixed-point iteration on 1/sqrt(xi); laminar branch is 16/Re, blended
/// linearly over Re in [2000, 2300].
double colebrook_friction(double re, double roughness, double diameter);
/// Residual of the turbulent equation in 1/sqrt(xi) units.
double colebrook_residual(double xi, double re, double roughness, double diameter);
/// The Re -> infinity limit 1/(-4 log10(eps/(3.7 D)))^2.
double colebrook_fully_rough(double roughness, double diameter);

struct SuperficialVelocities {
    double gas; // m/s
    double liq; // m/s
};

struct SlipResult {
    double alpha_g;
    double u_gas;
    double u_liq;
    bool clamped = false;
};

SlipResult slip_closure(SuperficialVelocities j, const fluid::BlackOilProps& props, const PipeConfig& config,
                        const SlipClosure& closure);

/// Phase mass flows at faces from first-order upwinding of the gas/liquid
/// balances with oil-to-gas mass transfer.
struct PhaseFluxes {
    std::vector<double> gas;          // faces, kg/s
    std::vector<double> liq;          // faces, kg/s
    std::vector<double> gas_transfer; // cells, kg/s gained by the gas
    std::vector<double> liq_transfer; // cells, kg/s gained by the liquid
};

/// r_so_upwind holds R_so at the upwind state of each face: entry 0 is the
/// inlet condition, entry i+1 is cell i. Transferred gas is valued at the
/// standard gas density because R_so counts standard volumes.
PhaseFluxes mass_balance_step(std::span<const double> r_so_upwind, const fluid::FluidSpec& spec,
                              const BoundaryConditions& bc);

/// dP/dx = 2 xi rho u|u| / D + rho g sin(psi), positive toward the inlet.
double momentum_gradient(double xi, double rho_mix, double u_mix, double diameter, double inclination,
                         double gravity);

/// Pressure gradient per momentum control volume (one per face). Friction
/// factors are averaged onto interior faces; boundary faces take the adjacent cell.
std::vector<double> momentum_step(std::span<const double> rho_mix_faces, std::span<const double> u_mix_faces,
                                  std::span<const double> xi_cells, const PipeConfig& config);

/// SIMPLE-style outer iteration. When friction_override is given, its values
/// are used verbatim; otherwise friction is recomputed from Colebrook every
/// iteration. warm_start, if given, supplies the initial pressure field.
GridState simple_solve(const PipeConfig& config, const BoundaryConditions& bc, const fluid::FluidSpec& spec,
                       const SolverSettings& settings, const FrictionVector* friction_override = nullptr,
                       const GridState* warm_start = nullptr);

/// Pressure at the pipe inlet face of a converged state.
double inlet_pressure(const GridState& state);

/// Discrete momentum residual per face, Pa/m, evaluated on the stored fields.
std::vector<double> momentum_residuals(const GridState& state, const PipeConfig& config);

/// One row per cell: x,p,alpha_g,u_gas,u_liq,re_mix,xi.
void write_profile_csv(std::ostream& out, const GridState& state, const PipeConfig& config);

} // namespace hybridflow::flow
