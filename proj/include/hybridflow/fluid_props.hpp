#pragma once

// Black Oil fluid properties. SI units throughout (Pa, K, kg/m^3, Pa*s, N/m);
// correlations published in field units convert at their own boundary.

#include <cstdint>

namespace hybridflow::fluid {

namespace constants {
inline constexpr double p_std = 101325.0;            // Pa, 1 atm
inline constexpr double t_std = 288.7055555555556;   // K, 60 F
inline constexpr double rho_air_std = 1.2232;        // kg/m^3 at 1 atm, 60 F
inline constexpr double rho_fresh_water_std = 999.016; // kg/m^3 at 60 F
inline constexpr double pa_per_psi = 6894.757293168361;
inline constexpr double scf_per_stb_per_sm3_per_sm3 = 5.614583333333333;
} // namespace constants

inline double kelvin_to_fahrenheit(double t) { return (t - 273.15) * 1.8 + 32.0; }
inline double kelvin_to_rankine(double t) { return t * 1.8; }
inline double celsius(double c) { return c + 273.15; }
inline double bar(double b) { return b * 1e5; }

/// Standard-condition fluid description.
struct FluidSpec {
    double gor = 50.0;            // Sm3/Sm3
    double wc = 0.3;              // water cut, fraction of standard liquid volume
    double p_bubble = 50e5;       // Pa
    double t_bubble = 293.15;     // K
    double rho_oil_std = 867.0;   // kg/m3
    double rho_water_std = 1020.0;
    double rho_gas_std = 0.997;

    /// Water-oil ratio WC/(1-WC).
    double wor() const { return wc / (1.0 - wc); }
    double gas_gravity() const { return rho_gas_std / constants::rho_air_std; }
    double oil_gravity() const { return rho_oil_std / constants::rho_fresh_water_std; }
    double api() const { return 141.5 / oil_gravity() - 131.5; }
    /// WOR-weighted standard liquid density.
    double rho_liq_std() const { return (1.0 - wc) * rho_oil_std + wc * rho_water_std; }

    /// Throws InputDomainError when an invariant is violated.
    void validate() const;
};

struct LocalConditions {
    double pressure;    // Pa
    double temperature; // K
    void validate() const;
};

/// Bits set in BlackOilProps::warnings when an input falls outside the range
/// a correlation was fitted on. Values are still returned.
enum RangeWarning : std::uint32_t {
    warn_none = 0,
    warn_z_factor = 1u << 0,
    warn_standing = 1u << 1,
    warn_dead_oil_viscosity = 1u << 2,
    warn_live_oil_viscosity = 1u << 3,
    warn_gas_viscosity = 1u << 4,
    warn_water = 1u << 5,
};
inline constexpr int range_warning_count = 6;
const char* range_warning_name(int bit);

struct BlackOilProps {
    double r_so = 0, r_sl = 0;
    double b_o = 1, b_w = 1, b_g = 1, b_l = 1;
    double z = 1;
    double rho_oil = 0, rho_gas = 0, rho_water = 0, rho_liq = 0;
    double mu_oil = 0, mu_gas = 0, mu_water = 0, mu_liq = 0;
    double sigma_og = 0;
    double p_crit = 0, t_crit = 0;
    /// Volume fraction of water in the local liquid phase.
    double water_fraction = 0;
    std::uint32_t warnings = warn_none;
};

struct PseudoCritical {
    double p_crit; // Pa
    double t_crit; // K
};

struct VolumeFactors {
    double b_o, b_w, b_g;
    double z;
};

struct Viscosities {
    double mu_oil, mu_gas, mu_water;
    double mu_dead_oil;
};

struct PhaseDensities {
    double rho_oil, rho_gas, rho_water;
};

struct MixtureProps {
    double rho_mix, mu_mix;
};

/// Swappable set of empirical correlations. All methods take SI inputs.
class Correlations {
public:
    virtual ~Correlations() = default;
    virtual double solution_gor(const FluidSpec& spec, const LocalConditions& cond) const = 0;
    virtual PseudoCritical pseudo_critical(const FluidSpec& spec) const = 0;
    virtual double z_factor(const FluidSpec& spec, const LocalConditions& cond) const = 0;
    virtual double oil_volume_factor(const FluidSpec& spec, const LocalConditions& cond, double r_so) const = 0;
    virtual double water_volume_factor(const LocalConditions& cond) const = 0;
    virtual double dead_oil_viscosity(const FluidSpec& spec, const LocalConditions& cond) const = 0;
    virtual double live_oil_viscosity(double mu_dead, double r_so) const = 0;
    virtual double gas_viscosity(const FluidSpec& spec, const LocalConditions& cond, double rho_gas) const = 0;
    virtual double water_viscosity(const LocalConditions& cond) const = 0;
    virtual double surface_tension(const FluidSpec& spec, const LocalConditions& cond, double r_so) const = 0;
};

/// Standing solution GOR anchored at the bubble point, Sutton pseudo-criticals,
/// Dranchuk-Abou-Kassem z, Standing B_o, McCain water, Egbogah dead oil,
/// Beggs-Robinson live oil, Lee-Gonzalez-Eakin gas, Abdul-Majeed surface tension.
class StandardCorrelations final : public Correlations {
public:
    double solution_gor(const FluidSpec& spec, const LocalConditions& cond) const override;
    PseudoCritical pseudo_critical(const FluidSpec& spec) const override;
    double z_factor(const FluidSpec& spec, const LocalConditions& cond) const override;
    double oil_volume_factor(const FluidSpec& spec, const LocalConditions& cond, double r_so) const override;
    double water_volume_factor(const LocalConditions& cond) const override;
    double dead_oil_viscosity(const FluidSpec& spec, const LocalConditions& cond) const override;
    double live_oil_viscosity(double mu_dead, double r_so) const override;
    double gas_viscosity(const FluidSpec& spec, const LocalConditions& cond, double rho_gas) const override;
    double water_viscosity(const LocalConditions& cond) const override;
    double surface_tension(const FluidSpec& spec, const LocalConditions& cond, double r_so) const override;
};

const Correlations& standard_correlations();

/// Dranchuk-Abou-Kassem residual f(z) = z - Z_DAK(z) at the given reduced state.
double dak_residual(double z, double p_reduced, double t_reduced);
/// Solves dak_residual = 0 by damped Newton. Throws NumericalError on failure.
double dak_z_factor(double p_reduced, double t_reduced);

double solution_gor(const FluidSpec& spec, const LocalConditions& cond);
double gas_z_factor(const FluidSpec& spec, const LocalConditions& cond);
/// B_g = p_std * T * z / (p * T_std).
double gas_volume_factor(double pressure, double temperature, double z);
VolumeFactors volume_factors(const FluidSpec& spec, const LocalConditions& cond, double r_so);
Viscosities viscosities(const FluidSpec& spec, const LocalConditions& cond, double r_so, double rho_gas);
double liquid_volume_factor(double b_o, double b_w, double wor);
PhaseDensities phase_densities(const FluidSpec& spec, double b_o, double b_w, double b_g);
double solution_glr(double r_so, double wor);
double liquid_density(const FluidSpec& spec, double r_sl, double b_l);
MixtureProps mixture_props(double alpha_g, double rho_gas, double rho_liq, double mu_gas, double mu_liq);

/// Full property set at one evaluation point, including range warnings.
BlackOilProps evaluate(const FluidSpec& spec, const LocalConditions& cond,
                       const Correlations& corr = standard_correlations());

} // namespace hybridflow::fluid
