#include "hybridflow/fluid_props.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "hybridflow/errors.hpp"

namespace hybridflow::fluid {

namespace {

using namespace constants;

double to_psia(double pa) { return pa / pa_per_psi; }
double to_field_gor(double sm3_per_sm3) { return sm3_per_sm3 * scf_per_stb_per_sm3_per_sm3; }

void require_conditions(const LocalConditions& cond, const char* who) {
    if (!(cond.pressure > 0.0) || !(cond.temperature > 0.0) || !std::isfinite(cond.pressure) ||
        !std::isfinite(cond.temperature)) {
        throw InputDomainError(fmt::format("{}: non-physical conditions p={} Pa, T={} K", who,
                                           cond.pressure, cond.temperature));
    }
}

// Dranchuk & Abou-Kassem (1975) constants.
constexpr double A1 = 0.3265, A2 = -1.0700, A3 = -0.5339, A4 = 0.01569, A5 = -0.05165,
                 A6 = 0.5475, A7 = -0.7361, A8 = 0.1844, A9 = 0.1056, A10 = 0.6134,
                 A11 = 0.7210;

struct DakTerms {
    double z_dak;
    double dz_drho;
};

DakTerms dak_terms(double rho, double t) {
    const double c1 = A1 + A2 / t + A3 / (t * t * t) + A4 / (t * t * t * t) + A5 / std::pow(t, 5);
    const double c2 = A6 + A7 / t + A8 / (t * t);
    const double c3 = A9 * (A7 / t + A8 / (t * t));
    const double c4 = A10 / (t * t * t);
    const double r2 = rho * rho;
    const double e = std::exp(-A11 * r2);
    const double z = 1.0 + c1 * rho + c2 * r2 - c3 * r2 * r2 * rho + c4 * r2 * (1.0 + A11 * r2) * e;
    const double dz = c1 + 2.0 * c2 * rho - 5.0 * c3 * r2 * r2 +
                      c4 * e * (2.0 * rho + 2.0 * A11 * r2 * rho - 2.0 * A11 * A11 * r2 * r2 * rho);
    return {z, dz};
}

} // namespace

const char* range_warning_name(int bit) {
    static const char* names[range_warning_count] = {
        "z_factor", "standing", "dead_oil_viscosity", "live_oil_viscosity", "gas_viscosity", "water",
    };
    return bit >= 0 && bit < range_warning_count ? names[bit] : "unknown";
}

void FluidSpec::validate() const {
    auto fail = [](const std::string& msg) { throw InputDomainError("FluidSpec: " + msg); };
    if (!(wc >= 0.0 && wc < 1.0)) fail(fmt::format("water cut must be in [0,1), got {}", wc));
    if (!(gor > 0.0)) fail(fmt::format("gor must be > 0, got {}", gor));
    if (!(p_bubble > 0.0)) fail(fmt::format("p_bubble must be > 0, got {}", p_bubble));
    if (!(t_bubble > 0.0)) fail(fmt::format("t_bubble must be > 0, got {}", t_bubble));
    if (!(rho_oil_std > 0.0 && rho_water_std > 0.0 && rho_gas_std > 0.0))
        fail("standard densities must be > 0");
}

void LocalConditions::validate() const { require_conditions(*this, "LocalConditions"); }

// ---------------------------------------------------------------------------
// StandardCorrelations
// ---------------------------------------------------------------------------

double StandardCorrelations::solution_gor(const FluidSpec& spec, const LocalConditions& cond) const {
    require_conditions(cond, "solution_gor");
    // Standing: Rs = gamma_g * [(p/18.2 + 1.4) * 10^(0.0125 API - 0.00091 T)]^1.2048.
    // Taking the ratio to the bubble-point state cancels gamma_g and API, so the
    // correlation reproduces the measured GOR exactly at (p_bubble, t_bubble).
    auto bracket = [](double p_pa, double t_k) {
        return (to_psia(p_pa) / 18.2 + 1.4) * std::pow(10.0, -0.00091 * kelvin_to_fahrenheit(t_k));
    };
    const double ratio = bracket(cond.pressure, cond.temperature) / bracket(spec.p_bubble, spec.t_bubble);
    if (ratio >= 1.0) return spec.gor;
    return std::clamp(spec.gor * std::pow(ratio, 1.2048), 0.0, spec.gor);
}

PseudoCritical StandardCorrelations::pseudo_critical(const FluidSpec& spec) const {
    // Sutton (1985) natural-gas pseudo-criticals, as tabulated by McCain.
    const double g = spec.gas_gravity();
    const double t_pc_rankine = 169.2 + 349.5 * g - 74.0 * g * g;
    const double p_pc_psia = 756.8 - 131.0 * g - 3.6 * g * g;
    return {p_pc_psia * pa_per_psi, t_pc_rankine / 1.8};
}

double StandardCorrelations::z_factor(const FluidSpec& spec, const LocalConditions& cond) const {
    require_conditions(cond, "gas_z_factor");
    const auto pc = pseudo_critical(spec);
    return dak_z_factor(cond.pressure / pc.p_crit, cond.temperature / pc.t_crit);
}

double StandardCorrelations::oil_volume_factor(const FluidSpec& spec, const LocalConditions& cond,
                                               double r_so) const {
    // Standing B_o as recommended by McCain.
    const double f = to_field_gor(r_so) * std::sqrt(spec.gas_gravity() / spec.oil_gravity()) +
                     1.25 * kelvin_to_fahrenheit(cond.temperature);
    return 0.9759 + 0.00012 * std::pow(std::max(f, 0.0), 1.2);
}

double StandardCorrelations::water_volume_factor(const LocalConditions& cond) const {
    // McCain: B_w = (1 + dV_wt)(1 + dV_wp), T in F, p in psia.
    const double t = kelvin_to_fahrenheit(cond.temperature);
    const double p = to_psia(cond.pressure);
    const double dv_t = -1.0001e-2 + 1.33391e-4 * t + 5.50654e-7 * t * t;
    const double dv_p = -1.95301e-9 * p * t - 1.72834e-13 * p * p * t - 3.58922e-7 * p -
                        2.25341e-10 * p * p;
    return (1.0 + dv_t) * (1.0 + dv_p);
}

double StandardCorrelations::dead_oil_viscosity(const FluidSpec& spec, const LocalConditions& cond) const {
    // Egbogah-Ng: log10(log10(mu_od + 1)) = 1.8653 - 0.025086 API - 0.5644 log10(T), mu in cP.
    const double t = kelvin_to_fahrenheit(cond.temperature);
    const double y = 1.8653 - 0.025086 * spec.api() - 0.5644 * std::log10(t);
    const double mu_cp = std::pow(10.0, std::pow(10.0, y)) - 1.0;
    return mu_cp * 1e-3;
}

double StandardCorrelations::live_oil_viscosity(double mu_dead, double r_so) const {
    // Beggs-Robinson, mu_o = A mu_od^B with the published constants written as
    // powers of their reference values (10.715 ~ 100^0.515, 5.44 ~ 150^0.338),
    // so the correction is the identity at zero dissolved gas.
    const double rs = to_field_gor(std::max(r_so, 0.0));
    const double a = std::pow((rs + 100.0) / 100.0, -0.515);
    const double b = std::pow((rs + 150.0) / 150.0, -0.338);
    const double mu_cp = a * std::pow(mu_dead * 1e3, b);
    return mu_cp * 1e-3;
}

double StandardCorrelations::gas_viscosity(const FluidSpec& spec, const LocalConditions& cond,
                                           double rho_gas) const {
    // Lee-Gonzalez-Eakin: mu = 1e-4 K exp(X rho^Y), rho in g/cm3, T in R, mu in cP.
    const double m = 28.97 * spec.gas_gravity();
    const double t = kelvin_to_rankine(cond.temperature);
    const double k = (9.4 + 0.02 * m) * std::pow(t, 1.5) / (209.0 + 19.0 * m + t);
    const double x = 3.5 + 986.0 / t + 0.01 * m;
    const double y = 2.4 - 0.2 * x;
    const double mu_cp = 1e-4 * k * std::exp(x * std::pow(rho_gas * 1e-3, y));
    return mu_cp * 1e-3;
}

double StandardCorrelations::water_viscosity(const LocalConditions& cond) const {
    // McCain, fresh water (zero salinity): mu_w1 = 109.574 T^-1.12166, pressure correction.
    const double t = kelvin_to_fahrenheit(cond.temperature);
    const double p = to_psia(cond.pressure);
    const double mu1 = 109.574 * std::pow(t, -1.12166);
    const double mu_cp = mu1 * (0.9994 + 4.0295e-5 * p + 3.1062e-9 * p * p);
    return mu_cp * 1e-3;
}

double StandardCorrelations::surface_tension(const FluidSpec& spec, const LocalConditions& cond,
                                             double r_so) const {
    // Abdul-Majeed (2000): dead-oil tension scaled by a dissolved-gas factor, dyn/cm.
    const double t = kelvin_to_fahrenheit(cond.temperature);
    const double dead = (1.17013 - 1.694e-3 * t) * (38.085 - 0.259 * spec.api());
    const double live = dead * (0.056379 + 0.94362 * std::exp(-3.8491e-3 * to_field_gor(r_so)));
    return std::max(live, 0.0) * 1e-3;
}

const Correlations& standard_correlations() {
    static const StandardCorrelations instance;
    return instance;
}

// ---------------------------------------------------------------------------
// z factor
// ---------------------------------------------------------------------------

double dak_residual(double z, double p_reduced, double t_reduced) {
    const double rho = 0.27 * p_reduced / (z * t_reduced);
    return z - dak_terms(rho, t_reduced).z_dak;
}

double dak_z_factor(double p_reduced, double t_reduced) {
    if (!(p_reduced >= 0.0) || !(t_reduced > 0.0))
        throw InputDomainError(fmt::format("dak_z_factor: invalid reduced state ppr={} tpr={}", p_reduced,
                                           t_reduced));
    if (p_reduced == 0.0) return 1.0;
    double z = 1.0;
    double residual = 0.0;
    for (int it = 0; it < 100; ++it) {
        const double rho = 0.27 * p_reduced / (z * t_reduced);
        const auto terms = dak_terms(rho, t_reduced);
        residual = z - terms.z_dak;
        if (std::abs(residual) < 1e-13) return z;
        const double slope = 1.0 + terms.dz_drho * rho / z;
        double step = slope != 0.0 ? residual / slope : residual;
        // Damping keeps the iterate in the physical branch.
        const double max_step = 0.5 * z;
        step = std::clamp(step, -max_step, max_step);
        z = std::max(z - step, 0.05);
    }
    if (std::abs(residual) < 1e-10) return z;
    throw NumericalError(
        fmt::format("dak_z_factor: Newton did not converge (ppr={}, tpr={})", p_reduced, t_reduced),
        residual);
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

double solution_gor(const FluidSpec& spec, const LocalConditions& cond) {
    return standard_correlations().solution_gor(spec, cond);
}

double gas_z_factor(const FluidSpec& spec, const LocalConditions& cond) {
    return standard_correlations().z_factor(spec, cond);
}

double gas_volume_factor(double pressure, double temperature, double z) {
    if (!(pressure > 0.0) || !(temperature > 0.0) || !(z > 0.0))
        throw InputDomainError("gas_volume_factor: pressure, temperature and z must be > 0");
    return (constants::p_std * temperature * z) / (pressure * constants::t_std);
}

VolumeFactors volume_factors(const FluidSpec& spec, const LocalConditions& cond, double r_so) {
    require_conditions(cond, "volume_factors");
    if (!(r_so >= 0.0)) throw InputDomainError("volume_factors: r_so must be >= 0");
    const auto& corr = standard_correlations();
    const double z = corr.z_factor(spec, cond);
    return {corr.oil_volume_factor(spec, cond, r_so), corr.water_volume_factor(cond),
            gas_volume_factor(cond.pressure, cond.temperature, z), z};
}

Viscosities viscosities(const FluidSpec& spec, const LocalConditions& cond, double r_so, double rho_gas) {
    require_conditions(cond, "viscosities");
    if (!(r_so >= 0.0) || !(rho_gas >= 0.0))
        throw InputDomainError("viscosities: r_so and rho_gas must be >= 0");
    const auto& corr = standard_correlations();
    const double dead = corr.dead_oil_viscosity(spec, cond);
    return {corr.live_oil_viscosity(dead, r_so), corr.gas_viscosity(spec, cond, rho_gas),
            corr.water_viscosity(cond), dead};
}

double liquid_volume_factor(double b_o, double b_w, double wor) {
    if (!(b_o > 0.0) || !(b_w > 0.0) || !(wor >= 0.0))
        throw InputDomainError("liquid_volume_factor: requires b_o, b_w > 0 and wor >= 0");
    if (std::isinf(wor)) return b_w;
    return b_o * (1.0 / (1.0 + wor)) + b_w * (wor / (1.0 + wor));
}

PhaseDensities phase_densities(const FluidSpec& spec, double b_o, double b_w, double b_g) {
    if (!(b_o > 0.0) || !(b_w > 0.0) || !(b_g > 0.0))
        throw InputDomainError("phase_densities: volume factors must be > 0");
    return {spec.rho_oil_std / b_o, spec.rho_gas_std / b_g, spec.rho_water_std / b_w};
}

double solution_glr(double r_so, double wor) {
    if (!(r_so >= 0.0) || !(wor >= 0.0)) throw InputDomainError("solution_glr: r_so, wor must be >= 0");
    return r_so * (1.0 / (1.0 + wor));
}

double liquid_density(const FluidSpec& spec, double r_sl, double b_l) {
    if (!(b_l > 0.0) || !(r_sl >= 0.0)) throw InputDomainError("liquid_density: requires b_l > 0, r_sl >= 0");
    return (spec.rho_gas_std * r_sl + spec.rho_liq_std()) / b_l;
}

MixtureProps mixture_props(double alpha_g, double rho_gas, double rho_liq, double mu_gas, double mu_liq) {
    if (!(alpha_g >= 0.0 && alpha_g <= 1.0))
        throw InputDomainError(fmt::format("mixture_props: alpha_g={} outside [0,1]", alpha_g));
    // Written as convex combinations so the endpoints are reproduced exactly.
    if (alpha_g == 0.0) return {rho_liq, mu_liq};
    if (alpha_g == 1.0) return {rho_gas, mu_gas};
    return {alpha_g * rho_gas + (1.0 - alpha_g) * rho_liq, alpha_g * mu_gas + (1.0 - alpha_g) * mu_liq};
}

BlackOilProps evaluate(const FluidSpec& spec, const LocalConditions& cond, const Correlations& corr) {
    require_conditions(cond, "evaluate");
    BlackOilProps p;
    const double wor = spec.wor();
    const auto pc = corr.pseudo_critical(spec);
    p.p_crit = pc.p_crit;
    p.t_crit = pc.t_crit;

    p.r_so = corr.solution_gor(spec, cond);
    p.r_sl = solution_glr(p.r_so, wor);
    p.z = corr.z_factor(spec, cond);
    p.b_o = corr.oil_volume_factor(spec, cond, p.r_so);
    p.b_w = corr.water_volume_factor(cond);
    p.b_g = gas_volume_factor(cond.pressure, cond.temperature, p.z);
    p.b_l = liquid_volume_factor(p.b_o, p.b_w, wor);

    const auto dens = phase_densities(spec, p.b_o, p.b_w, p.b_g);
    p.rho_oil = dens.rho_oil;
    p.rho_gas = dens.rho_gas;
    p.rho_water = dens.rho_water;
    p.rho_liq = liquid_density(spec, p.r_sl, p.b_l);

    const double mu_dead = corr.dead_oil_viscosity(spec, cond);
    p.mu_oil = corr.live_oil_viscosity(mu_dead, p.r_so);
    p.mu_gas = corr.gas_viscosity(spec, cond, p.rho_gas);
    p.mu_water = corr.water_viscosity(cond);
    // Local liquid is a homogeneous oil/water mix by in-situ volume.
    p.water_fraction = wor * p.b_w / (p.b_o + wor * p.b_w);
    p.mu_liq = (1.0 - p.water_fraction) * p.mu_oil + p.water_fraction * p.mu_water;
    p.sigma_og = corr.surface_tension(spec, cond, p.r_so);

    const double p_psia = to_psia(cond.pressure);
    const double t_f = kelvin_to_fahrenheit(cond.temperature);
    const double ppr = cond.pressure / pc.p_crit, tpr = cond.temperature / pc.t_crit;
    const double rs_field = to_field_gor(p.r_so);
    const double api = spec.api();
    if (ppr < 0.2 || ppr > 30.0 || tpr < 1.0 || tpr > 3.0) p.warnings |= warn_z_factor;
    if (p_psia < 130.0 || p_psia > 7000.0 || t_f < 100.0 || t_f > 258.0) p.warnings |= warn_standing;
    if (api < 5.0 || api > 58.0 || t_f < 59.0 || t_f > 176.0) p.warnings |= warn_dead_oil_viscosity;
    if (rs_field < 20.0 || rs_field > 2070.0 || t_f < 70.0 || t_f > 295.0) p.warnings |= warn_live_oil_viscosity;
    if (p_psia < 100.0 || p_psia > 8000.0 || t_f < 100.0 || t_f > 340.0) p.warnings |= warn_gas_viscosity;
    if (t_f < 86.0 || t_f > 350.0 || p_psia > 10000.0) p.warnings |= warn_water;
    return p;
}

} // namespace hybridflow::fluid
