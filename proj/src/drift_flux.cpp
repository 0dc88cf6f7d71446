#include "hybridflow/drift_flux.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "hybridflow/errors.hpp"

namespace hybridflow::flow {

using fluid::BlackOilProps;
using fluid::FluidSpec;

double PipeConfig::area() const { return 0.25 * std::numbers::pi * diameter * diameter; }

void PipeConfig::validate() const {
    if (!(length > 0.0) || !(diameter > 0.0))
        throw InputDomainError("PipeConfig: length and diameter must be > 0");
    if (!(roughness >= 0.0)) throw InputDomainError("PipeConfig: roughness must be >= 0");
    if (n_cells < 2) throw InputDomainError(fmt::format("PipeConfig: n_cells must be >= 2, got {}", n_cells));
    if (!(gravity >= 0.0) || !std::isfinite(inclination))
        throw InputDomainError("PipeConfig: invalid gravity or inclination");
}

void BoundaryConditions::validate() const {
    if (!(q_liq_std > 0.0))
        throw InputDomainError(fmt::format("BoundaryConditions: q_liq_std must be > 0, got {}", q_liq_std));
    if (!(p_out > 0.0)) throw InputDomainError("BoundaryConditions: p_out must be > 0");
    if (!(t_in > 0.0) || !(t_out > 0.0)) throw InputDomainError("BoundaryConditions: temperatures must be > 0");
    if (t_in != t_out)
        throw InputDomainError("BoundaryConditions: the model is isothermal, t_in must equal t_out");
}

void SolverSettings::validate() const {
    if (!(tol_pressure > 0.0)) throw InputDomainError("SolverSettings: tol_pressure must be > 0");
    if (!(relax > 0.0 && relax <= 1.0)) throw InputDomainError("SolverSettings: relax must be in (0, 1]");
    if (max_iter < 1) throw InputDomainError("SolverSettings: max_iter must be >= 1");
    if (!(closure.slip.c0 > 0.0)) throw InputDomainError("SolverSettings: slip c0 must be > 0");
    for (double m : closure.friction_multiplier)
        if (!(m > 0.0) || !std::isfinite(m)) throw InputDomainError("SolverSettings: friction multipliers must be > 0");
}

void FrictionVector::validate(std::size_t n_cells) const {
    if (xi.size() != n_cells)
        throw InputDomainError(fmt::format("FrictionVector: expected {} values, got {}", n_cells, xi.size()));
    for (std::size_t i = 0; i < xi.size(); ++i)
        if (!(xi[i] > 0.0) || !std::isfinite(xi[i]))
            throw InputDomainError(fmt::format("FrictionVector: xi[{}] = {} is not positive and finite", i, xi[i]));
}

double reynolds(double rho_mix, double u_mix, double diameter, double mu_mix) {
    if (!(mu_mix > 0.0)) throw InputDomainError("reynolds: viscosity must be > 0");
    if (!(rho_mix >= 0.0) || !(diameter > 0.0)) throw InputDomainError("reynolds: invalid density or diameter");
    return rho_mix * std::abs(u_mix) * diameter / mu_mix;
}

// ---------------------------------------------------------------------------
// Colebrook
// ---------------------------------------------------------------------------

namespace {

constexpr double colebrook_a = 1.256;

double colebrook_turbulent(double re, double roughness, double diameter) {
    const double rough = roughness / (3.7 * diameter);
    // Iterate on y = 1/sqrt(xi); the map is a contraction for Re above the laminar range.
    double y = -4.0 * std::log10(rough + colebrook_a / re * 8.0);
    if (!(y > 0.0)) y = 8.0;
    for (int it = 0; it < 200; ++it) {
        const double next = -4.0 * std::log10(colebrook_a * y / re + rough);
        if (std::abs(next - y) <= 1e-15 * std::abs(next)) {
            y = next;
            return 1.0 / (y * y);
        }
        y = next;
    }
    const double xi = 1.0 / (y * y);
    const double r = colebrook_residual(xi, re, roughness, diameter);
    if (std::abs(r) < 1e-12) return xi;
    throw NumericalError(fmt::format("colebrook_friction: fixed point diverged at Re={}", re), r);
}

} // namespace

double colebrook_residual(double xi, double re, double roughness, double diameter) {
    const double s = std::sqrt(xi);
    return 1.0 / s + 4.0 * std::log10(colebrook_a / (re * s) + roughness / (3.7 * diameter));
}

double colebrook_fully_rough(double roughness, double diameter) {
    if (!(roughness > 0.0)) throw InputDomainError("colebrook_fully_rough: roughness must be > 0");
    const double y = -4.0 * std::log10(roughness / (3.7 * diameter));
    return 1.0 / (y * y);
}

double colebrook_friction(double re, double roughness, double diameter) {
    if (!(re > 0.0) || !std::isfinite(re)) throw InputDomainError(fmt::format("colebrook_friction: Re={}", re));
    if (!(roughness >= 0.0) || !(diameter > 0.0))
        throw InputDomainError("colebrook_friction: invalid roughness or diameter");
    using namespace colebrook_limits;
    if (re <= laminar_re) return 16.0 / re;
    if (re >= turbulent_re) return colebrook_turbulent(re, roughness, diameter);
    const double w = (re - laminar_re) / (turbulent_re - laminar_re);
    return (1.0 - w) * (16.0 / re) + w * colebrook_turbulent(re, roughness, diameter);
}

// ---------------------------------------------------------------------------
// Closures and balances
// ---------------------------------------------------------------------------

SlipResult slip_closure(SuperficialVelocities j, const BlackOilProps& props, const PipeConfig& config,
                        const SlipClosure& closure) {
    if (!(j.gas >= 0.0) || !(j.liq >= 0.0) || (j.gas == 0.0 && j.liq == 0.0))
        throw InputDomainError(
            fmt::format("slip_closure: superficial velocities must be >= 0 and not both zero ({}, {})", j.gas, j.liq));
    const double jt = j.gas + j.liq;
    SlipResult r{};
    if (j.gas == 0.0) return {0.0, jt, j.liq, false};
    if (j.liq == 0.0) return {1.0, j.gas, 0.0, false};

    if (closure.model == SlipModel::no_slip) {
        r.alpha_g = j.gas / jt;
        r.u_gas = jt;
        r.u_liq = jt;
        return r;
    }

    double u_drift = 0.0;
    if (props.rho_liq > 0.0) {
        const double drho = std::max(props.rho_liq - props.rho_gas, 0.0) / props.rho_liq;
        u_drift = 0.35 * std::sqrt(config.gravity * config.diameter * drho);
        if (config.inclination == 0.0) u_drift *= closure.horizontal_drift_factor;
    }
    r.u_gas = closure.c0 * jt + u_drift;
    r.alpha_g = j.gas / r.u_gas;
    if (r.alpha_g >= 1.0 || r.alpha_g < 0.0) {
        r.clamped = true;
        r.alpha_g = std::clamp(r.alpha_g, 0.0, 1.0);
        r.u_gas = j.gas / std::max(r.alpha_g, 1e-300);
        r.u_liq = 0.0;
        return r;
    }
    r.u_liq = j.liq / (1.0 - r.alpha_g);
    return r;
}

PhaseFluxes mass_balance_step(std::span<const double> r_so_upwind, const FluidSpec& spec,
                              const BoundaryConditions& bc) {
    if (r_so_upwind.size() < 2) throw InputDomainError("mass_balance_step: need at least one cell");
    const std::size_t n = r_so_upwind.size() - 1;
    const double q_oil = bc.q_liq_std * (1.0 - spec.wc);
    const double q_water = bc.q_liq_std * spec.wc;
    PhaseFluxes f;
    f.gas.resize(n + 1);
    f.liq.resize(n + 1);
    f.gas_transfer.resize(n);
    f.liq_transfer.resize(n);
    f.gas[0] = spec.rho_gas_std * q_oil * (spec.gor - r_so_upwind[0]);
    f.liq[0] = spec.rho_oil_std * q_oil + spec.rho_water_std * q_water + spec.rho_gas_std * q_oil * r_so_upwind[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double transfer = q_oil * spec.rho_gas_std * (r_so_upwind[i + 1] - r_so_upwind[i]);
        f.gas_transfer[i] = -transfer;
        f.liq_transfer[i] = transfer;
        f.gas[i + 1] = f.gas[i] + f.gas_transfer[i];
        f.liq[i + 1] = f.liq[i] + f.liq_transfer[i];
    }
    for (std::size_t k = 0; k <= n; ++k) {
        // Tiny negative values are round-off around zero free gas.
        if (f.gas[k] < 0.0 && f.gas[k] > -1e-12 * f.liq[k]) f.gas[k] = 0.0;
        if (f.gas[k] < 0.0 || f.liq[k] < 0.0)
            throw NumericalError(fmt::format("mass_balance_step: negative phase mass flow at face {} (gas={}, liq={})",
                                             k, f.gas[k], f.liq[k]));
    }
    return f;
}

double momentum_gradient(double xi, double rho_mix, double u_mix, double diameter, double inclination,
                         double gravity) {
    return 2.0 * xi * rho_mix * u_mix * std::abs(u_mix) / diameter + rho_mix * gravity * std::sin(inclination);
}

std::vector<double> momentum_step(std::span<const double> rho_mix_faces, std::span<const double> u_mix_faces,
                                  std::span<const double> xi_cells, const PipeConfig& config) {
    const std::size_t n = xi_cells.size();
    if (n < 1 || u_mix_faces.size() != n + 1 || rho_mix_faces.size() != n + 1)
        throw InputDomainError("momentum_step: inconsistent field sizes");
    std::vector<double> g(n + 1);
    for (std::size_t f = 0; f <= n; ++f) {
        const double xi = f == 0 ? xi_cells[0] : (f == n ? xi_cells[n - 1] : 0.5 * (xi_cells[f - 1] + xi_cells[f]));
        g[f] = momentum_gradient(xi, rho_mix_faces[f], u_mix_faces[f], config.diameter, config.inclination,
                                 config.gravity);
    }
    return g;
}

// ---------------------------------------------------------------------------
// SIMPLE
// ---------------------------------------------------------------------------

namespace {

// Fields derived from a pressure guess (steps 2-5 of the procedure).
class FieldEvaluator {
public:
    FieldEvaluator(const PipeConfig& config, const BoundaryConditions& bc, const FluidSpec& spec,
                   const SolverSettings& settings, const FrictionVector* override_xi)
        : config_(config), bc_(bc), spec_(spec), settings_(settings), override_(override_xi),
          n_(static_cast<std::size_t>(config.n_cells)), props_(n_ + 2), r_so_(n_ + 1) {}

    // Evaluates everything at (p_inlet, p_cells, p_out) into s and returns the
    // momentum gradient per face.
    std::vector<double> evaluate(double p_inlet, std::span<const double> p_cells, GridState& s) {
        // Stations: 0 is the inlet face, 1..n the cells, n+1 the outlet face.
        const double t = bc_.t_in;
        for (std::size_t k = 0; k < n_ + 2; ++k) {
            const double pk = k == 0 ? p_inlet : (k == n_ + 1 ? bc_.p_out : p_cells[k - 1]);
            if (!(pk > 0.0) || !std::isfinite(pk)) {
                throw NumericalError(k == 0 ? fmt::format("simple_solve: non-physical inlet pressure {} Pa", pk)
                                            : fmt::format("simple_solve: non-physical pressure {} Pa in cell {}", pk,
                                                          k - 1));
            }
            props_[k] = fluid::evaluate(spec_, {pk, t});
            if (settings_.closure.emulsion_k != 0.0)
                props_[k].mu_liq *= 1.0 + settings_.closure.emulsion_k * props_[k].water_fraction;
            s.warnings |= props_[k].warnings;
        }
        for (std::size_t f = 0; f <= n_; ++f) r_so_[f] = props_[f].r_so;

        auto fluxes = mass_balance_step(r_so_, spec_, bc_);
        const double area = config_.area();
        const double bias = 1.0 + settings_.closure.density_bias;
        const auto& slip_cfg = settings_.closure.slip;

        s.u_gas.resize(n_ + 1);
        s.u_liq.resize(n_ + 1);
        s.u_mix.resize(n_ + 1);
        s.rho_mix_face.resize(n_ + 1);
        for (std::size_t f = 0; f <= n_; ++f) {
            // Phase densities interpolated linearly from the cell centres onto
            // interior faces; boundary faces are evaluated at their own pressure.
            fluid::BlackOilProps face;
            if (f == 0 || f == n_) {
                face = props_[f == 0 ? 0 : n_ + 1];
            } else {
                face.rho_gas = 0.5 * (props_[f].rho_gas + props_[f + 1].rho_gas);
                face.rho_liq = 0.5 * (props_[f].rho_liq + props_[f + 1].rho_liq);
            }
            const SuperficialVelocities j{fluxes.gas[f] / (face.rho_gas * area), fluxes.liq[f] / (face.rho_liq * area)};
            const auto slip = slip_closure(j, face, config_, slip_cfg);
            s.u_gas[f] = slip.u_gas;
            s.u_liq[f] = slip.u_liq;
            s.u_mix[f] = j.gas + j.liq;
            s.rho_mix_face[f] = (slip.alpha_g * face.rho_gas + (1.0 - slip.alpha_g) * face.rho_liq) * bias;
        }

        s.alpha_g.resize(n_);
        s.rho_mix.resize(n_);
        s.mu_mix.resize(n_);
        s.re_mix.resize(n_);
        s.r_so.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto& pr = props_[i + 1];
            const double m_gas = 0.5 * (fluxes.gas[i] + fluxes.gas[i + 1]);
            const double m_liq = 0.5 * (fluxes.liq[i] + fluxes.liq[i + 1]);
            const SuperficialVelocities j{m_gas / (pr.rho_gas * area), m_liq / (pr.rho_liq * area)};
            s.alpha_g[i] = slip_closure(j, pr, config_, slip_cfg).alpha_g;
            const auto mix = fluid::mixture_props(s.alpha_g[i], pr.rho_gas, pr.rho_liq, pr.mu_gas, pr.mu_liq);
            s.rho_mix[i] = mix.rho_mix * bias;
            s.mu_mix[i] = mix.mu_mix;
            s.r_so[i] = pr.r_so;
            s.re_mix[i] = reynolds(s.rho_mix[i], j.gas + j.liq, config_.diameter, s.mu_mix[i]);
        }
        s.mass_flow_gas = std::move(fluxes.gas);
        s.mass_flow_liq = std::move(fluxes.liq);

        if (override_ != nullptr) {
            s.friction = *override_;
        } else {
            s.friction.xi.resize(n_);
            const auto& mult = settings_.closure.friction_multiplier;
            for (std::size_t i = 0; i < n_; ++i) {
                const double base = s.re_mix[i] > 0.0 ? colebrook_friction(s.re_mix[i], config_.roughness,
                                                                           config_.diameter)
                                                      : 16.0 / colebrook_limits::laminar_re;
                s.friction.xi[i] = mult.empty() ? base : base * mult[i];
            }
        }
        return momentum_step(s.rho_mix_face, s.u_mix, s.friction.xi, config_);
    }

private:
    const PipeConfig& config_;
    const BoundaryConditions& bc_;
    const FluidSpec& spec_;
    const SolverSettings& settings_;
    const FrictionVector* override_;
    std::size_t n_;
    std::vector<BlackOilProps> props_;
    std::vector<double> r_so_;
};

// Back-substitution of the momentum balance from the outlet (step 6).
void march_pressure(std::span<const double> gradient, const PipeConfig& config, double p_out,
                    std::vector<double>& p_cells, double& p_inlet) {
    const std::size_t n = p_cells.size();
    const double dx = config.dx();
    p_cells[n - 1] = p_out + gradient[n] * 0.5 * dx;
    for (std::size_t f = n - 1; f >= 1; --f) p_cells[f - 1] = p_cells[f] + gradient[f] * dx;
    p_inlet = p_cells[0] + gradient[0] * 0.5 * dx;
}

// Homogeneous single pass from the outlet: each step evaluates the no-slip
// mixture at the downstream pressure and extrapolates upstream.
void initial_pressure(const PipeConfig& config, const BoundaryConditions& bc, const FluidSpec& spec,
                      const SolverSettings& settings, const FrictionVector* override_xi, std::vector<double>& p_cells,
                      double& p_inlet) {
    const std::size_t n = p_cells.size();
    const double dx = config.dx();
    const double q_oil = bc.q_liq_std * (1.0 - spec.wc);
    const double m_total =
        spec.rho_oil_std * q_oil + spec.rho_water_std * bc.q_liq_std * spec.wc + spec.rho_gas_std * q_oil * spec.gor;
    auto gradient_at = [&](double p, std::size_t cell) {
        const auto pr = fluid::evaluate(spec, {p, bc.t_in});
        const double m_gas = spec.rho_gas_std * q_oil * (spec.gor - pr.r_so);
        const double j = (m_gas / pr.rho_gas + (m_total - m_gas) / pr.rho_liq) / config.area();
        const double alpha = (m_gas / pr.rho_gas) / (j * config.area());
        const auto mix = fluid::mixture_props(std::clamp(alpha, 0.0, 1.0), pr.rho_gas, pr.rho_liq, pr.mu_gas, pr.mu_liq);
        const double rho = mix.rho_mix * (1.0 + settings.closure.density_bias);
        const double xi = override_xi ? override_xi->xi[cell]
                                      : colebrook_friction(std::max(reynolds(rho, j, config.diameter, mix.mu_mix), 1.0),
                                                           config.roughness, config.diameter);
        return momentum_gradient(xi, rho, j, config.diameter, config.inclination, config.gravity);
    };
    const double p = bc.p_out;
    p_cells[n - 1] = p + gradient_at(p, n - 1) * 0.5 * dx;
    for (std::size_t i = n - 1; i >= 1; --i)
        p_cells[i - 1] = std::max(p_cells[i] + gradient_at(p_cells[i], i - 1) * dx, 0.5 * bc.p_out);
    p_inlet = std::max(p_cells[0] + gradient_at(p_cells[0], 0) * 0.5 * dx, 0.5 * bc.p_out);
}

} // namespace

GridState simple_solve(const PipeConfig& config, const BoundaryConditions& bc, const FluidSpec& spec,
                       const SolverSettings& settings, const FrictionVector* friction_override,
                       const GridState* warm_start) {
    config.validate();
    bc.validate();
    spec.validate();
    settings.validate();
    const auto n = static_cast<std::size_t>(config.n_cells);
    if (friction_override != nullptr) friction_override->validate(n);
    if (!settings.closure.friction_multiplier.empty() && settings.closure.friction_multiplier.size() != n)
        throw InputDomainError(fmt::format("simple_solve: friction_multiplier has {} entries for {} cells",
                                           settings.closure.friction_multiplier.size(), n));

    GridState s;
    std::vector<double> p(n);
    double p_in = 0.0;
    if (warm_start != nullptr && warm_start->p.size() == n && warm_start->p_face.size() == n + 1) {
        p = warm_start->p;
        p_in = warm_start->p_face[0];
    } else {
        initial_pressure(config, bc, spec, settings, friction_override, p, p_in);
    }

    FieldEvaluator fields(config, bc, spec, settings, friction_override);
    std::vector<double> p_star(n);
    double p_in_star = 0.0;
    s.residual_trace.reserve(static_cast<std::size_t>(settings.max_iter));

    for (int it = 1; it <= settings.max_iter; ++it) {
        const auto gradient = fields.evaluate(p_in, p, s);
        march_pressure(gradient, config, bc.p_out, p_star, p_in_star);

        double residual = std::abs(p_in_star - p_in);
        for (std::size_t i = 0; i < n; ++i) residual = std::max(residual, std::abs(p_star[i] - p[i]));
        if (!std::isfinite(residual)) {
            throw NumericalError(fmt::format("simple_solve: non-finite pressure update at iteration {}", it), residual,
                                 s.residual_trace);
        }
        s.residual_trace.push_back(residual);
        s.iterations = it;
        s.residual = residual;

        if (residual < settings.tol_pressure) {
            p = p_star;
            p_in = p_in_star;
            fields.evaluate(p_in, p, s);
            s.converged = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) p[i] += settings.relax * (p_star[i] - p[i]);
        p_in += settings.relax * (p_in_star - p_in);
    }

    if (!s.converged) {
        throw NumericalError(fmt::format("simple_solve: no convergence in {} iterations (last change {:.6g} Pa)",
                                         settings.max_iter, s.residual),
                             s.residual, s.residual_trace);
    }
    s.p = std::move(p);
    s.p_face.assign(n + 1, 0.0);
    s.p_face[0] = p_in;
    for (std::size_t f = 1; f < n; ++f) s.p_face[f] = 0.5 * (s.p[f - 1] + s.p[f]);
    s.p_face[n] = bc.p_out;
    return s;
}

double inlet_pressure(const GridState& state) {
    if (!state.converged || state.p_face.empty())
        throw NumericalError("inlet_pressure: state is not converged", state.residual, state.residual_trace);
    return state.p_face.front();
}

std::vector<double> momentum_residuals(const GridState& state, const PipeConfig& config) {
    const std::size_t n = state.p.size();
    if (n < 1 || state.p_face.size() != n + 1)
        throw InputDomainError("momentum_residuals: state has no pressure field");
    const auto g = momentum_step(state.rho_mix_face, state.u_mix, state.friction.xi, config);
    const double dx = config.dx();
    std::vector<double> r(n + 1);
    r[0] = (state.p_face[0] - state.p[0]) / (0.5 * dx) - g[0];
    for (std::size_t f = 1; f < n; ++f) r[f] = (state.p[f - 1] - state.p[f]) / dx - g[f];
    r[n] = (state.p[n - 1] - state.p_face[n]) / (0.5 * dx) - g[n];
    return r;
}

void write_profile_csv(std::ostream& out, const GridState& state, const PipeConfig& config) {
    const std::size_t n = state.p.size();
    if (state.u_gas.size() != n + 1 || state.friction.xi.size() != n)
        throw InputDomainError("write_profile_csv: incomplete state");
    const double dx = config.dx();
    out << "x,p,alpha_g,u_gas,u_liq,re_mix,xi\n";
    for (std::size_t i = 0; i < n; ++i) {
        // Cell-centred velocities are face averages.
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", (i + 0.5) * dx, state.p[i],
                           state.alpha_g[i], 0.5 * (state.u_gas[i] + state.u_gas[i + 1]),
                           0.5 * (state.u_liq[i] + state.u_liq[i + 1]), state.re_mix[i], state.friction.xi[i]);
    }
}

} // namespace hybridflow::flow
