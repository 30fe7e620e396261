//! Linearly dynamically accessible perturbations generated by a phase-space
//! function `h`, and the identities they satisfy.
//!
//! From a generator `h` the perturbation is
//!
//!   `delta_f = e^{-lambda0} {h, f0}
//!              + 4 pi gamma^3 r e^{2 mu0 + lambda0} phi'(E) (w^2/<v>) I_h(r)`
//!
//! with `I_h(r) = int phi'(E) h w dv`, and the induced metric variation is
//! `delta_lambda = 4 pi r gamma^2 e^{mu0 + lambda0} I_h(r)`. Substituting one
//! into the other gives the equivalent factored form
//! `delta_f = phi'(E) (e^{-lambda0} {h, E} + gamma e^{mu0} delta_lambda w^2/<v>)`
//! used by every analytic code path.

use rayon::prelude::*;

use crate::eos::CasimirSpec;
use crate::error::{CoreError, Result};
use crate::expr::{GeneratorExpr, Parity};
use crate::phase_space::{poisson_bracket, InterpOrder, KineticField, PhaseGrid};
use crate::quad::{breaks_uniform, PaneledAxis};
use crate::steady::SteadyState;
use crate::support::{momentum_accumulate, phase_accumulate, PointData, SupportQuad};
use std::sync::Arc;

/// A generating function: always sampled on a grid, with the closed form
/// kept alongside when one exists.
#[derive(Debug, Clone)]
pub struct Generator {
    pub field: KineticField,
    pub expr: Option<GeneratorExpr>,
    pub parity: Parity,
}

impl Generator {
    pub fn from_expr(expr: GeneratorExpr, grid: Arc<PhaseGrid>) -> Generator {
        let field = KineticField::from_fn(grid, InterpOrder::Cubic, |r, w, l| expr.eval(r, w, l));
        let parity = expr.parity();
        Generator {
            field,
            expr: Some(expr),
            parity,
        }
    }

    pub fn from_field(field: KineticField) -> Generator {
        let (even, odd) = field.even_odd_split();
        let scale = field.max_abs().max(1e-300);
        let parity = match (
            even.max_abs() > 1e-13 * scale,
            odd.max_abs() > 1e-13 * scale,
        ) {
            (false, false) => Parity::Zero,
            (true, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (true, true) => Parity::Mixed,
        };
        Generator {
            field,
            expr: None,
            parity,
        }
    }
}

/// Split a generator into even and odd parts in `w`; exact in both
/// representations.
pub fn even_odd_split(h: &Generator) -> (Generator, Generator) {
    let (even_f, odd_f) = h.field.even_odd_split();
    match &h.expr {
        Some(e) => {
            let (ee, eo) = e.split_parity();
            let mut even = Generator::from_field(even_f);
            even.expr = Some(ee);
            even.parity = Parity::Even;
            let mut odd = Generator::from_field(odd_f);
            odd.expr = Some(eo);
            odd.parity = Parity::Odd;
            (even, odd)
        }
        None => {
            let mut even = Generator::from_field(even_f);
            even.parity = Parity::Even;
            let mut odd = Generator::from_field(odd_f);
            odd.parity = Parity::Odd;
            (even, odd)
        }
    }
}

/// `I_h(r) = int phi'(E) h w dv` for a closed-form generator.
pub fn generator_momentum_weight(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    r: f64,
) -> f64 {
    let [v] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
        acc[0] += scale * pd.dphi * h.eval(pd.r, pd.w, pd.l) * pd.w;
    });
    v
}

/// `delta_lambda(r) = 4 pi r gamma^2 e^{mu0 + lambda0} I_h(r)`; vanishes at
/// the center and outside the support.
pub fn delta_lambda_at(state: &SteadyState, spec: &SupportQuad, h: &GeneratorExpr, r: f64) -> f64 {
    if r <= 0.0 || r >= state.support_radius() {
        return 0.0;
    }
    let g = state.gamma;
    let coeff =
        4.0 * std::f64::consts::PI * r * g * g * (state.mu0(r) + state.lambda0(r)).exp();
    coeff * generator_momentum_weight(state, spec, h, r)
}

/// `delta_lambda` sampled on a list of radii (parallel).
pub fn delta_lambda_profile(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    radii: &[f64],
) -> Vec<f64> {
    radii
        .par_iter()
        .map(|&r| delta_lambda_at(state, spec, h, r))
        .collect()
}

/// The factored amplitude `G` with `delta_f = phi'(E) G`:
/// `G = e^{-lambda0} {h, E} + gamma e^{mu0} delta_lambda w^2 / <v>`.
pub fn reduced_amplitude(pd: &PointData, h: &GeneratorExpr, delta_lambda_r: f64) -> f64 {
    let (_, h_r, h_w) = h.eval_with_partials(pd.r, pd.w, pd.l);
    let (e_r, e_w) = pd.energy_partials();
    let bracket_h_e = h_r * e_w - h_w * e_r;
    bracket_h_e / pd.exp_lam
        + pd.gamma * pd.exp_mu * delta_lambda_r * pd.w * pd.w / pd.vbar
}

/// Radial moments of an accessible perturbation, by adapted quadrature.
#[derive(Debug, Clone)]
pub struct PerturbationMoments {
    pub r: Vec<f64>,
    pub delta_rho: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub delta_j: Vec<f64>,
    pub delta_lambda: Vec<f64>,
}

/// A perturbation with its induced fields, sampled on a phase grid.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub delta_f: KineticField,
    /// `delta_f / phi'(E)`, the amplitude entering the weighted energy norm
    pub reduced: KineticField,
    pub h_parity: Parity,
    /// radial profiles on the phase grid's radial nodes
    pub r: Vec<f64>,
    pub delta_lambda: Vec<f64>,
    pub delta_mu: Vec<f64>,
    pub delta_mu_prime: Vec<f64>,
    pub delta_rho: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub delta_j: Vec<f64>,
}

/// Build the accessible perturbation generated by a closed-form `h` on the
/// given grid. All radial profiles use adapted quadrature at the grid's
/// radial nodes.
pub fn delta_f_from_h(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    grid: Arc<PhaseGrid>,
) -> Result<Perturbation> {
    let r_nodes = grid.r.nodes.clone();
    let dl = delta_lambda_profile(state, spec, h, &r_nodes);

    let rows: Vec<(f64, f64, f64)> = r_nodes
        .par_iter()
        .zip(dl.par_iter())
        .map(|(&r, &dlr)| {
            let [drho, dp, dj] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
                let df = pd.dphi * reduced_amplitude(pd, h, dlr);
                acc[0] += scale * pd.vbar * df;
                acc[1] += scale * pd.w * pd.w / pd.vbar * df;
                acc[2] += scale * pd.w * df;
            });
            (drho, dp, dj)
        })
        .collect();
    let delta_rho: Vec<f64> = rows.iter().map(|t| t.0).collect();
    let delta_p: Vec<f64> = rows.iter().map(|t| t.1).collect();
    let delta_j: Vec<f64> = rows.iter().map(|t| t.2).collect();

    let (delta_mu, delta_mu_prime) =
        solve_metric_time_component(state, &grid.r.nodes, &grid.r.as_paneled(), &dl, &delta_p);

    // sample delta_f and the reduced amplitude on the grid
    let nr = grid.r.len();
    let nw = grid.w.len();
    let nl = grid.l.len();
    let mut delta_f = KineticField::zeros(grid.clone(), InterpOrder::Cubic);
    let mut reduced = KineticField::zeros(grid.clone(), InterpOrder::Cubic);
    for ir in 0..nr {
        let r = grid.r.nodes[ir];
        let pd_template = crate::support::RadialData::at(state, r);
        for iw in 0..nw {
            let w = grid.w.nodes[iw];
            for il in 0..nl {
                let l = grid.l.nodes[il];
                let vbar = state.vbar(r, w, l);
                let e = pd_template.exp_mu * vbar;
                let dphi = state.dphi_de(e);
                let idx = delta_f.idx(ir, iw, il);
                if dphi == 0.0 {
                    continue;
                }
                let pd = PointData {
                    r,
                    w,
                    l,
                    u: (w * w + l / (r * r)).sqrt(),
                    xi: 0.0,
                    vbar,
                    e,
                    dphi,
                    exp_mu: pd_template.exp_mu,
                    exp_lam: pd_template.exp_lam,
                    mu_p: pd_template.mu_p,
                    lam_p: pd_template.lam_p,
                    nu_p: pd_template.nu_p,
                    mu_pp: pd_template.mu_pp,
                    gamma: state.gamma,
                };
                let g = reduced_amplitude(&pd, h, dl[ir]);
                reduced.values_mut()[idx] = g;
                delta_f.values_mut()[idx] = dphi * g;
            }
        }
    }

    Ok(Perturbation {
        delta_f,
        reduced,
        h_parity: h.parity(),
        r: r_nodes,
        delta_lambda: dl,
        delta_mu,
        delta_mu_prime,
        delta_rho,
        delta_p,
        delta_j,
    })
}

/// The metric time component induced by `(delta_lambda, delta_p)`:
/// `delta_mu'(r) = 4 pi gamma^2 r e^{2 lambda0} delta_p
///                + delta_lambda (2 r mu0' + 1) / r`,
/// integrated inward from the support radius where accessible fields vanish.
pub fn solve_metric_time_component(
    state: &SteadyState,
    r_nodes: &[f64],
    axis: &PaneledAxis,
    delta_lambda: &[f64],
    delta_p: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let gamma = state.gamma;
    let pi = std::f64::consts::PI;
    let dmu_p: Vec<f64> = r_nodes
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let e2l = (2.0 * state.lambda0(r)).exp();
            4.0 * pi * gamma * gamma * r * e2l * delta_p[i]
                + delta_lambda[i] * (2.0 * r * state.mu0_prime(r) + 1.0) / r
        })
        .collect();
    let prefix = axis.prefix_integral(&dmu_p);
    let total = *prefix.last().unwrap();
    // delta_mu(r) = -int_r^{outer} delta_mu' ds, zero at the outer edge
    let dmu: Vec<f64> = prefix.iter().map(|&v| v - total).collect();
    (dmu, dmu_p)
}

/// `delta_lambda` recovered from the mass perturbation route:
/// `delta_lambda(r) = gamma e^{2 lambda0} (4 pi / r) int_0^r s^2 delta_rho ds`.
///
/// Evaluated on a dedicated radial axis from the center to the support
/// radius; `delta_rho` comes from the already-built perturbation formula.
pub fn delta_lambda_from_rho(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    n_panels: usize,
    order: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r_sup = state.support_radius();
    let axis = PaneledAxis::lobatto(&breaks_uniform(0.0, r_sup, n_panels), order);
    let dl_direct = delta_lambda_profile(state, spec, h, &axis.nodes);
    let integrand: Vec<f64> = axis
        .nodes
        .par_iter()
        .zip(dl_direct.par_iter())
        .map(|(&r, &dlr)| {
            if r <= 0.0 {
                return 0.0;
            }
            let [drho] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
                acc[0] += scale * pd.vbar * pd.dphi * reduced_amplitude(pd, h, dlr);
            });
            r * r * drho
        })
        .collect();
    let prefix = axis.prefix_integral(&integrand);
    let from_rho: Vec<f64> = axis
        .nodes
        .iter()
        .zip(&prefix)
        .map(|(&r, &acc)| {
            if r <= 0.0 {
                0.0
            } else {
                state.gamma
                    * (2.0 * state.lambda0(r)).exp()
                    * (4.0 * std::f64::consts::PI / r)
                    * acc
            }
        })
        .collect();
    (axis.nodes.clone(), from_rho, dl_direct)
}

/// Total mass perturbation `int_0^R s^2 delta_rho ds`, relative to the
/// absolute-value integral; vanishes for accessible perturbations.
pub fn relative_mass_perturbation(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
) -> f64 {
    let r_sup = state.support_radius();
    let axis = PaneledAxis::lobatto(&breaks_uniform(0.0, r_sup, 32), 8);
    let dl = delta_lambda_profile(state, spec, h, &axis.nodes);
    let rows: Vec<(f64, f64)> = axis
        .nodes
        .par_iter()
        .zip(dl.par_iter())
        .map(|(&r, &dlr)| {
            if r <= 0.0 {
                return (0.0, 0.0);
            }
            let [drho] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
                acc[0] += scale * pd.vbar * pd.dphi * reduced_amplitude(pd, h, dlr);
            });
            (r * r * drho, (r * r * drho).abs())
        })
        .collect();
    let signed: f64 = rows
        .iter()
        .zip(&axis.weights)
        .map(|((v, _), w)| v * w)
        .sum();
    let absolute: f64 = rows
        .iter()
        .zip(&axis.weights)
        .map(|((_, a), w)| a * w)
        .sum();
    signed.abs() / absolute.max(1e-300)
}

/// The perturbation formula evaluated by direct grid finite differences:
/// `e^{-lambda0} {h, f0} + (coupling term)`, with both brackets numeric.
/// Used as the independent cross-check of the analytic construction.
pub fn delta_f_direct_bracket(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &Generator,
) -> Result<KineticField> {
    let grid = h.field.grid().clone();
    let f0 = KineticField::from_fn(grid.clone(), InterpOrder::Cubic, |r, w, l| {
        state.f0_at(r, w, l)
    });
    let bracket = poisson_bracket(&h.field, &f0)?;
    let r_nodes = &grid.r.nodes;
    let dl: Vec<f64> = match &h.expr {
        Some(e) => delta_lambda_profile(state, spec, e, r_nodes),
        None => {
            return Err(CoreError::Parameter(
                "direct-bracket route needs a closed-form generator".into(),
            ))
        }
    };
    let mut out = KineticField::zeros(grid.clone(), InterpOrder::Cubic);
    let gamma = state.gamma;
    for ir in 0..grid.r.len() {
        let r = r_nodes[ir];
        let exp_lam = state.lambda0(r).exp();
        let exp_mu = state.mu0(r).exp();
        for iw in 0..grid.w.len() {
            let w = grid.w.nodes[iw];
            for il in 0..grid.l.len() {
                let l = grid.l.nodes[il];
                let e = state.particle_energy(r, w, l);
                let dphi = state.dphi_de(e);
                let idx = out.idx(ir, iw, il);
                let vbar = state.vbar(r, w, l);
                out.values_mut()[idx] = bracket.at(ir, iw, il) / exp_lam
                    + gamma * exp_mu * dphi * dl[ir] * w * w / vbar;
            }
        }
    }
    Ok(out)
}

/// Relative residual of the first-variation constraint
/// `iint e^{lambda0} (chi'(f0) delta_f + chi(f0) delta_lambda) dv dx = 0`,
/// normalized by the larger of the two contributions.
pub fn casimir_constraint_residual(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    chi: &CasimirSpec,
) -> f64 {
    let dl = delta_lambda_profile(state, spec, h, &spec.radial.nodes);
    let [t1, t2] = phase_accumulate(state, spec, |pd, ir, scale, acc| {
        let f0 = state.f0_of_e(pd.e);
        let df = pd.dphi * reduced_amplitude(pd, h, dl[ir]);
        acc[0] += scale * pd.exp_lam * chi.chi_prime(f0) * df;
        acc[1] += scale * pd.exp_lam * chi.chi(f0) * dl[ir];
    });
    (t1 + t2).abs() / t1.abs().max(t2.abs()).max(1e-300)
}

/// Same residual for an explicit (not necessarily accessible) `delta_f`
/// given pointwise, with `delta_lambda` built from its own mass integral.
pub fn casimir_constraint_residual_of(
    state: &SteadyState,
    spec: &SupportQuad,
    delta_f: &(impl Fn(&PointData) -> f64 + Sync),
    chi: &CasimirSpec,
) -> f64 {
    // delta_lambda from the cumulative mass route
    let axis = PaneledAxis::lobatto(&breaks_uniform(0.0, state.support_radius(), 32), 8);
    let integrand: Vec<f64> = axis
        .nodes
        .par_iter()
        .map(|&r| {
            if r <= 0.0 {
                return 0.0;
            }
            let [drho] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
                acc[0] += scale * pd.vbar * delta_f(pd);
            });
            r * r * drho
        })
        .collect();
    let prefix = axis.prefix_integral(&integrand);
    let dl_on_spec: Vec<f64> = spec
        .radial
        .nodes
        .iter()
        .map(|&r| {
            if r <= 0.0 {
                return 0.0;
            }
            let acc = crate::quad::lagrange_interp(&axis.nodes, &prefix, r, 6);
            state.gamma
                * (2.0 * state.lambda0(r)).exp()
                * (4.0 * std::f64::consts::PI / r)
                * acc
        })
        .collect();
    let [t1, t2] = phase_accumulate(state, spec, |pd, ir, scale, acc| {
        let f0 = state.f0_of_e(pd.e);
        acc[0] += scale * pd.exp_lam * chi.chi_prime(f0) * delta_f(pd);
        acc[1] += scale * pd.exp_lam * chi.chi(f0) * dl_on_spec[ir];
    });
    (t1 + t2).abs() / t1.abs().max(t2.abs()).max(1e-300)
}

/// Per-radius identity between the momentum average of `chi(f0)` and the
/// weighted average forced by integration by parts in the energy variable:
/// `int chi(f0) dv = -gamma e^{mu0} int chi'(f0) phi'(E) (w^2/<v>) dv`.
pub fn chi_reduction_residual(
    state: &SteadyState,
    spec: &SupportQuad,
    chi: &CasimirSpec,
    r: f64,
) -> f64 {
    let gamma = state.gamma;
    let [lhs, rhs_raw] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
        let f0 = state.f0_of_e(pd.e);
        acc[0] += scale * chi.chi(f0);
        acc[1] += scale * chi.chi_prime(f0) * pd.dphi * pd.w * pd.w / pd.vbar;
    });
    let rhs = -gamma * state.mu0(r).exp() * rhs_raw;
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
}

/// Report of the steady-state identity suite: the pressure-moment identity
/// (two closed-form routes), the generator Cauchy-Schwarz bound on sampled
/// generators, and the energy-bracket closed forms against numeric brackets.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IdentityReport {
    /// max relative error of `int phi' w^2 dv` vs `-(e^{-mu0}/gamma)(gamma p0 + rho0)`
    pub pressure_moment_density_route: f64,
    /// max relative error vs the metric-derivative route
    pub pressure_moment_metric_route: f64,
    /// min normalized margin of the Cauchy-Schwarz bound over the samples
    pub cauchy_schwarz_min_margin: f64,
    /// max relative error of the `{E, rw}` closed form vs the numeric bracket
    pub bracket_first_error: f64,
    /// same for the nested bracket `{E, {E, rw}}`
    pub bracket_second_error: f64,
    /// observed refinement order of the numeric brackets
    pub bracket_observed_order: f64,
}

/// The pressure-moment identity, checked at one radius. Returns the relative
/// errors of the two closed-form routes.
pub fn pressure_moment_identity_at(state: &SteadyState, spec: &SupportQuad, r: f64) -> (f64, f64) {
    let gamma = state.gamma;
    let [quad_route] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
        acc[0] += scale * pd.dphi * pd.w * pd.w;
    });
    let emu = state.mu0(r).exp();
    let density_route = -(gamma * state.p0(r) + state.rho0(r)) / (gamma * emu);
    let metric_route = -(-2.0 * state.lambda0(r) - state.mu0(r)).exp()
        / (4.0 * std::f64::consts::PI * gamma * gamma * r)
        * (state.lambda0_prime(r) + state.mu0_prime(r));
    let scale = quad_route.abs().max(1e-300);
    (
        (quad_route - density_route).abs() / scale,
        (quad_route - metric_route).abs() / scale,
    )
}

/// Cauchy-Schwarz bound for the generator weight:
/// `(int |phi'| w h dv)^2 <= (e^{-2 lambda0 - mu0} / (4 pi gamma^2 r))
///  (lambda0' + mu0') int |phi'| h^2 dv`.
/// Returns `(lhs, rhs)`.
pub fn generator_weight_bound_at(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    r: f64,
) -> (f64, f64) {
    let [m1, m2] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
        let hv = h.eval(pd.r, pd.w, pd.l);
        acc[0] += scale * pd.abs_dphi() * pd.w * hv;
        acc[1] += scale * pd.abs_dphi() * hv * hv;
    });
    let gamma = state.gamma;
    let coeff = (-2.0 * state.lambda0(r) - state.mu0(r)).exp()
        / (4.0 * std::f64::consts::PI * gamma * gamma * r)
        * (state.lambda0_prime(r) + state.mu0_prime(r));
    (m1 * m1, coeff * m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::Polytrope;
    use crate::steady::{solve, SolverOptions};
    use approx::assert_abs_diff_eq;

    fn test_state() -> &'static SteadyState {
        use std::sync::OnceLock;
        static STATE: OnceLock<SteadyState> = OnceLock::new();
        STATE.get_or_init(|| {
            let eos = Arc::new(Polytrope::new(2.0).unwrap());
            solve(eos, 0.05, -0.2, &SolverOptions::default()).unwrap()
        })
    }

    fn grid_for(state: &SteadyState) -> Arc<PhaseGrid> {
        let r_sup = state.support_radius();
        let u0 = state.u_max_global();
        let l_max = {
            let mut m = 0.0f64;
            for i in 0..=40 {
                let r = r_sup * i as f64 / 40.0;
                let um = state.support_u_max(r);
                m = m.max(r * r * um * um);
            }
            m
        };
        PhaseGrid::build(
            (1e-6 * r_sup, r_sup),
            8,
            1.05 * u0,
            8,
            1.05 * l_max,
            6,
            6,
        )
        .unwrap()
    }

    #[test]
    fn even_generator_gives_zero_delta_lambda() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let h = GeneratorExpr::parse("1 w^2 + 0.5 r^2 L").unwrap();
        for frac in [0.2, 0.5, 0.8] {
            let r = frac * state.support_radius();
            assert_abs_diff_eq!(delta_lambda_at(&state, &spec, &h, r), 0.0, epsilon = 1e-18);
        }
    }

    #[test]
    fn zero_generator_gives_zero_perturbation() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let h = GeneratorExpr::default();
        let grid = grid_for(&state);
        let p = delta_f_from_h(&state, &spec, &h, grid).unwrap();
        assert_eq!(p.delta_f.max_abs(), 0.0);
        assert!(p.delta_lambda.iter().all(|&v| v == 0.0));
        assert!(p.delta_mu.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dual_route_delta_lambda_agrees() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let h = GeneratorExpr::parse("1 w + 0.3 r w L").unwrap();
        let (radii, from_rho, direct) = delta_lambda_from_rho(&state, &spec, &h, 24, 8);
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 0.0);
        for i in 0..radii.len() {
            assert_abs_diff_eq!(from_rho[i], direct[i], epsilon = 1e-8 * scale);
        }
    }

    #[test]
    fn mass_perturbation_vanishes() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let h = GeneratorExpr::parse("1 w + 0.2 w^3 + 0.1 r w L").unwrap();
        let rel = relative_mass_perturbation(&state, &spec, &h);
        assert!(rel < 1e-10, "relative mass perturbation {rel}");
    }

    #[test]
    fn constraint_residual_small_for_accessible() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let h = GeneratorExpr::parse("1 w + 0.5 r^2 w^3").unwrap();
        let chi = CasimirSpec::power(2);
        let res = casimir_constraint_residual(&state, &spec, &h, &chi);
        assert!(res < 1e-8, "constraint residual {res}");
    }

    #[test]
    fn constraint_residual_detects_non_accessible() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let chi = CasimirSpec::power(2);
        // delta_f = f0 preserves no Casimir: residual stays order one
        let res =
            casimir_constraint_residual_of(&state, &spec, &|pd| state.f0_of_e(pd.e), &chi);
        assert!(res > 1e-2, "non-accessible residual too small: {res}");
    }

    #[test]
    fn pressure_moment_identity_holds() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        for frac in [0.15, 0.4, 0.7, 0.9] {
            let (e1, e2) =
                pressure_moment_identity_at(state, &spec, frac * state.support_radius());
            assert!(e1 < 1e-9, "density route error {e1}");
            assert!(e2 < 1e-8, "metric route error {e2}");
        }
    }

    #[test]
    fn linearity_in_the_generator() {
        let state = test_state();
        let spec = SupportQuad::production(&state);
        let h1 = GeneratorExpr::parse("1 w").unwrap();
        let h2 = GeneratorExpr::parse("0.4 r w^3").unwrap();
        let combo = h1.scale_coef(2.0).add(&h2.scale_coef(-3.0));
        let r = 0.45 * state.support_radius();
        let a = delta_lambda_at(&state, &spec, &h1, r);
        let b = delta_lambda_at(&state, &spec, &h2, r);
        let c = delta_lambda_at(&state, &spec, &combo, r);
        assert_abs_diff_eq!(c, 2.0 * a - 3.0 * b, epsilon = 1e-13 * c.abs().max(1e-12));
    }
}
