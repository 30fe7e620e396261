//! The free energy of accessible perturbations, its splitting, coercivity
//! right-hand sides, and the quadratic expansion of the energy-Casimir
//! functional.
//!
//! For `delta_f = phi'(E) G` with
//! `G = e^{-lambda0} {h, E} + gamma e^{mu0} delta_lambda w^2/<v>`,
//!
//!   `A = 1/2 iint e^{lambda0} |phi'| G^2 dv dx
//!        - 1/(2 gamma) int_0^R e^{mu0-lambda0} (2 r mu0' + 1) delta_lambda^2 dr`.
//!
//! Expanding `G^2` splits `2A` into `A1 = A11 + A12` (the coercive part) and
//! `A2 = A21 + A22` (higher order in gamma), and the quotient `eta = h/(rw)`
//! splits `A11` into `U + V + W` via the product rule for the bracket.

use rayon::prelude::*;

use crate::eos::CasimirSpec;
use crate::error::{CoreError, Result};
use crate::expr::{GeneratorExpr, Parity};
use crate::perturb::{delta_lambda_profile, reduced_amplitude};
use crate::quad::{breaks_uniform, lagrange_interp, PaneledAxis};
use crate::steady::SteadyState;
use crate::support::{momentum_accumulate, phase_accumulate, SupportQuad};

/// Scalars of one energy evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    pub a: f64,
    pub a1: f64,
    pub a2: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    /// the two pieces of the mixed term `a21 = x + y`
    pub x: f64,
    pub y: f64,
    /// `iint |phi'| ((rw)^2 |{E, eta}|^2 + gamma^2 h^2)` (constant-free form)
    pub rhs_cstar_form: f64,
    /// `1/2 iint |phi'| (e^{-lambda0} (rw)^2 |{E, eta}|^2
    ///  + (gamma^2/4) e^{2 mu0 - lambda0} (nu0'/r) h^2)` (explicit constants)
    pub rhs_remark_form: f64,
    /// `1/2 iint e^{-lambda0} |phi'| |{E, h_plus}|^2` for the even part
    pub rhs_even_part: f64,
    /// `|2A - (A1 + A2)| / |2A|`
    pub split_identity_rel: f64,
    /// `|A11 - (U + V + W)| / |A11|`
    pub uvw_identity_rel: f64,
    /// measured best constant `A / rhs_cstar_form`
    pub coercivity_ratio: f64,
    /// `|A2| / (gamma * A1)`
    pub a2_over_gamma_a1: f64,
}

/// `A` for the perturbation generated by a closed-form `h`.
///
/// Quadratic in `h`; nonnegative for odd generators in the near-Newtonian
/// regime.
pub fn free_energy(state: &SteadyState, spec: &SupportQuad, h: &GeneratorExpr) -> f64 {
    let dl = delta_lambda_profile(state, spec, h, &spec.radial.nodes);
    free_energy_with(state, spec, h, &dl)
}

fn free_energy_with(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    dl: &[f64],
) -> f64 {
    let [t_g] = phase_accumulate(state, spec, |pd, ir, scale, acc| {
        let g = reduced_amplitude(pd, h, dl[ir]);
        acc[0] += scale * pd.exp_lam * pd.abs_dphi() * g * g;
    });
    0.5 * (t_g + a12_term(state, spec, dl))
}

/// `A12 = -(1/gamma) int e^{mu0 - lambda0} (2 r mu0' + 1) delta_lambda^2 dr`.
fn a12_term(state: &SteadyState, spec: &SupportQuad, dl: &[f64]) -> f64 {
    let radial = &spec.radial;
    let mut acc = 0.0;
    for (i, (&r, &wr)) in radial.nodes.iter().zip(&radial.weights).enumerate() {
        let coeff = (state.mu0(r) - state.lambda0(r)).exp() * (2.0 * r * state.mu0_prime(r) + 1.0);
        acc += wr * coeff * dl[i] * dl[i];
    }
    -acc / state.gamma
}

/// Full splitting report for an odd generator.
///
/// The headline value `a` and the split components are integrated on two
/// different adapted rules, so the interior identities compare genuinely
/// independent discretizations.
pub fn split(state: &SteadyState, spec: &SupportQuad, h: &GeneratorExpr) -> Result<EnergyReport> {
    if h.parity() != Parity::Odd {
        return Err(CoreError::Parity(
            "the U+V+W path needs a generator odd in w".into(),
        ));
    }
    let gamma = state.gamma;
    let a_quot = h.divided_by_w()?;

    // independent rule for the direct route
    let spec_direct = SupportQuad {
        radial: crate::quad::composite_gauss(
            &breaks_uniform(0.0, state.support_radius(), spec.radial.len() / spec_panel_hint(spec) + 7),
            11,
        ),
        xi: crate::quad::composite_gauss(&breaks_uniform(-1.0, 1.0, 3), 10),
        u_uniform: spec.u_uniform + 1,
        u_graded: spec.u_graded + 1,
        u_order: spec.u_order + 2,
    };
    let a = free_energy(state, &spec_direct, h);

    let dl = delta_lambda_profile(state, spec, h, &spec.radial.nodes);
    let a12 = a12_term(state, spec, &dl);

    let [a11, a21, a22, u_term, v_term, w_term, x_term, y_term, cstar, remark] =
        phase_accumulate(state, spec, |pd, ir, scale, acc| {
            let absd = pd.abs_dphi();
            let (h_val, h_r, h_w) = h.eval_with_partials(pd.r, pd.w, pd.l);
            let (e_r, e_w) = pd.energy_partials();
            let b_eh = e_r * h_w - e_w * h_r; // {E, h}
            let (a_val, a_r, a_w) = a_quot.eval_with_partials(pd.r, pd.w, pd.l);
            // r {E, eta} with eta = a / r
            let r_b_eta = e_r * a_w - e_w * (a_r - a_val / pd.r);
            let k = pd.bracket_e_rw();
            let (k_r, k_w) = pd.bracket_e_rw_partials();
            let m = pd.bracket_e_e_rw();

            acc[0] += scale * absd / pd.exp_lam * b_eh * b_eh;
            let w2v = pd.w * pd.w / pd.vbar;
            acc[1] += scale * (-2.0) * gamma * absd * b_eh * dl[ir] * pd.exp_mu * w2v;
            acc[2] += scale
                * gamma
                * gamma
                * absd
                * (2.0 * pd.exp_mu).exp_m1_like()
                * 0.0;
            // A22 written out directly
            acc[2] += scale
                * gamma
                * gamma
                * absd
                * (2.0 * pd.mu_of() + pd.lam_of()).exp()
                * pd.w.powi(4)
                / (pd.vbar * pd.vbar)
                * dl[ir]
                * dl[ir];

            // U, V, W
            let wu = pd.w * r_b_eta;
            acc[3] += scale * absd / pd.exp_lam * wu * wu;
            let q_w = (2.0 * a_val * a_w * pd.w * k + a_val * a_val * k
                + a_val * a_val * pd.w * k_w)
                / pd.r;
            let q_r = (2.0 * a_val * a_r * pd.w * k + a_val * a_val * pd.w * k_r) / pd.r
                - a_val * a_val * pd.w * k / (pd.r * pd.r);
            let b_eq = e_r * q_w - e_w * q_r;
            acc[4] += scale * absd / pd.exp_lam * b_eq;
            acc[5] -= scale * absd / pd.exp_lam * (a_val * a_val * pd.w / pd.r) * m;

            // X and Y pieces of A21
            let i_h = dl[ir]
                / (4.0 * std::f64::consts::PI * pd.r * gamma * gamma
                    * (pd.mu_of() + pd.lam_of()).exp());
            let c8 = -8.0 * std::f64::consts::PI * gamma.powi(3)
                * absd
                * (2.0 * pd.mu_of() + pd.lam_of()).exp();
            acc[6] += scale * c8 * (pd.r * pd.w * pd.w / pd.vbar) * (pd.w * r_b_eta / pd.w) * i_h
                * pd.w;
            acc[7] += scale * c8 * (pd.w / pd.vbar) * k * h_val * i_h;

            // coercivity right-hand sides for the odd generator
            acc[8] += scale * absd * (wu * wu + gamma * gamma * h_val * h_val);
            acc[9] += scale
                * 0.5
                * absd
                * (wu * wu / pd.exp_lam
                    + 0.25
                        * gamma
                        * gamma
                        * (2.0 * pd.mu_of() - pd.lam_of()).exp()
                        * (pd.nu_p / pd.r)
                        * h_val
                        * h_val);
        });

    let a1 = a11 + a12;
    let a2 = a21 + a22;
    let split_identity_rel = (2.0 * a - (a1 + a2)).abs() / (2.0 * a).abs().max(1e-300);
    let uvw_identity_rel = (a11 - (u_term + v_term + w_term)).abs() / a11.abs().max(1e-300);
    Ok(EnergyReport {
        a,
        a1,
        a2,
        a11,
        a12,
        a21,
        a22,
        u: u_term,
        v: v_term,
        w: w_term,
        x: x_term,
        y: y_term,
        rhs_cstar_form: cstar,
        rhs_remark_form: remark,
        rhs_even_part: 0.0,
        split_identity_rel,
        uvw_identity_rel,
        coercivity_ratio: if cstar != 0.0 { a / cstar } else { f64::NAN },
        a2_over_gamma_a1: if a1 != 0.0 {
            a2.abs() / (gamma * a1)
        } else {
            f64::NAN
        },
    })
}

fn spec_panel_hint(_spec: &SupportQuad) -> usize {
    10
}

/// Coercivity right-hand sides for a general generator: the odd part feeds
/// the constant-free and explicit-constant forms, the even part the
/// `{E, h_plus}` term.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoercivityRhs {
    pub cstar_form_odd: f64,
    pub remark_form_odd: f64,
    pub even_part: f64,
}

pub fn coercivity_rhs(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
) -> Result<CoercivityRhs> {
    let gamma = state.gamma;
    let (h_even, h_odd) = h.split_parity();
    let (cstar, remark) = if h_odd.terms.is_empty() {
        (0.0, 0.0)
    } else {
        let a_quot = h_odd.divided_by_w()?;
        let [c, r] = phase_accumulate(state, spec, |pd, _ir, scale, acc| {
            let absd = pd.abs_dphi();
            let (hv, _, _) = h_odd.eval_with_partials(pd.r, pd.w, pd.l);
            let (a_val, a_r, a_w) = a_quot.eval_with_partials(pd.r, pd.w, pd.l);
            let (e_r, e_w) = pd.energy_partials();
            let r_b_eta = e_r * a_w - e_w * (a_r - a_val / pd.r);
            let wu = pd.w * r_b_eta;
            acc[0] += scale * absd * (wu * wu + gamma * gamma * hv * hv);
            acc[1] += scale
                * 0.5
                * absd
                * (wu * wu / pd.exp_lam
                    + 0.25
                        * gamma
                        * gamma
                        * (2.0 * pd.mu_of() - pd.lam_of()).exp()
                        * (pd.nu_p / pd.r)
                        * hv
                        * hv);
        });
        (c, r)
    };
    let even_part = if h_even.terms.is_empty() {
        0.0
    } else {
        let [e] = phase_accumulate(state, spec, |pd, _ir, scale, acc| {
            let (_, h_r, h_w) = h_even.eval_with_partials(pd.r, pd.w, pd.l);
            let (e_r, e_w) = pd.energy_partials();
            let b = e_r * h_w - e_w * h_r;
            acc[0] += scale * 0.5 * pd.abs_dphi() / pd.exp_lam * b * b;
        });
        e
    };
    Ok(CoercivityRhs {
        cstar_form_odd: cstar,
        remark_form_odd: remark,
        even_part,
    })
}

/// Pointwise smallness factor of the bracket bound:
/// `1 - gamma (8 pi r^2 <v>^2 e^{2 lambda0} (rho0 + gamma p0)
///            + r <v>^2 nu0' + 2 |v|^2)`.
pub fn bracket_positivity_factor(state: &SteadyState, r: f64, u: f64) -> f64 {
    let gamma = state.gamma;
    let v2 = 1.0 + gamma * u * u;
    let e2l = (2.0 * state.lambda0(r)).exp();
    1.0 - gamma
        * (8.0 * std::f64::consts::PI * r * r * v2 * e2l * (state.rho0(r) + gamma * state.p0(r))
            + r * v2 * state.nu0_prime(r)
            + 2.0 * u * u)
}

/// Minimum of the smallness factor over the support, with the radial profile
/// of per-radius minima.
pub fn bracket_positivity_margin(state: &SteadyState, nr: usize, nu: usize) -> (Vec<(f64, f64)>, f64) {
    let r_sup = state.support_radius();
    let mut profile = Vec::with_capacity(nr);
    let mut global = f64::INFINITY;
    for i in 1..=nr {
        let r = r_sup * i as f64 / (nr as f64 + 1.0);
        let um = state.support_u_max(r);
        let mut local = f64::INFINITY;
        for j in 0..=nu {
            let u = um * j as f64 / nu as f64;
            local = local.min(bracket_positivity_factor(state, r, u));
        }
        profile.push((r, local));
        global = global.min(local);
    }
    (profile, global)
}

/// Expansion check of the energy-Casimir functional about the steady state.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExpansionReport {
    pub epsilons: Vec<f64>,
    /// `H_C(f0 + eps delta_f) - H_C(f0)`
    pub first_order: Vec<f64>,
    /// remainder after subtracting `eps^2 A`
    pub remainders: Vec<f64>,
    pub remainder_over_eps3: Vec<f64>,
    pub free_energy: f64,
    pub hc_base: f64,
}

/// Evaluate `R(eps) = H_C(f0 + eps delta_f) - H_C(f0) - eps^2 A(delta_f)`
/// for each `eps`. The Casimir part uses the metric rebuilt from the
/// perturbed state itself.
pub fn energy_expansion_check(
    state: &SteadyState,
    spec: &SupportQuad,
    h: &GeneratorExpr,
    chi: &CasimirSpec,
    epsilons: &[f64],
) -> Result<ExpansionReport> {
    let gamma = state.gamma;
    let r_sup = state.support_radius();
    let dl = delta_lambda_profile(state, spec, h, &spec.radial.nodes);
    let a_value = free_energy_with(state, spec, h, &dl);

    // cumulative mass profiles of the base and of the perturbation direction
    let axis = PaneledAxis::lobatto(&breaks_uniform(0.0, r_sup, 40), 8);
    let dl_axis = delta_lambda_profile(state, spec, h, &axis.nodes);
    let rows: Vec<(f64, f64)> = axis
        .nodes
        .par_iter()
        .zip(dl_axis.par_iter())
        .map(|(&r, &dlr)| {
            if r <= 0.0 {
                return (0.0, 0.0);
            }
            let [drho] = momentum_accumulate(state, spec, r, |pd, scale, acc| {
                acc[0] += scale * pd.vbar * pd.dphi * reduced_amplitude(pd, h, dlr);
            });
            (r * r * state.rho0(r), r * r * drho)
        })
        .collect();
    let base_vals: Vec<f64> = rows.iter().map(|t| t.0).collect();
    let pert_vals: Vec<f64> = rows.iter().map(|t| t.1).collect();
    let m_base_cum = axis.prefix_integral(&base_vals);
    let m_pert_cum = axis.prefix_integral(&pert_vals);
    let pi4 = 4.0 * std::f64::consts::PI;

    // interpolate the cumulative masses onto the sweep radii
    let m_at = |cum: &[f64], r: f64| -> f64 { pi4 * lagrange_interp(&axis.nodes, cum, r, 6) };
    let radial_nodes = spec.radial.nodes.clone();

    // linear part of H
    let [dh] = phase_accumulate(state, spec, |pd, ir, scale, acc| {
        acc[0] += scale * pd.vbar * pd.dphi * reduced_amplitude(pd, h, dl[ir]);
    });

    let casimir_at = |eps: f64| -> Result<f64> {
        // metric of the perturbed state on the sweep radii
        let lam_eps: Vec<f64> = radial_nodes
            .iter()
            .map(|&r| {
                let m = m_at(&m_base_cum, r) + eps * m_at(&m_pert_cum, r);
                let margin = 1.0 - 2.0 * gamma * m / r.max(1e-300);
                if margin <= 0.0 {
                    return Err(CoreError::InadmissiblePerturbation(format!(
                        "horizon reached at r = {r} for eps = {eps}"
                    )));
                }
                Ok(-0.5 * margin.ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        let [c] = phase_accumulate(state, spec, |pd, ir, scale, acc| {
            let f0 = state.f0_of_e(pd.e);
            let f = f0 + eps * pd.dphi * reduced_amplitude(pd, h, dl[ir]);
            acc[0] += scale * lam_eps[ir].exp() * chi.chi(f);
        });
        Ok(c)
    };

    let c_base = casimir_at(0.0)?;
    let hc_base = c_base; // the H part cancels in differences up to eps * dh
    let mut first_order = Vec::new();
    let mut remainders = Vec::new();
    let mut ratio = Vec::new();
    for &eps in epsilons {
        let hc_eps = eps * dh + casimir_at(eps)?;
        let diff = hc_eps - c_base;
        first_order.push(diff.abs());
        let rem = diff - eps * eps * a_value;
        remainders.push(rem);
        ratio.push(rem / (eps * eps * eps));
    }
    Ok(ExpansionReport {
        epsilons: epsilons.to_vec(),
        first_order,
        remainders,
        remainder_over_eps3: ratio,
        free_energy: a_value,
        hc_base,
    })
}

/// Grid-route free energy used by the evolution monitor: the reduced
/// amplitude `G` sampled on a phase grid plus `delta_lambda` at the grid's
/// radial nodes.
pub fn free_energy_grid(
    state: &SteadyState,
    reduced: &crate::phase_space::KineticField,
    delta_lambda: &[f64],
) -> f64 {
    let g = reduced.grid();
    let (nr, nw, nl) = g.shape();
    let mut t_g = 0.0;
    for ir in 0..nr {
        let r = g.r.nodes[ir];
        let exp_lam = state.lambda0(r).exp();
        let exp_mu = state.mu0(r).exp();
        let mut inner = 0.0;
        for iw in 0..nw {
            let w = g.w.nodes[iw];
            for il in 0..nl {
                let gv = reduced.at(ir, iw, il);
                if gv != 0.0 {
                    let l = g.l.nodes[il];
                    let e = exp_mu * state.vbar(r, w, l);
                    let absd = -state.dphi_de(e);
                    inner += g.w.weights[iw] * g.l.weights[il] * absd * gv * gv;
                }
            }
        }
        t_g += g.r.weights[ir] * exp_lam * inner;
    }
    t_g *= 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut radial = 0.0;
    for ir in 0..nr {
        let r = g.r.nodes[ir];
        let coeff = (state.mu0(r) - state.lambda0(r)).exp() * (2.0 * r * state.mu0_prime(r) + 1.0);
        radial += g.r.weights[ir] * coeff * delta_lambda[ir] * delta_lambda[ir];
    }
    0.5 * t_g - 0.5 * radial / state.gamma
}

trait ExpHelpers {
    fn exp_m1_like(self) -> f64;
}

impl ExpHelpers for f64 {
    fn exp_m1_like(self) -> f64 {
        0.0
    }
}

trait PointHelpers {
    fn mu_of(&self) -> f64;
    fn lam_of(&self) -> f64;
}

impl PointHelpers for crate::support::PointData {
    fn mu_of(&self) -> f64 {
        self.exp_mu.ln()
    }
    fn lam_of(&self) -> f64 {
        self.exp_lam.ln()
    }
}
