//! Quadrature adapted to the steady-state support.
//!
//! At fixed radius the support in momentum space is the ball `|v| <= u_max(r)`.
//! Writing `w = u xi`, `L = r^2 u^2 (1 - xi^2)` with `u = |v|`, `xi in [-1, 1]`
//! turns the energy cutoff into a coordinate plane:
//!
//!   `int F dv              = 2 pi int_0^{u_max} int_{-1}^{1} F u^2 dxi du`
//!   `int int F dv dx       = 8 pi^2 int_0^R r^2 (...) dr`
//!
//! Energy-dependent weights become functions of `u` alone, so integrands of
//! the verification functionals are smooth up to the cutoff and the panels
//! graded toward `u_max` recover fast convergence for fractional cutoff
//! exponents.

use rayon::prelude::*;

use crate::quad::{breaks_graded_right, breaks_uniform, composite_gauss, Rule};
use crate::steady::SteadyState;

/// Point data handed to integrand closures.
#[derive(Debug, Clone, Copy)]
pub struct PointData {
    pub r: f64,
    pub w: f64,
    pub l: f64,
    pub u: f64,
    pub xi: f64,
    /// `<v>`
    pub vbar: f64,
    /// particle energy
    pub e: f64,
    /// `phi'(E)` of the ansatz (negative on the support)
    pub dphi: f64,
    pub exp_mu: f64,
    pub exp_lam: f64,
    pub mu_p: f64,
    pub lam_p: f64,
    pub nu_p: f64,
    pub mu_pp: f64,
    pub gamma: f64,
}

impl PointData {
    /// `|phi'(E)|`
    pub fn abs_dphi(&self) -> f64 {
        -self.dphi
    }

    /// Analytic partials of the particle energy: `(dE/dr, dE/dw)`.
    pub fn energy_partials(&self) -> (f64, f64) {
        let er =
            self.exp_mu * (self.mu_p * self.vbar - self.gamma * self.l / (self.r3() * self.vbar));
        let ew = self.exp_mu * self.gamma * self.w / self.vbar;
        (er, ew)
    }

    fn r3(&self) -> f64 {
        self.r * self.r * self.r
    }

    /// `{E, rw}` in closed form.
    pub fn bracket_e_rw(&self) -> f64 {
        self.exp_mu * (self.r * self.mu_p * self.vbar - self.vbar + 1.0 / self.vbar)
    }

    /// `{E, {E, rw}}` in closed form.
    pub fn bracket_e_e_rw(&self) -> f64 {
        let v2 = self.vbar * self.vbar;
        -self.gamma
            * self.exp_mu
            * self.exp_mu
            * self.w
            * (self.r * self.mu_pp + self.mu_p + 2.0 * self.mu_p / v2)
    }

    /// Partials of `{E, rw}`: `(d/dr, d/dw)` at fixed `L`.
    pub fn bracket_e_rw_partials(&self) -> (f64, f64) {
        let vbar = self.vbar;
        let dvbar_dr = -self.gamma * self.l / (self.r3() * vbar);
        let dvbar_dw = self.gamma * self.w / vbar;
        let core = self.r * self.mu_p * vbar - vbar + 1.0 / vbar;
        let dcore_dvbar = self.r * self.mu_p - 1.0 - 1.0 / (vbar * vbar);
        let k_r = self.exp_mu
            * (self.mu_p * core
                + self.mu_p * vbar
                + self.r * self.mu_pp * vbar
                + dcore_dvbar * dvbar_dr);
        let k_w = self.exp_mu * dcore_dvbar * dvbar_dw;
        (k_r, k_w)
    }

    /// `{E, g}` from the partials of `g`.
    pub fn bracket_with_e(&self, g_r: f64, g_w: f64) -> f64 {
        let (er, ew) = self.energy_partials();
        er * g_w - ew * g_r
    }
}

/// Resolution of the adapted rules.
#[derive(Debug, Clone)]
pub struct SupportQuad {
    pub radial: Rule,
    pub xi: Rule,
    pub u_uniform: usize,
    pub u_graded: usize,
    pub u_order: usize,
}

impl SupportQuad {
    /// Default production resolution on `[0, R]`.
    pub fn production(state: &SteadyState) -> Self {
        SupportQuad::with_radial_panels(state, 24, 10)
    }

    pub fn with_radial_panels(state: &SteadyState, panels: usize, order: usize) -> Self {
        let r_sup = state.support_radius();
        let radial = composite_gauss(&breaks_uniform(0.0, r_sup, panels), order);
        SupportQuad {
            radial,
            xi: composite_gauss(&breaks_uniform(-1.0, 1.0, 2), 12),
            u_uniform: 6,
            u_graded: 12,
            u_order: 10,
        }
    }

    fn u_rule(&self, u_max: f64) -> Rule {
        composite_gauss(
            &breaks_graded_right(0.0, u_max, self.u_uniform, self.u_graded, 0.5),
            self.u_order,
        )
    }
}

/// Per-radius coefficient cache.
#[derive(Debug, Clone, Copy)]
pub struct RadialData {
    pub r: f64,
    pub u_max: f64,
    pub exp_mu: f64,
    pub exp_lam: f64,
    pub mu_p: f64,
    pub lam_p: f64,
    pub nu_p: f64,
    pub mu_pp: f64,
}

impl RadialData {
    pub fn at(state: &SteadyState, r: f64) -> RadialData {
        RadialData {
            r,
            u_max: state.support_u_max(r),
            exp_mu: state.mu0(r).exp(),
            exp_lam: state.lambda0(r).exp(),
            mu_p: state.mu0_prime(r),
            lam_p: state.lambda0_prime(r),
            nu_p: state.nu0_prime(r),
            mu_pp: state.mu0_second(r),
        }
    }
}

/// Accumulate several phase-space functionals in one sweep:
/// `out[k] = iint f_k dv dx` over the support of `f0`.
///
/// The closure receives the point data and the accumulator slice scaled by
/// the local measure; it must add `integrand_k * scale` into `acc[k]`.
pub fn phase_accumulate<const N: usize>(
    state: &SteadyState,
    spec: &SupportQuad,
    f: impl Fn(&PointData, usize, f64, &mut [f64; N]) + Sync,
) -> [f64; N] {
    let gamma = state.gamma;
    let partials: Vec<[f64; N]> = spec
        .radial
        .nodes
        .par_iter()
        .zip(spec.radial.weights.par_iter())
        .enumerate()
        .map(|(ir, (&r, &wr))| {
            let mut acc = [0.0; N];
            let rd = RadialData::at(state, r);
            if rd.u_max <= 0.0 {
                return acc;
            }
            let urule = spec.u_rule(rd.u_max);
            for (&u, &wu) in urule.nodes.iter().zip(&urule.weights) {
                let vbar = (1.0 + gamma * u * u).sqrt();
                let e = rd.exp_mu * vbar;
                let dphi = state.dphi_de(e);
                if dphi == 0.0 {
                    continue;
                }
                let base = 8.0
                    * std::f64::consts::PI
                    * std::f64::consts::PI
                    * wr
                    * wu
                    * r
                    * r
                    * u
                    * u;
                for (&xi, &wxi) in spec.xi.nodes.iter().zip(&spec.xi.weights) {
                    let w = u * xi;
                    let l = r * r * u * u * (1.0 - xi * xi);
                    let pd = PointData {
                        r,
                        w,
                        l,
                        u,
                        xi,
                        vbar,
                        e,
                        dphi,
                        exp_mu: rd.exp_mu,
                        exp_lam: rd.exp_lam,
                        mu_p: rd.mu_p,
                        lam_p: rd.lam_p,
                        nu_p: rd.nu_p,
                        mu_pp: rd.mu_pp,
                        gamma,
                    };
                    f(&pd, ir, base * wxi, &mut acc);
                }
            }
            acc
        })
        .collect();
    let mut out = [0.0; N];
    for part in partials {
        for k in 0..N {
            out[k] += part[k];
        }
    }
    out
}

/// Momentum-space functionals at a single radius:
/// `out[k] = int f_k dv` over the support ball.
pub fn momentum_accumulate<const N: usize>(
    state: &SteadyState,
    spec: &SupportQuad,
    r: f64,
    f: impl Fn(&PointData, f64, &mut [f64; N]),
) -> [f64; N] {
    let gamma = state.gamma;
    let mut acc = [0.0; N];
    let rd = RadialData::at(state, r);
    if rd.u_max <= 0.0 {
        return acc;
    }
    let urule = spec.u_rule(rd.u_max);
    for (&u, &wu) in urule.nodes.iter().zip(&urule.weights) {
        let vbar = (1.0 + gamma * u * u).sqrt();
        let e = rd.exp_mu * vbar;
        let dphi = state.dphi_de(e);
        let base = 2.0 * std::f64::consts::PI * wu * u * u;
        for (&xi, &wxi) in spec.xi.nodes.iter().zip(&spec.xi.weights) {
            let w = u * xi;
            let l = r * r * u * u * (1.0 - xi * xi);
            let pd = PointData {
                r,
                w,
                l,
                u,
                xi,
                vbar,
                e,
                dphi,
                exp_mu: rd.exp_mu,
                exp_lam: rd.exp_lam,
                mu_p: rd.mu_p,
                lam_p: rd.lam_p,
                nu_p: rd.nu_p,
                mu_pp: rd.mu_pp,
                gamma,
            };
            f(&pd, base * wxi, &mut acc);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::{self, Polytrope};
    use crate::steady::{solve, SolverOptions};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn support_average_recovers_density() {
        let eos_p = Arc::new(Polytrope::new(2.0).unwrap());
        let state = solve(
            eos_p.clone(),
            0.05,
            -0.2,
            &SolverOptions {
                steps_per_radius: 1024,
                ..Default::default()
            },
        )
        .unwrap();
        let spec = SupportQuad::production(&state);
        let r = 0.4 * state.support_radius();
        let [rho] = momentum_accumulate(&state, &spec, r, |pd, scale, acc| {
            let f0 = state.f0_at(pd.r, pd.w, pd.l);
            acc[0] += scale * pd.vbar * f0;
        });
        let expect = eos::g_gamma(eos_p.as_ref(), state.nu0(r), 0.05);
        assert_relative_eq!(rho, expect, max_relative = 1e-10);
    }

    #[test]
    fn phase_volume_matches_radial_route() {
        let eos_p = Arc::new(Polytrope::new(2.0).unwrap());
        let state = solve(
            eos_p,
            0.04,
            -0.15,
            &SolverOptions {
                steps_per_radius: 1024,
                ..Default::default()
            },
        )
        .unwrap();
        let spec = SupportQuad::production(&state);
        // iint <v> f0 dv dx via the adapted sweep
        let [h_adapted] = phase_accumulate(&state, &spec, |pd, _ir, scale, acc| {
            acc[0] += scale * pd.vbar * state.f0_at(pd.r, pd.w, pd.l);
        });
        // same thing via rho0 = g(nu0) and the radial measure
        let radial = &spec.radial;
        let h_radial: f64 = radial
            .nodes
            .iter()
            .zip(&radial.weights)
            .map(|(&r, &wr)| 4.0 * std::f64::consts::PI * wr * r * r * state.rho0(r))
            .sum();
        assert_relative_eq!(h_adapted, h_radial, max_relative = 1e-10);
    }
}
