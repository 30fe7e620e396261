//! Microscopic equation of state and derived density functions.
//!
//! The ansatz for an isotropic steady state is `f0 = Phi((E - 1) / gamma)`
//! with a cutoff at particle energy 1. Polytropes `Phi(eta) = (-eta)^k` are
//! built in; anything satisfying the same monotone-cutoff contract can be
//! plugged in through [`MicroEos`].

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::quad::{breaks_graded_right, composite_gauss, Rule};

/// Microscopic ansatz profile `Phi`: continuous, strictly decreasing on the
/// negative axis, zero on `[0, inf)`.
pub trait MicroEos: Send + Sync {
    /// `Phi(eta)`
    fn phi(&self, eta: f64) -> f64;
    /// `Phi'(eta)`, zero for `eta >= 0`
    fn dphi(&self, eta: f64) -> f64;
    /// exponent `k` of the vanishing rate `Phi ~ (-eta)^k` at the cutoff,
    /// used to grade quadrature panels
    fn cutoff_exponent(&self) -> f64;
    fn kind(&self) -> &'static str;
}

/// `Phi(eta) = (-eta)^k` for `eta < 0`, zero otherwise, with `0 < k < 7/2`.
#[derive(Debug, Clone, Copy)]
pub struct Polytrope {
    pub k: f64,
}

impl Polytrope {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k < 3.5) {
            return Err(CoreError::Parameter(format!(
                "polytropic exponent must lie in (0, 3.5), got {k}"
            )));
        }
        Ok(Polytrope { k })
    }
}

impl MicroEos for Polytrope {
    fn phi(&self, eta: f64) -> f64 {
        if eta < 0.0 {
            (-eta).powf(self.k)
        } else {
            0.0
        }
    }

    fn dphi(&self, eta: f64) -> f64 {
        // unbounded at 0- for k < 1; callers integrate with graded panels
        if eta < 0.0 {
            -self.k * (-eta).powf(self.k - 1.0)
        } else {
            0.0
        }
    }

    fn cutoff_exponent(&self) -> f64 {
        self.k
    }

    fn kind(&self) -> &'static str {
        "polytrope"
    }
}

/// `phi_gamma(E) = Phi((E - 1) / gamma)`.
pub fn phi_gamma(eos: &dyn MicroEos, e: f64, gamma: f64) -> Result<f64> {
    if gamma <= 0.0 {
        return Err(CoreError::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(eos.phi((e - 1.0) / gamma))
}

/// `d/dE phi_gamma(E) = Phi'((E - 1) / gamma) / gamma`; strictly negative
/// for `E < 1` on the support.
pub fn dphi_gamma(eos: &dyn MicroEos, e: f64, gamma: f64) -> Result<f64> {
    if gamma <= 0.0 {
        return Err(CoreError::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(eos.dphi((e - 1.0) / gamma) / gamma)
}

/// Largest momentum magnitude in the support at potential value `nu`:
/// the root of `exp(gamma nu) sqrt(1 + gamma u^2) = 1`, or zero for
/// `nu >= 0` (empty support).
pub fn u_max(nu: f64, gamma: f64) -> f64 {
    if nu >= 0.0 {
        return 0.0;
    }
    (((-2.0 * gamma * nu).exp_m1()) / gamma).sqrt()
}

fn u_rule(nu: f64, gamma: f64, refine: usize) -> Option<Rule> {
    let um = u_max(nu, gamma);
    if um <= 0.0 {
        return None;
    }
    let breaks = breaks_graded_right(0.0, um, 6 + refine, 14 + refine, 0.5);
    Some(composite_gauss(&breaks, 12))
}

/// Reduced spatial density: `rho0 = g_gamma(nu0)`.
///
/// `g(nu) = 4 pi int_0^{u_max} Phi((e^{gamma nu} sqrt(1 + gamma u^2) - 1)/gamma)
///            sqrt(1 + gamma u^2) u^2 du`, zero for `nu >= 0`.
pub fn g_gamma(eos: &dyn MicroEos, nu: f64, gamma: f64) -> f64 {
    let Some(rule) = u_rule(nu, gamma, 0) else {
        return 0.0;
    };
    let a = (gamma * nu).exp();
    4.0 * std::f64::consts::PI
        * rule.integrate(|u| {
            let root = (1.0 + gamma * u * u).sqrt();
            eos.phi((a * root - 1.0) / gamma) * root * u * u
        })
}

/// Reduced pressure: `p0 = h_gamma(nu0)`.
pub fn h_gamma(eos: &dyn MicroEos, nu: f64, gamma: f64) -> f64 {
    let Some(rule) = u_rule(nu, gamma, 0) else {
        return 0.0;
    };
    let a = (gamma * nu).exp();
    4.0 * std::f64::consts::PI / 3.0
        * rule.integrate(|u| {
            let root = (1.0 + gamma * u * u).sqrt();
            eos.phi((a * root - 1.0) / gamma) * u.powi(4) / root
        })
}

/// `d g_gamma / d nu`, by differentiating under the integral sign.
pub fn g_gamma_prime(eos: &dyn MicroEos, nu: f64, gamma: f64) -> f64 {
    let Some(rule) = u_rule(nu, gamma, 4) else {
        return 0.0;
    };
    let a = (gamma * nu).exp();
    4.0 * std::f64::consts::PI
        * rule.integrate(|u| {
            let root = (1.0 + gamma * u * u).sqrt();
            eos.dphi((a * root - 1.0) / gamma) * a * root * root * u * u
        })
}

/// `d h_gamma / d nu`.
pub fn h_gamma_prime(eos: &dyn MicroEos, nu: f64, gamma: f64) -> f64 {
    let Some(rule) = u_rule(nu, gamma, 4) else {
        return 0.0;
    };
    let a = (gamma * nu).exp();
    4.0 * std::f64::consts::PI / 3.0
        * rule.integrate(|u| {
            let root = (1.0 + gamma * u * u).sqrt();
            eos.dphi((a * root - 1.0) / gamma) * a * u.powi(4)
        })
}

/// Newtonian reduced density `4 pi int_nu^0 Phi(E) sqrt(2 (E - nu)) dE`,
/// via the substitution `E = nu + t^2` which removes the square-root kink.
pub fn g_newton(eos: &dyn MicroEos, nu: f64) -> f64 {
    if nu >= 0.0 {
        return 0.0;
    }
    let t_max = (-nu).sqrt();
    let breaks = breaks_graded_right(0.0, t_max, 6, 14, 0.5);
    let rule = composite_gauss(&breaks, 12);
    8.0 * std::f64::consts::PI * std::f64::consts::SQRT_2
        * rule.integrate(|t| eos.phi(nu + t * t) * t * t)
}

/// A Casimir generator `chi` with `chi(0) = 0`, carried as closures.
#[derive(Clone)]
pub struct CasimirSpec {
    pub name: String,
    chi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    chi_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for CasimirSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CasimirSpec({})", self.name)
    }
}

impl CasimirSpec {
    pub fn new(
        name: impl Into<String>,
        chi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        chi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CasimirSpec {
            name: name.into(),
            chi: Arc::new(chi),
            chi_prime: Arc::new(chi_prime),
        }
    }

    /// `chi(s) = s^p` for integer `p >= 2`.
    pub fn power(p: i32) -> Self {
        assert!(p >= 2);
        CasimirSpec::new(
            format!("s^{p}"),
            move |s: f64| s.powi(p),
            move |s: f64| p as f64 * s.powi(p - 1),
        )
    }

    /// `chi(s) = s * exp(-s)`; smooth, vanishing at zero.
    pub fn damped_linear() -> Self {
        CasimirSpec::new(
            "s exp(-s)",
            |s: f64| s * (-s).exp(),
            |s: f64| (1.0 - s) * (-s).exp(),
        )
    }

    pub fn chi(&self, s: f64) -> f64 {
        (self.chi)(s)
    }

    pub fn chi_prime(&self, s: f64) -> f64 {
        (self.chi_prime)(s)
    }
}

/// The generator whose first variation cancels the energy's: on the range of
/// `f0`, `chi'(s) = -(1 - gamma s^{1/k})`, hence
/// `chi(s) = -s + gamma s^{1 + 1/k} / (1 + 1/k)`.
///
/// Below the range (`s < 0`, reachable when a perturbed state dips slightly
/// negative at the cutoff surface) the extension `chi(s) = -s` keeps the
/// generator C^1 with `chi(0) = 0`.
pub fn casimir_chi_from_state(eos: &Polytrope, gamma: f64) -> CasimirSpec {
    let k = eos.k;
    let q = 1.0 + 1.0 / k;
    CasimirSpec::new(
        format!("energy-matched(k={k}, gamma={gamma})"),
        move |s: f64| {
            if s <= 0.0 {
                -s
            } else {
                -s + gamma * s.powf(q) / q
            }
        },
        move |s: f64| {
            if s <= 0.0 {
                -1.0
            } else {
                -(1.0 - gamma * s.powf(1.0 / k))
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn polytrope_pointwise_values() {
        let p = Polytrope::new(2.0).unwrap();
        assert_abs_diff_eq!(p.phi(-1.0), 1.0);
        assert_abs_diff_eq!(p.dphi(-1.0), -2.0);
        assert_eq!(p.phi(0.5), 0.0);
        assert_eq!(p.dphi(0.5), 0.0);
        let p32 = Polytrope::new(1.5).unwrap();
        assert_abs_diff_eq!(p32.phi(-4.0), 8.0);
        assert!(Polytrope::new(0.0).is_err());
        assert!(Polytrope::new(3.5).is_err());
    }

    #[test]
    fn rescaled_profile_cutoff_and_values() {
        let p = Polytrope::new(2.0).unwrap();
        for gamma in [0.01, 0.1, 1.0] {
            assert_eq!(phi_gamma(&p, 1.0, gamma).unwrap(), 0.0);
            assert_eq!(phi_gamma(&p, 1.3, gamma).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(phi_gamma(&p, 0.9, 0.1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dphi_gamma(&p, 0.9, 0.1).unwrap(), -20.0, epsilon = 1e-12);
        assert!(phi_gamma(&p, 0.9, 0.0).is_err());
        // strictly negative slope below the cutoff
        for e in [0.2, 0.6, 0.9999] {
            assert!(dphi_gamma(&p, e, 0.05).unwrap() < 0.0);
        }
    }

    #[test]
    fn reduced_densities_vanish_without_support() {
        let p = Polytrope::new(2.0).unwrap();
        assert_eq!(g_gamma(&p, 0.0, 0.1), 0.0);
        assert_eq!(h_gamma(&p, 0.2, 0.1), 0.0);
        assert_eq!(g_newton(&p, 0.0), 0.0);
    }

    #[test]
    fn newtonian_density_matches_closed_form() {
        // For the polytrope, g_N(nu) = 4 pi sqrt(2) B(3/2, k+1) (-nu)^{k + 3/2}.
        let k = 2.0;
        let p = Polytrope::new(k).unwrap();
        // B(3/2, 3) = 16/105
        let c = 4.0 * std::f64::consts::PI * std::f64::consts::SQRT_2 * (16.0 / 105.0);
        for nu in [-0.5, -0.2, -0.05] {
            assert_relative_eq!(g_newton(&p, nu), c * (-nu).powf(k + 1.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn small_gamma_limit_is_first_order() {
        let p = Polytrope::new(2.0).unwrap();
        let nu = -0.15;
        let exact = g_newton(&p, nu);
        let e1 = (g_gamma(&p, nu, 0.02) - exact).abs();
        let e2 = (g_gamma(&p, nu, 0.01) - exact).abs();
        let ratio = e1 / e2;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "expected first-order convergence, ratio {ratio}"
        );
    }

    #[test]
    fn density_derivatives_match_finite_differences() {
        let p = Polytrope::new(2.0).unwrap();
        let (nu, gamma) = (-0.12, 0.05);
        let d = 1e-6;
        let fd_g = (g_gamma(&p, nu + d, gamma) - g_gamma(&p, nu - d, gamma)) / (2.0 * d);
        let fd_h = (h_gamma(&p, nu + d, gamma) - h_gamma(&p, nu - d, gamma)) / (2.0 * d);
        assert_relative_eq!(g_gamma_prime(&p, nu, gamma), fd_g, max_relative = 1e-7);
        assert_relative_eq!(h_gamma_prime(&p, nu, gamma), fd_h, max_relative = 1e-7);
    }

    #[test]
    fn state_matched_chi_values() {
        let p = Polytrope::new(1.0).unwrap();
        let chi = casimir_chi_from_state(&p, 0.1);
        assert_eq!(chi.chi(0.0), 0.0);
        assert_abs_diff_eq!(chi.chi_prime(2.0), -0.8);
        // C^1 across zero
        assert_abs_diff_eq!(chi.chi_prime(1e-12), -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(chi.chi_prime(-1.0), -1.0);
    }
}
